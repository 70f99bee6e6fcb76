"""Single-file binary model format.

Layout (all integers little-endian):

    8s   magic  b"RRTCN01\\n"
    u32  format version (1)
    u32  depth, channels_per_block, kernel_size, input_channels, classes
    f64  dropout
    i64  rng_seed
    u32  n_dilations, then u32 * n dilations
    f64  sample_rate hint (0 when unset)
    u16  channel-mode string length, then utf-8 bytes ("c1"/"c2"/"both"/"")
    u32  tensor count, then per tensor:
         u16 name length, utf-8 name, u8 ndim, u64 * ndim shape,
         raw '<f8' data in C order

Tensor shapes are fully determined by the config; load() rebuilds the model
from the config block and refuses tensors whose name or shape disagrees.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import TcnConfig, TcnModel, build_model

MAGIC = b"RRTCN01\n"
FORMAT_VERSION = 1


def save(model: TcnModel, path: str | Path, sample_rate: float = 0.0,
         channel_mode: str = "") -> None:
    """Write the model; identical parameters give byte-identical files."""
    cfg = model.config
    mode = channel_mode.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<IIIIII", FORMAT_VERSION, cfg.depth, cfg.channels_per_block,
                    cfg.kernel_size, cfg.input_channels, cfg.classes),
        struct.pack("<d", cfg.dropout),
        struct.pack("<q", model.rng_seed),
        struct.pack("<I", len(cfg.dilations)),
        struct.pack(f"<{len(cfg.dilations)}I", *cfg.dilations),
        struct.pack("<d", float(sample_rate)),
        struct.pack("<H", len(mode)),
        mode,
    ]
    params = model.parameters()
    parts.append(struct.pack("<I", len(params)))
    for name, arr in params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise ValueError("model file is truncated")
        values = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return values

    def take_bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError("model file is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out


def load(path: str | Path) -> tuple[TcnModel, dict[str, object]]:
    """Read a model file; returns (model, metadata).

    metadata holds 'sample_rate' (float, 0 when unset) and 'channel_mode'.
    """
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    if r.take_bytes(len(MAGIC)) != MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    version, depth, width, kernel, c_in, classes = r.take("<IIIIII")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    (dropout,) = r.take("<d")
    (rng_seed,) = r.take("<q")
    (n_dil,) = r.take("<I")
    dilations = r.take(f"<{n_dil}I")
    (sample_rate,) = r.take("<d")
    (mode_len,) = r.take("<H")
    channel_mode = r.take_bytes(mode_len).decode("utf-8")
    config = TcnConfig(depth=depth, input_channels=c_in, channels_per_block=width,
                       kernel_size=kernel, dropout=dropout, classes=classes,
                       dilations=tuple(dilations))
    model = build_model(config, seed=rng_seed)
    params = model.parameters()
    (n_tensors,) = r.take("<I")
    if n_tensors != len(params):
        raise ValueError(
            f"{path}: {n_tensors} tensors stored, config implies {len(params)}")
    for _ in range(n_tensors):
        (name_len,) = r.take("<H")
        name = r.take_bytes(name_len).decode("utf-8")
        (ndim,) = r.take("<B")
        shape = r.take(f"<{ndim}Q")
        if name not in params:
            raise ValueError(f"{path}: unexpected tensor {name!r}")
        expected = params[name].shape
        if tuple(shape) != expected:
            raise ValueError(
                f"{path}: tensor {name!r} has shape {tuple(shape)}, "
                f"config implies {expected}")
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take_bytes(count * 8), dtype="<f8").reshape(shape)
        params[name][...] = data
    if r.pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - r.pos} trailing bytes")
    return model, {"sample_rate": sample_rate, "channel_mode": channel_mode}
