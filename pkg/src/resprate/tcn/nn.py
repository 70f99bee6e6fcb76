"""Temporal convolutional network for per-sample exhalation labeling.

Everything is plain numpy with hand-written reverse-mode gradients.  A block
is: dilated conv -> channel norm -> spatial dropout -> dilated conv ->
channel norm -> ReLU -> spatial dropout, plus a residual connection from the
block input (1x1 projection when the channel count changes).  Convolutions
are acausal: zero-padded symmetrically so sample t sees both past and
future within the receptive field.  A 1x1 head maps the last block's
channels to per-class scores at every sample.

Normalization statistics are taken across channels independently at each
time step (with per-channel scale and shift), so apart from the
convolutions every stage is pointwise in time and the receptive field is
exactly the sum of the conv spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_EPS = 1e-5


def default_dilations(depth: int) -> tuple[int, ...]:
    """Doubling dilation schedule, capped at 64: 1, 2, 4, ... 64, 64, ..."""
    return tuple(2 ** min(i, 6) for i in range(depth))


@dataclass(frozen=True)
class TcnConfig:
    """Architecture description; all sizes in samples/channels.

    The published depth grid is {4, 8, 12}; any depth >= 1 is accepted here
    so that reduced instances remain constructible (the CLI enforces the
    grid).  kernel_size must be odd to keep the convolutions centered.
    """

    depth: int
    input_channels: int
    channels_per_block: int = 32
    kernel_size: int = 5
    dropout: float = 0.1
    classes: int = 2
    dilations: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.input_channels < 1:
            raise ValueError(f"input_channels must be >= 1, got {self.input_channels}")
        if self.channels_per_block < 2:
            raise ValueError("channels_per_block must be >= 2 (norm needs spread)")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.classes < 2:
            raise ValueError(f"classes must be >= 2, got {self.classes}")
        dil = self.dilations or default_dilations(self.depth)
        if len(dil) != self.depth or any(d < 1 for d in dil):
            raise ValueError(f"need {self.depth} positive dilations, got {dil}")
        object.__setattr__(self, "dilations", tuple(int(d) for d in dil))


def receptive_field_radius(config: TcnConfig) -> int:
    """Half-width, in samples, of the output's dependence on the input.

    Each of the two convolutions in a block widens the cone by
    (kernel-1)/2 * dilation on each side.
    """
    return sum((config.kernel_size - 1) * d for d in config.dilations)


def rescale_symmetric(x: np.ndarray) -> np.ndarray:
    """Per-channel division by the absolute peak; all-zero channels pass through."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (channels, samples), got shape {x.shape}")
    peak = np.max(np.abs(x), axis=1, keepdims=True)
    return x / np.where(peak == 0.0, 1.0, peak)


def _tap_windows(xp: np.ndarray, kernel: int, dilation: int, t: int) -> np.ndarray:
    """Read-only strided view (B, C, kernel, t) with win[..., j, i] = xp[..., i + j*d]."""
    s0, s1, s2 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(xp.shape[0], xp.shape[1], kernel, t),
        strides=(s0, s1, dilation * s2, s2), writeable=False)


class Conv1d:
    """Dilated 1-D convolution over (batch, channels, time), 'same' length."""

    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int,
                 rng: np.random.Generator):
        std = np.sqrt(2.0 / (c_in * kernel))
        self.w = rng.normal(0.0, std, size=(c_out, c_in, kernel))
        self.b = np.zeros(c_out)
        self.dilation = int(dilation)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._xp: np.ndarray | None = None

    @property
    def pad(self) -> int:
        return (self.w.shape[2] - 1) // 2 * self.dilation

    def forward(self, x: np.ndarray, collect: bool) -> np.ndarray:
        k, d, pad = self.w.shape[2], self.dilation, self.pad
        t = x.shape[2]
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
        # Contract (c_in, kernel) in one GEMM: (c_out, B, T) -> (B, c_out, T).
        win = _tap_windows(xp, k, d, t)
        y = np.tensordot(self.w, win, axes=((1, 2), (1, 2))).transpose(1, 0, 2)
        y = y + self.b[None, :, None]
        if collect:
            self._xp = xp
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xp = self._xp
        if xp is None:
            raise RuntimeError("backward called without a collected forward pass")
        k, d, pad = self.w.shape[2], self.dilation, self.pad
        t = dy.shape[2]
        self.db = dy.sum(axis=(0, 2))
        # Fresh gradient arrays each pass so previously returned gradient
        # dicts stay valid after another forward/backward.
        win = _tap_windows(xp, k, d, t)
        self.dw = np.tensordot(dy, win, axes=((0, 2), (0, 3)))
        g = np.tensordot(self.w, dy, axes=(0, 1))  # (c_in, kernel, B, T)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, :, j * d:j * d + t] += g[:, j].transpose(1, 0, 2)
        self._xp = None
        return dxp[:, :, pad:pad + t] if pad else dxp

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def grads(self) -> dict[str, np.ndarray]:
        return {"w": self.dw, "b": self.db}


class ChannelNorm:
    """Normalize across channels at each time step; per-channel scale/shift."""

    def __init__(self, channels: int):
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache: tuple[np.ndarray, np.ndarray] | None = None

    def forward(self, x: np.ndarray, collect: bool) -> np.ndarray:
        mean = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + NORM_EPS)
        xhat = (x - mean) * inv
        if collect:
            self._cache = (xhat, inv)
        return self.gamma[None, :, None] * xhat + self.beta[None, :, None]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a collected forward pass")
        xhat, inv = self._cache
        self.dgamma = (dy * xhat).sum(axis=(0, 2))
        self.dbeta = dy.sum(axis=(0, 2))
        dxhat = dy * self.gamma[None, :, None]
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        self._cache = None
        return inv * (dxhat - m1 - xhat * m2)

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self) -> dict[str, np.ndarray]:
        return {"gamma": self.dgamma, "beta": self.dbeta}


class SpatialDropout:
    """Zero whole channels during training, rescaling the rest by 1/(1-p)."""

    def __init__(self, p: float):
        self.p = float(p)
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool,
                rng: np.random.Generator | None, collect: bool) -> np.ndarray:
        if not training or self.p == 0.0:
            if collect:
                self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = rng.random((x.shape[0], x.shape[1], 1)) >= self.p
        mask = keep / (1.0 - self.p)
        if collect:
            self._mask = mask
        return x * mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return dy
        out = dy * self._mask
        self._mask = None
        return out


class ReLU:
    def __init__(self) -> None:
        self._pos: np.ndarray | None = None

    def forward(self, x: np.ndarray, collect: bool) -> np.ndarray:
        if collect:
            self._pos = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._pos is None:
            raise RuntimeError("backward called without a collected forward pass")
        out = dy * self._pos
        self._pos = None
        return out


class TcnBlock:
    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int,
                 dropout: float, rng: np.random.Generator):
        self.conv1 = Conv1d(c_in, c_out, kernel, dilation, rng)
        self.norm1 = ChannelNorm(c_out)
        self.drop1 = SpatialDropout(dropout)
        self.conv2 = Conv1d(c_out, c_out, kernel, dilation, rng)
        self.norm2 = ChannelNorm(c_out)
        self.relu = ReLU()
        self.drop2 = SpatialDropout(dropout)
        self.proj = Conv1d(c_in, c_out, 1, 1, rng) if c_in != c_out else None

    def forward(self, x: np.ndarray, training: bool,
                rng: np.random.Generator | None, collect: bool) -> np.ndarray:
        h = self.conv1.forward(x, collect)
        h = self.norm1.forward(h, collect)
        h = self.drop1.forward(h, training, rng, collect)
        h = self.conv2.forward(h, collect)
        h = self.norm2.forward(h, collect)
        h = self.relu.forward(h, collect)
        h = self.drop2.forward(h, training, rng, collect)
        shortcut = self.proj.forward(x, collect) if self.proj is not None else x
        return h + shortcut

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.drop2.backward(dy)
        d = self.relu.backward(d)
        d = self.norm2.backward(d)
        d = self.conv2.backward(d)
        d = self.drop1.backward(d)
        d = self.norm1.backward(d)
        dx = self.conv1.backward(d)
        if self.proj is not None:
            dx = dx + self.proj.backward(dy)
        else:
            dx = dx + dy
        return dx

    def named_layers(self) -> list[tuple[str, object]]:
        layers: list[tuple[str, object]] = [
            ("conv1", self.conv1), ("norm1", self.norm1),
            ("conv2", self.conv2), ("norm2", self.norm2),
        ]
        if self.proj is not None:
            layers.append(("proj", self.proj))
        return layers


@dataclass
class TcnModel:
    """Configured network plus its parameters; built via build_model/load."""

    config: TcnConfig
    rng_seed: int
    blocks: list[TcnBlock] = field(repr=False)
    head: Conv1d = field(repr=False)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by a stable dotted name."""
        out: dict[str, np.ndarray] = {}
        for i, block in enumerate(self.blocks):
            for lname, layer in block.named_layers():
                for pname, arr in layer.params().items():
                    out[f"block{i}.{lname}.{pname}"] = arr
        for pname, arr in self.head.params().items():
            out[f"head.{pname}"] = arr
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, block in enumerate(self.blocks):
            for lname, layer in block.named_layers():
                for pname, arr in layer.grads().items():
                    out[f"block{i}.{lname}.{pname}"] = arr
        for pname, arr in self.head.grads().items():
            out[f"head.{pname}"] = arr
        return out

    def forward_batch(self, x: np.ndarray, training: bool = False,
                      rng: np.random.Generator | None = None,
                      collect: bool = False) -> np.ndarray:
        """(B, input_channels, T) -> per-class scores (B, classes, T)."""
        if x.ndim != 3 or x.shape[1] != self.config.input_channels:
            raise ValueError(
                f"expected (batch, {self.config.input_channels}, samples), "
                f"got shape {x.shape}")
        h = x
        for block in self.blocks:
            h = block.forward(h, training, rng, collect)
        return self.head.forward(h, collect)

    def backward_batch(self, dlogits: np.ndarray) -> np.ndarray:
        d = self.head.backward(dlogits)
        for block in reversed(self.blocks):
            d = block.backward(d)
        return d


def build_model(config: TcnConfig, seed: int = 0) -> TcnModel:
    """Freshly initialized network; the same seed gives the same weights."""
    rng = np.random.default_rng(seed)
    blocks = []
    c_in = config.input_channels
    for dilation in config.dilations:
        blocks.append(TcnBlock(c_in, config.channels_per_block, config.kernel_size,
                               dilation, config.dropout, rng))
        c_in = config.channels_per_block
    head = Conv1d(c_in, config.classes, 1, 1, rng)
    return TcnModel(config=config, rng_seed=seed, blocks=blocks, head=head)


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Softmax over the class axis of (B, classes, T) scores."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray
                  ) -> tuple[float, np.ndarray]:
    """Mean per-sample cross-entropy and its gradient wrt the scores."""
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0], logits.shape[2]):
        raise ValueError(
            f"labels shape {labels.shape} does not match scores {logits.shape}")
    p = softmax_probs(logits)
    b_idx = np.arange(logits.shape[0])[:, None]
    t_idx = np.arange(logits.shape[2])[None, :]
    picked = p[b_idx, labels, t_idx]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = p.copy()
    grad[b_idx, labels, t_idx] -= 1.0
    grad /= labels.size
    return loss, grad


def forward(model: TcnModel, x: np.ndarray) -> np.ndarray:
    """Inference on one normalized sequence (channels, T) -> (T, classes).

    Probability rows sum to 1.  No state is mutated, so concurrent calls on
    a shared model are safe.
    """
    logits = model.forward_batch(np.asarray(x, dtype=np.float64)[None])
    return softmax_probs(logits)[0].T


def predict_labels(model: TcnModel, x: np.ndarray) -> np.ndarray:
    """Raw waveform (channels, T) -> {0,1} labels (T,).

    Applies the symmetric rescale first, so the output is invariant under
    positive scaling of the input.  Exact probability ties resolve to 0.
    """
    probs = forward(model, rescale_symmetric(x))
    return np.argmax(probs, axis=1).astype(np.int8)


def loss_and_gradients(model: TcnModel, x: np.ndarray, labels: np.ndarray,
                       training: bool = False,
                       rng: np.random.Generator | None = None
                       ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch plus gradients for every parameter.

    x is (B, channels, T), already normalized; labels is (B, T) ints.
    """
    logits = model.forward_batch(x, training=training, rng=rng, collect=True)
    loss, dlogits = cross_entropy(logits, labels)
    model.backward_batch(dlogits)
    return loss, model.gradients()
