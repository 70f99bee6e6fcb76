"""Glue between files on disk and the estimators: manifests, corpus
preparation, detection drivers and the leave-one-subject-out evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import (AudioSegment, decimation_factor, downsample, load_wav,
                    save_wav, select_channels, write_meta_sidecar)
from .errors import ManifestError
from .labels import (LabelTrack, RateSeries, parse_labels, reference_rates,
                     to_binary_series, windows, write_labels)
from .metrics import f1_score, time_call, timing_ratio
from .postprocess import (DEFAULT_VARIANCE_THRESHOLD, EventSeries,
                          detect_events, rates_from_event_series)
from .synth import SynthScenario, generate, loso_corpus, scenario_to_json
from .tcn import (TcnConfig, TcnModel, TrainResult, TrainSpec, build_model,
                  predict_labels, train)


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    wav_path: Path
    label_path: Path
    segment_kind: str = ""


def parse_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read a corpus manifest: subject_id<TAB>wav<TAB>labels<TAB>kind rows.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such manifest: {path}")
    root = path.parent
    entries: list[ManifestEntry] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise ManifestError(
                f"{path}:{lineno}: expected subject<TAB>wav<TAB>labels[<TAB>kind]")
        subject, wav, labels = (p.strip() for p in parts[:3])
        if not subject or not wav or not labels:
            raise ManifestError(f"{path}:{lineno}: empty field")
        kind = parts[3].strip() if len(parts) == 4 else ""
        entries.append(ManifestEntry(subject, root / wav, root / labels, kind))
    if not entries:
        raise ManifestError(f"{path}: no usable rows")
    if len({e.subject_id for e in entries}) != len(entries):
        raise ManifestError(f"{path}: duplicate subject ids")
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    root = Path(path).parent
    lines = []
    for e in entries:
        wav = e.wav_path.relative_to(root) if e.wav_path.is_relative_to(root) else e.wav_path
        lab = e.label_path.relative_to(root) if e.label_path.is_relative_to(root) else e.label_path
        lines.append(f"{e.subject_id}\t{wav}\t{lab}\t{e.segment_kind}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class PreparedSubject:
    """One recording resampled and channel-selected for a run."""

    subject_id: str
    seg: AudioSegment
    track: LabelTrack
    label_series: np.ndarray

    @property
    def train_pair(self) -> tuple[np.ndarray, np.ndarray]:
        return self.seg.samples, self.label_series


def prepare_subject(entry: ManifestEntry, rate: float, channel: str
                    ) -> PreparedSubject:
    """Load, pick channels, decimate to the working rate, rasterize labels."""
    seg = load_wav(entry.wav_path)
    seg = select_channels(seg, channel)
    factor = decimation_factor(seg.sample_rate, rate)
    if factor > 1:
        seg = downsample(seg, factor)
    track = parse_labels(entry.label_path, horse_id=entry.subject_id)
    series = to_binary_series(track, seg.sample_rate, seg.duration)
    return PreparedSubject(entry.subject_id, seg, track, series)


@dataclass(frozen=True)
class Detection:
    """Model output plus post-processed events/rates and the compute timing."""

    pred: np.ndarray
    events: list[EventSeries]
    rates: RateSeries
    elapsed_s: float
    timing_percent: float


def run_tcn_detection(model: TcnModel, seg: AudioSegment,
                      window_s: float = 10.0, hop_s: float = 5.0,
                      variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
                      ) -> Detection:
    """Predict per-sample labels and post-process them into windowed rates.

    Only the label computation (normalize + forward + argmax) is timed; file
    handling and post-processing stay outside the clock.
    """
    pred, elapsed = time_call(predict_labels, model, seg.samples)
    wins = windows(seg.duration, window_s, hop_s)
    events = detect_events(pred, seg.samples, seg.sample_rate, wins,
                           variance_threshold=variance_threshold, provenance="tcn")
    rates = rates_from_event_series(events, source="tcn")
    return Detection(pred, events, rates, elapsed,
                     timing_ratio(elapsed, seg.duration))


@dataclass(frozen=True)
class FoldPlan:
    index: int
    test_subject: str
    val_subject: str
    train_subjects: tuple[str, ...]


def plan_folds(subject_ids: list[str], seed: int) -> list[FoldPlan]:
    """One fold per held-out subject; validation drawn from the rest.

    The draw is seeded per fold, so assignments are reproducible and appear
    in the fold log.
    """
    if len(subject_ids) < 3:
        raise ValueError("leave-one-subject-out needs at least 3 subjects")
    plans = []
    for i, test in enumerate(subject_ids):
        rest = [s for s in subject_ids if s != test]
        rng = np.random.default_rng([abs(seed), i])
        val = rest[int(rng.integers(len(rest)))]
        train_ids = tuple(s for s in rest if s != val)
        plans.append(FoldPlan(i, test, val, train_ids))
    return plans


@dataclass(frozen=True)
class FoldResult:
    plan: FoldPlan
    f1: float
    ref_rates: RateSeries
    est_rates: RateSeries
    n_pairs: int
    detection: Detection
    train_result: TrainResult


def run_fold(plan: FoldPlan, subjects: dict[str, PreparedSubject],
             config: TcnConfig, spec: TrainSpec, seed: int,
             window_s: float = 10.0, hop_s: float = 5.0,
             variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> FoldResult:
    """Train on the fold's training subjects and score the held-out one."""
    model_seed = (abs(seed) * 100003 + plan.index) % 2 ** 31
    model = build_model(config, seed=model_seed)
    train_set = [subjects[s].train_pair for s in plan.train_subjects]
    val_set = [subjects[plan.val_subject].train_pair]
    result = train(model, train_set, val_set, spec, seed=model_seed + 1)

    held_out = subjects[plan.test_subject]
    detection = run_tcn_detection(model, held_out.seg, window_s, hop_s,
                                  variance_threshold)
    f1 = f1_score(held_out.label_series, detection.pred)
    wins = windows(held_out.seg.duration, window_s, hop_s)
    ref = reference_rates(held_out.track, wins)
    pairs = sum(1 for a, b in zip(ref.entries, detection.rates.entries)
                if a.rr is not None and b.rr is not None)
    return FoldResult(plan, f1, ref, detection.rates, pairs, detection, result)


def write_corpus(base: SynthScenario, n_subjects: int, out_dir: str | Path
                 ) -> Path:
    """Synthesize a leave-one-subject-out corpus on disk; returns the manifest.

    Per subject: WAV, label file, truth rate CSV, scenario JSON and a
    metadata sidecar, all listed in manifest.tsv.
    """
    from .report import write_rates_csv  # local import to avoid a cycle

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for subject, scn in loso_corpus(base, n_subjects):
        seg, track = generate(scn)
        wav_path = out_dir / f"{subject}.wav"
        label_path = out_dir / f"{subject}_labels.txt"
        save_wav(seg, wav_path)
        write_meta_sidecar(seg.meta, wav_path)
        write_labels(track, label_path)
        truth = reference_rates(track, windows(seg.duration))
        write_rates_csv(truth, out_dir / f"{subject}_truth.csv")
        scenario_to_json(scn, out_dir / f"{subject}_scenario.json")
        entries.append(ManifestEntry(subject, wav_path, label_path, "synthetic"))
    manifest = out_dir / "manifest.tsv"
    write_manifest(entries, manifest)
    return manifest
