"""Exhalation labels, analysis windows and the cycle-rate formula.

Label files are tab-separated text as exported by Audacity:
``start<TAB>end<TAB>tag`` with times in seconds.  A tag of ``E`` or
``exhalation`` (case-insensitive) marks an exhalation interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LabelParseError, LabelValidationError

EXHALATION_TAGS = ("e", "exhalation")

#: Dynamic respiratory rates outside this band are physiologically suspect
#: for exercising horses.
PHYSIOLOGICAL_RANGE_BPM = (10.0, 250.0)


def is_exhalation_tag(tag: str) -> bool:
    return tag.strip().lower() in EXHALATION_TAGS


@dataclass(frozen=True)
class LabelTrack:
    """Sorted annotation intervals (start_s, end_s, tag) for one recording."""

    intervals: tuple[tuple[float, float, str], ...]
    horse_id: str = ""

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.intervals, key=lambda iv: iv[0]))
        for start, end, tag in ordered:
            if not end > start:
                raise LabelValidationError(
                    f"interval [{start}, {end}] {tag!r} is empty or inverted")
        exh = [iv for iv in ordered if is_exhalation_tag(iv[2])]
        for (s0, e0, _), (s1, e1, _) in zip(exh, exh[1:]):
            if s1 < e0:
                raise LabelValidationError(
                    f"exhalation intervals [{s0}, {e0}] and [{s1}, {e1}] overlap")
        object.__setattr__(self, "intervals", ordered)

    def exhalations(self) -> list[tuple[float, float]]:
        """(start, end) of each exhalation interval, sorted by start."""
        return [(s, e) for s, e, t in self.intervals if is_exhalation_tag(t)]

    def onsets(self) -> np.ndarray:
        """Exhalation start times — the respiratory events of a recording."""
        return np.array([s for s, _ in self.exhalations()], dtype=np.float64)

    @property
    def end(self) -> float:
        return max((e for _, e, _ in self.intervals), default=0.0)


def parse_labels(path: str | Path, horse_id: str = "") -> LabelTrack:
    """Read an Audacity label file.

    Raises LabelParseError (with line number) on malformed rows and
    LabelValidationError on inverted or overlapping exhalation intervals.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such label file: {path}")
    intervals: list[tuple[float, float, str]] = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise LabelParseError(f"{path}:{lineno}: expected 'start<TAB>end<TAB>tag'")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise LabelParseError(f"{path}:{lineno}: non-numeric time ({exc})") from exc
        tag = parts[2].strip() if len(parts) > 2 else ""
        intervals.append((start, end, tag))
    return LabelTrack(tuple(intervals), horse_id=horse_id)


def write_labels(track: LabelTrack, path: str | Path) -> None:
    """Write intervals back out in the same tab-separated format."""
    lines = [f"{s:.6f}\t{e:.6f}\t{t}" for s, e, t in track.intervals]
    Path(path).write_text("\n".join(lines) + "\n")


def to_binary_series(track: LabelTrack, rate: float, duration: float) -> np.ndarray:
    """Per-sample {0,1} exhalation mask of length round(duration * rate).

    Sample i is 1 iff i/rate falls inside an exhalation interval, with
    half-open [start, end) membership so adjacent intervals stay disjoint.
    """
    n = int(round(duration * rate))
    series = np.zeros(n, dtype=np.int8)
    for start, end in track.exhalations():
        if start > duration + 1e-9:
            raise LabelValidationError(
                f"interval start {start} s is past the end of the data ({duration} s)")
        i0 = int(np.ceil(start * rate - 1e-9))
        i1 = int(np.ceil(end * rate - 1e-9))
        series[max(i0, 0):min(i1, n)] = 1
    return series


@dataclass(frozen=True)
class AnalysisWindow:
    """One fixed-length analysis window anchored on the hop grid."""

    index: int
    start: float
    length: float = 10.0
    hop: float = 5.0

    @property
    def end(self) -> float:
        return self.start + self.length

    def contains(self, t: float) -> bool:
        """Half-open membership: start <= t < end."""
        return self.start <= t < self.end


def windows(duration: float, length_s: float = 10.0, hop_s: float = 5.0
            ) -> list[AnalysisWindow]:
    """Windows of length_s every hop_s starting at t = 0.

    Only fully contained windows are returned; a trailing partial window is
    dropped.  30 s at the defaults yields starts 0, 5, 10, 15, 20.
    """
    if not 0 < hop_s <= length_s:
        raise ValueError(f"need 0 < hop <= length, got hop={hop_s} length={length_s}")
    out: list[AnalysisWindow] = []
    k = 0
    while k * hop_s + length_s <= duration + 1e-9:
        out.append(AnalysisWindow(k, k * hop_s, length_s, hop_s))
        k += 1
    return out


def cycle_durations(events: np.ndarray) -> np.ndarray:
    """Durations between consecutive events (both endpoints in the window)."""
    events = np.asarray(events, dtype=np.float64)
    if events.size >= 2 and np.any(np.diff(events) <= 0):
        raise ValueError("events must be strictly increasing")
    if events.size < 2:
        return np.empty(0, dtype=np.float64)
    return np.diff(events)


def rr_from_durations(durations: np.ndarray) -> float | None:
    """Breaths per minute as the mean of instantaneous cycle rates.

    Averaging 60/T_n term-wise weights each cycle equally, which differs
    from 60 / mean(T): durations (0.4, 0.6) give 125, not 120.  Returns
    None when fewer than one full cycle is available.
    """
    durations = np.asarray(durations, dtype=np.float64)
    if durations.size == 0:
        return None
    if np.any(durations <= 0):
        raise ValueError("cycle durations must be positive")
    return float(60.0 * np.mean(1.0 / durations))


def rate_in_window(events: np.ndarray, window: AnalysisWindow) -> tuple[float | None, int]:
    """(rate, cycle count) from the events whose times fall in the window."""
    events = np.asarray(events, dtype=np.float64)
    inside = events[(events >= window.start) & (events < window.end)]
    durations = cycle_durations(inside)
    return rr_from_durations(durations), int(durations.size)


@dataclass(frozen=True)
class RateEntry:
    """Respiratory rate for one analysis window; rr is None when undefined."""

    window: AnalysisWindow
    rr: float | None
    n_cycles: int

    @property
    def physiological(self) -> bool:
        """False when the rate exists but falls outside the plausible band."""
        if self.rr is None:
            return True
        lo, hi = PHYSIOLOGICAL_RANGE_BPM
        return lo <= self.rr <= hi


@dataclass(frozen=True)
class RateSeries:
    """Windowed respiratory-rate estimates from one source."""

    entries: tuple[RateEntry, ...]
    source: str

    def rates(self) -> list[float | None]:
        return [e.rr for e in self.entries]

    def window_starts(self) -> list[float]:
        return [e.window.start for e in self.entries]


def rates_from_events(events: np.ndarray, wins: list[AnalysisWindow],
                      source: str) -> RateSeries:
    """Windowed rates from a flat list of event times."""
    entries = []
    for w in wins:
        rr, n = rate_in_window(events, w)
        entries.append(RateEntry(w, rr, n))
    return RateSeries(tuple(entries), source)


def reference_rates(track: LabelTrack, wins: list[AnalysisWindow]) -> RateSeries:
    """Ground-truth windowed rates from labeled exhalation onsets."""
    return rates_from_events(track.onsets(), wins, source="reference")
