"""Delimited outputs and plain-text summary tables.

Float cells are formatted with six decimals so reruns of a deterministic
pipeline produce byte-identical files; wall-clock timings go to a separate
JSON file that is excluded from that guarantee.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .labels import RateSeries
from .metrics import AgreementReport
from .postprocess import EventSeries


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def write_rates_csv(series: RateSeries, path: str | Path) -> None:
    """Columns: window_start,window_end,rr_bpm,n_cycles,source."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start", "window_end", "rr_bpm", "n_cycles", "source"])
        for e in series.entries:
            writer.writerow([_fmt(e.window.start), _fmt(e.window.end),
                             _fmt(e.rr), e.n_cycles, series.source])


def write_events_csv(series_list: Sequence[EventSeries], path: str | Path) -> None:
    """Columns: time_s,window_index,provenance."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "window_index", "provenance"])
        for s in series_list:
            for t in s.times:
                writer.writerow([_fmt(t), s.window.index, s.provenance])


def write_pairs_csv(report: AgreementReport, path: str | Path) -> None:
    """Pooled window pairs with their Bland-Altman coordinates."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ref_bpm", "est_bpm", "mean_bpm", "diff_bpm"])
        for (ref, est), (mean, diff) in zip(report.pairs, report.ba_coords):
            writer.writerow([_fmt(ref), _fmt(est), _fmt(mean), _fmt(diff)])


def write_fold_metrics_csv(rows: Sequence[dict], path: str | Path) -> None:
    """Per-fold scores: fold,test_subject,val_subject,f1,mae_bpm,n_pairs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "test_subject", "val_subject", "f1", "mae_bpm",
                         "n_pairs"])
        for row in rows:
            writer.writerow([row["fold"], row["test_subject"], row["val_subject"],
                             _fmt(row["f1"]), _fmt(row["mae"]), row["n_pairs"]])


def write_training_log_csv(history: Sequence[tuple[int, float, float]],
                           path: str | Path) -> None:
    """Columns: epoch,train_loss,val_loss."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss, val_loss in history:
            writer.writerow([epoch, _fmt(train_loss), _fmt(val_loss)])


def write_timing_json(elapsed_s: float, audio_s: float, percent: float,
                      path: str | Path) -> None:
    payload = {"elapsed_s": elapsed_s, "audio_s": audio_s,
               "percent_of_duration": percent}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def line(cells: list[str]) -> str:
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return "\n".join([line(headers), line(["-" * w for w in widths])]
                     + [line(r) for r in rows])


def _pm(mean: float | None, halfwidth: float | None) -> str:
    if mean is None:
        return ""
    if halfwidth is None:
        return f"{mean:.2f}"
    return f"{mean:.2f}±{halfwidth:.2f}"


def summary_tables(model_name: str, depth: int | None, channel: str, rate: float,
                   report: AgreementReport,
                   f1_median: float | None = None,
                   f1_iqr: float | None = None) -> str:
    """Detection and agreement tables for one evaluated configuration."""
    base = ["1", model_name, str(depth) if depth else "n/a", channel, f"{rate:g}"]
    blocks = []
    if f1_median is not None:
        blocks.append(_table(
            ["Rank", "Model", "Depth", "Input", "Fs", "F1 median", "F1 IQR"],
            [base + [f"{f1_median:.3f}",
                     f"{f1_iqr:.3f}" if f1_iqr is not None else ""]]))
    blocks.append(_table(
        ["Rank", "Model", "Depth", "Input", "Fs", "MAE±CI (bpm)", "MOD (bpm)",
         "LOA (bpm)"],
        [base + [_pm(report.mae_mean, report.mae_ci),
                 f"{report.mod:.2f}" if report.mod is not None else "",
                 f"{report.loa:.2f}" if report.loa is not None else ""]]))
    if report.slope is not None:
        blocks.append(f"fit: est = {report.slope:.4f}·ref + {report.intercept:.4f}"
                      f"  (R² = {report.r2:.4f}, {len(report.pairs)} windows)")
    return "\n\n".join(blocks) + "\n"
