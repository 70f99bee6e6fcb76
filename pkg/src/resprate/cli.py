"""Command-line interface.

Exit codes: 0 on success, 1 for input/manifest problems (missing or
malformed files), 2 for configuration or validation errors.

Channel convention: ``c1`` is channel index 0 (microphone over the mid
nostril), ``c2`` is index 1 (microphone near the left nostril, usually the
stronger signal); ``both`` feeds the network two channels.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import figures, report
from .audio import (decimation_factor, downsample, extract_segment, load_wav,
                    select_channels)
from .errors import (AudioFormatError, LabelParseError, ManifestError,
                     ScenarioError)
from .harness import (parse_manifest, plan_folds, prepare_subject, run_fold,
                      run_tcn_detection, write_corpus)
from .labels import parse_labels, reference_rates, windows
from .metrics import agreement_report, median_iqr
from .postprocess import DEFAULT_VARIANCE_THRESHOLD, calibrate_variance_gate
from .spmethod import SpConfig, estimate_rates
from .synth import SynthScenario, generate, scenario_from_json, scenario_to_json
from .tcn import TcnConfig, TrainSpec, build_model
from .tcn import load as load_model
from .tcn import save as save_model
from .tcn import train as train_model

ANALYSIS_RATES = (4410, 2100, 1050, 490)
DEPTH_GRID = (4, 8, 12)

CHANNEL_HELP = ("microphone channel: c1 = index 0 (mid nostril), "
                "c2 = index 1 (left nostril, typically the stronger signal)")


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-s", type=float, default=10.0,
                   help="analysis window length in seconds (default 10)")
    p.add_argument("--hop-s", type=float, default=5.0,
                   help="hop between windows in seconds (default 5)")


def _add_out_dir(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", required=True, help="directory for the outputs")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, write only the delimited files")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_rr_profile(text: str) -> tuple[tuple[float, float], ...]:
    """'120' or '0:100,30:140' -> rate-profile breakpoints."""
    text = text.strip()
    if ":" not in text:
        return ((0.0, float(text)),)
    points = []
    for part in text.split(","):
        t, _, bpm = part.partition(":")
        points.append((float(t), float(bpm)))
    return tuple(points)


def _load_audio_at_rate(path: str, rate: float, channel: str,
                        start: float | None = None, stop: float | None = None):
    seg = load_wav(path)
    if start is not None or stop is not None:
        seg = extract_segment(seg, start or 0.0, stop if stop is not None
                              else seg.duration)
    seg = select_channels(seg, channel)
    factor = decimation_factor(seg.sample_rate, rate)
    if factor > 1:
        seg = downsample(seg, factor)
    return seg


def _sp_report(args, out: Path, est_rates, events_series) -> None:
    report.write_rates_csv(est_rates, out / "rates.csv")
    report.write_events_csv(events_series, out / "events.csv")
    series_for_plot = [est_rates]
    if args.labels:
        track = parse_labels(args.labels)
        wins = [e.window for e in est_rates.entries]
        ref = reference_rates(track, wins)
        report.write_rates_csv(ref, out / "rates_reference.csv")
        agg = agreement_report([(ref, est_rates)])
        report.write_pairs_csv(agg, out / "pairs.csv")
        summary = report.summary_tables("SP", None, args.channel, args.rate, agg)
        (out / "summary.txt").write_text(summary)
        print(summary, end="")
        series_for_plot.insert(0, ref)
        if not args.no_figures:
            figures.bland_altman_figure(agg, out / "bland_altman.png")
            figures.correlation_figure(agg, out / "correlation.png")
    if not args.no_figures:
        figures.rates_figure(series_for_plot, out / "rates.png")


def cmd_synth(args: argparse.Namespace) -> int:
    if args.scenario:
        base = scenario_from_json(args.scenario)
    else:
        base = SynthScenario()
    overrides = {}
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    if args.rate is not None:
        overrides["rate_hz"] = args.rate
    if args.rr is not None:
        overrides["rr_profile"] = _parse_rr_profile(args.rr)
    if args.snr is not None:
        overrides["snr_db"] = args.snr
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        from dataclasses import replace
        base = replace(base, **overrides)
    base.validate()
    out = _out_dir(args)
    if args.subjects:
        manifest = write_corpus(base, args.subjects, out)
        print(f"wrote {args.subjects}-subject corpus: {manifest}")
        return 0
    from .audio import save_wav, write_meta_sidecar
    from .labels import write_labels
    seg, track = generate(base)
    stem = f"synth_seed{base.seed}"
    save_wav(seg, out / f"{stem}.wav")
    write_meta_sidecar(seg.meta, out / f"{stem}.wav")
    write_labels(track, out / f"{stem}_labels.txt")
    truth = reference_rates(track, windows(seg.duration, args.window_s, args.hop_s))
    report.write_rates_csv(truth, out / f"{stem}_truth.csv")
    scenario_to_json(base, out / f"{stem}_scenario.json")
    print(f"wrote {out / (stem + '.wav')} ({seg.duration:.1f} s at {seg.sample_rate:g} Hz, "
          f"{len(track.intervals)} exhalations)")
    return 0


def cmd_rr_from_labels(args: argparse.Namespace) -> int:
    track = parse_labels(args.labels)
    if args.audio:
        duration = load_wav(args.audio).duration
    elif args.duration is not None:
        duration = args.duration
    else:
        duration = track.end
    out = _out_dir(args)
    series = reference_rates(track, windows(duration, args.window_s, args.hop_s))
    report.write_rates_csv(series, out / "rates_reference.csv")
    if not args.no_figures:
        figures.rates_figure([series], out / "rates.png")
    defined = [e.rr for e in series.entries if e.rr is not None]
    print(f"{len(series.entries)} windows, {len(defined)} with a rate")
    return 0


def cmd_detect_sp(args: argparse.Namespace) -> int:
    seg = _load_audio_at_rate(args.audio, args.rate, args.channel,
                              args.start, args.stop)
    cfg = SpConfig()
    est, per_window = estimate_rates(seg, args.window_s, args.hop_s, cfg)
    from .postprocess import EventSeries
    events_series = [EventSeries(w, tuple(float(t) for t in ev), "sp")
                     for w, ev in per_window]
    out = _out_dir(args)
    _sp_report(args, out, est, events_series)
    print(f"detect-sp: {len(est.entries)} windows from {seg.duration:.1f} s "
          f"at {seg.sample_rate:g} Hz")
    return 0


def _train_spec_from_args(args: argparse.Namespace) -> TrainSpec:
    return TrainSpec(
        learning_rate=args.lr,
        batch_size=args.batch,
        chunk_samples=int(round(args.chunk_s * args.rate)),
        max_epochs=args.max_epochs,
        patience=args.patience,
    )


def _tcn_config_from_args(args: argparse.Namespace) -> TcnConfig:
    channels = 2 if args.channel == "both" else 1
    return TcnConfig(depth=args.depth, input_channels=channels,
                     channels_per_block=args.width, kernel_size=args.kernel,
                     dropout=args.dropout)


def cmd_train_tcn(args: argparse.Namespace) -> int:
    entries = parse_manifest(args.manifest)
    by_id = {e.subject_id: e for e in entries}
    if args.test_subject and args.test_subject not in by_id:
        raise ValueError(f"test subject {args.test_subject!r} not in manifest")
    if args.val_subject and args.val_subject not in by_id:
        raise ValueError(f"validation subject {args.val_subject!r} not in manifest")
    pool = [sid for sid in by_id if sid != args.test_subject]
    if args.val_subject:
        val_id = args.val_subject
        if val_id == args.test_subject:
            raise ValueError("validation and test subject must differ")
    else:
        rng = np.random.default_rng([abs(args.seed), 0])
        val_id = pool[int(rng.integers(len(pool)))]
    train_ids = [sid for sid in pool if sid != val_id]
    if not train_ids:
        raise ValueError("no subjects left to train on")

    prepared = {sid: prepare_subject(by_id[sid], args.rate, args.channel)
                for sid in pool}
    config = _tcn_config_from_args(args)
    spec = _train_spec_from_args(args)
    model = build_model(config, seed=abs(args.seed))
    result = train_model(model, [prepared[s].train_pair for s in train_ids],
                         [prepared[val_id].train_pair], spec,
                         seed=abs(args.seed) + 1)

    out = _out_dir(args)
    save_model(model, out / "model.tcn", sample_rate=args.rate,
               channel_mode=args.channel)
    report.write_training_log_csv(result.history, out / "training_log.csv")
    meta = {
        "train_subjects": train_ids,
        "val_subject": val_id,
        "test_subject": args.test_subject or None,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "stopped_early": result.stopped_early,
        "epochs_run": len(result.history),
        "seed": args.seed,
    }
    (out / "training_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    if not args.no_figures:
        figures.training_curve_figure(result.history, out / "training_curve.png")
    stop = "early stop" if result.stopped_early else "max epochs"
    print(f"trained {len(result.history)} epochs ({stop}); "
          f"best val loss {result.best_val_loss:.4f} at epoch {result.best_epoch}; "
          f"model: {out / 'model.tcn'}")
    return 0


def cmd_detect_tcn(args: argparse.Namespace) -> int:
    model, meta = load_model(args.model)
    rate = meta["sample_rate"] or 0.0
    channel = meta["channel_mode"] or ""
    if not rate or not channel:
        raise ValueError(
            f"{args.model}: model file lacks rate/channel metadata; retrain "
            "with this package's train-tcn")
    seg = _load_audio_at_rate(args.audio, rate, channel, args.start, args.stop)
    if seg.n_channels != model.config.input_channels:
        raise ValueError(
            f"model expects {model.config.input_channels} channel(s), "
            f"audio yields {seg.n_channels}")
    detection = run_tcn_detection(model, seg, args.window_s, args.hop_s,
                                  args.mvvar_threshold)
    out = _out_dir(args)
    report.write_events_csv(detection.events, out / "events.csv")
    report.write_rates_csv(detection.rates, out / "rates.csv")
    report.write_timing_json(detection.elapsed_s, seg.duration,
                             detection.timing_percent, out / "timing.json")
    series_for_plot = [detection.rates]
    if args.labels:
        track = parse_labels(args.labels)
        wins = windows(seg.duration, args.window_s, args.hop_s)
        ref = reference_rates(track, wins)
        report.write_rates_csv(ref, out / "rates_reference.csv")
        agg = agreement_report([(ref, detection.rates)])
        report.write_pairs_csv(agg, out / "pairs.csv")
        summary = report.summary_tables("TCN", model.config.depth, channel,
                                        rate, agg)
        (out / "summary.txt").write_text(summary)
        print(summary, end="")
        series_for_plot.insert(0, ref)
        if not args.no_figures:
            figures.bland_altman_figure(agg, out / "bland_altman.png")
            figures.correlation_figure(agg, out / "correlation.png")
    if not args.no_figures:
        figures.rates_figure(series_for_plot, out / "rates.png")
    print(f"detect-tcn: computed labels for {seg.duration:.1f} s in "
          f"{detection.elapsed_s:.2f} s ({detection.timing_percent:.1f}% of duration)")
    return 0


def cmd_eval_loo(args: argparse.Namespace) -> int:
    entries = parse_manifest(args.manifest)
    prepared = {e.subject_id: prepare_subject(e, args.rate, args.channel)
                for e in entries}
    plans = plan_folds([e.subject_id for e in entries], args.seed)
    config = _tcn_config_from_args(args)
    spec = _train_spec_from_args(args)

    out = _out_dir(args)
    fold_rows = []
    results = []
    for plan in plans:
        result = run_fold(plan, prepared, config, spec, args.seed,
                          args.window_s, args.hop_s, args.mvvar_threshold)
        results.append(result)
        fold_rows.append({
            "fold": plan.index, "test_subject": plan.test_subject,
            "val_subject": plan.val_subject, "f1": result.f1,
            "mae": _fold_mae(result), "n_pairs": result.n_pairs,
        })
        print(f"fold {plan.index}: test={plan.test_subject} "
              f"val={plan.val_subject} F1={result.f1:.3f}")

    with open(out / "folds.csv", "w") as fh:
        fh.write("fold,test_subject,val_subject,train_subjects\n")
        for plan in plans:
            fh.write(f"{plan.index},{plan.test_subject},{plan.val_subject},"
                     f"{'+'.join(plan.train_subjects)}\n")
    report.write_fold_metrics_csv(fold_rows, out / "per_fold.csv")

    agg = agreement_report([(r.ref_rates, r.est_rates) for r in results])
    f1s = [r.f1 for r in results]
    f1_median, f1_iqr = median_iqr(f1s)
    report.write_pairs_csv(agg, out / "pairs.csv")
    summary = report.summary_tables("TCN", args.depth, args.channel, args.rate,
                                    agg, f1_median, f1_iqr)
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    if not args.no_figures:
        figures.bland_altman_figure(agg, out / "bland_altman.png")
        figures.correlation_figure(agg, out / "correlation.png")
    return 0


def _fold_mae(result) -> float | None:
    from .metrics import mae_between
    return mae_between(result.ref_rates, result.est_rates)


def cmd_calibrate(args: argparse.Namespace) -> int:
    seg = _load_audio_at_rate(args.audio, args.rate, args.channel)
    stats = calibrate_variance_gate(seg.samples, seg.sample_rate)
    print(json.dumps(stats, indent=2))
    print(f"# default gate threshold is {DEFAULT_VARIANCE_THRESHOLD}; pick a value "
          "between the silent floor and the in-event variance", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resprate",
        description="Exhalation detection and respiratory-rate estimation "
                    "from exercise audio.",
        epilog=CHANNEL_HELP)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scenario or corpus")
    p.add_argument("scenario", nargs="?", help="scenario JSON file (optional)")
    p.add_argument("--duration", type=float, help="override duration in seconds")
    p.add_argument("--rate", type=float, help="override sample rate in Hz")
    p.add_argument("--rr", help="override rate profile: '120' or '0:100,30:140'")
    p.add_argument("--snr", type=float, help="override burst-to-noise SNR in dB")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--subjects", type=int,
                   help="write a leave-one-subject-out corpus of N subjects")
    _add_window_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rr-from-labels", help="windowed reference rates from labels")
    p.add_argument("--labels", required=True, help="Audacity-style label file")
    p.add_argument("--audio", help="WAV to take the duration from")
    p.add_argument("--duration", type=float, help="duration when no WAV is given")
    _add_window_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_rr_from_labels)

    p = sub.add_parser("detect-sp",
                       help="signal-processing rate estimation on one channel")
    p.add_argument("--audio", required=True)
    p.add_argument("--channel", choices=["c1", "c2"], default="c2", help=CHANNEL_HELP)
    p.add_argument("--rate", type=int, choices=ANALYSIS_RATES, default=4410,
                   help="working sample rate (plain decimation gets there)")
    p.add_argument("--labels", help="labels for an agreement report")
    p.add_argument("--start", type=float, help="segment start in seconds")
    p.add_argument("--stop", type=float, help="segment end in seconds")
    _add_window_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_detect_sp)

    p = sub.add_parser("train-tcn", help="train a network on a labeled corpus")
    p.add_argument("--manifest", required=True,
                   help="TSV: subject<TAB>wav<TAB>labels[<TAB>kind]")
    p.add_argument("--rate", type=int, choices=ANALYSIS_RATES, required=True)
    p.add_argument("--channel", choices=["c1", "c2", "both"], required=True,
                   help=CHANNEL_HELP)
    p.add_argument("--depth", type=int, choices=DEPTH_GRID, required=True)
    p.add_argument("--width", type=int, default=32,
                   help="channels per block (default 32)")
    p.add_argument("--kernel", type=int, default=5, help="kernel taps (default 5)")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--chunk-s", type=float, default=2.0,
                   help="training chunk length in seconds (default 2)")
    p.add_argument("--batch", type=int, default=8, help="minibatch size (default 8)")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--val-subject", help="fixed validation subject (default: seeded draw)")
    p.add_argument("--test-subject", help="subject to hold out entirely")
    p.add_argument("--seed", type=int, default=0)
    _add_out_dir(p)
    p.set_defaults(func=cmd_train_tcn)

    p = sub.add_parser("detect-tcn", help="run a trained model on a recording")
    p.add_argument("--audio", required=True)
    p.add_argument("--model", required=True, help="model file from train-tcn")
    p.add_argument("--labels", help="labels for an agreement report")
    p.add_argument("--start", type=float, help="segment start in seconds")
    p.add_argument("--stop", type=float, help="segment end in seconds")
    p.add_argument("--mvvar-threshold", type=float,
                   default=DEFAULT_VARIANCE_THRESHOLD,
                   help="variance-gate threshold; see the calibrate command")
    _add_window_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_detect_tcn)

    p = sub.add_parser("eval-loo",
                       help="leave-one-subject-out training and evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rate", type=int, choices=ANALYSIS_RATES, required=True)
    p.add_argument("--channel", choices=["c1", "c2", "both"], required=True,
                   help=CHANNEL_HELP)
    p.add_argument("--depth", type=int, choices=DEPTH_GRID, required=True)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--kernel", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--chunk-s", type=float, default=2.0)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--mvvar-threshold", type=float,
                   default=DEFAULT_VARIANCE_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    _add_window_flags(p)
    _add_out_dir(p)
    p.set_defaults(func=cmd_eval_loo)

    p = sub.add_parser("calibrate",
                       help="report the variance-gate statistic's percentiles")
    p.add_argument("--audio", required=True)
    p.add_argument("--channel", choices=["c1", "c2", "both"], default="both",
                   help=CHANNEL_HELP)
    p.add_argument("--rate", type=int, choices=ANALYSIS_RATES, default=4410)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError,
            AudioFormatError, LabelParseError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
