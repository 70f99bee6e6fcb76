"""Respiratory-rate estimation from exercise audio recordings.

Two estimators share one windowing and reporting pipeline: a
signal-processing chain (envelope of the filtered microphone signal) and a
temporal convolutional network trained on labeled exhalations.
"""

from .audio import AudioSegment, SegmentMeta, downsample, extract_segment, load_wav
from .labels import (AnalysisWindow, LabelTrack, RateEntry, RateSeries,
                     parse_labels, reference_rates, windows)
from .metrics import AgreementReport, agreement_report
from .postprocess import EventSeries, detect_events
from .spmethod import SpConfig, estimate_rates
from .synth import SynthScenario, generate, loso_corpus
from .tcn import TcnConfig, TcnModel, TrainSpec, build_model, predict_labels, train

__version__ = "0.1.0"

__all__ = [
    "AgreementReport", "AnalysisWindow", "AudioSegment", "EventSeries",
    "LabelTrack", "RateEntry", "RateSeries", "SegmentMeta", "SpConfig",
    "SynthScenario", "TcnConfig", "TcnModel", "TrainSpec", "agreement_report",
    "build_model", "detect_events", "downsample", "estimate_rates",
    "extract_segment", "generate", "load_wav", "loso_corpus", "parse_labels",
    "predict_labels", "reference_rates", "train", "windows", "__version__",
]
