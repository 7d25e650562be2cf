"""Band-pass filtering, PSD channel emphasis and a compact CNN for
three-class motor-imagery EEG decoding."""

from .core import (
    CLASS_NAMES,
    ChannelSet,
    DataError,
    Epoch,
    Trial,
    TrialSet,
    extract_epoch,
    load_trialset,
    save_trialset,
)
from .dsp import FirSpec, WindowSpec, band_power, design_bandpass_fir, filtfilt, periodogram
from .emphasis import EmphasisConfig, compute_weights
from .pipeline import PipelineConfig, WindowSet, preprocess

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "ChannelSet",
    "DataError",
    "EmphasisConfig",
    "Epoch",
    "FirSpec",
    "PipelineConfig",
    "Trial",
    "TrialSet",
    "WindowSet",
    "WindowSpec",
    "band_power",
    "compute_weights",
    "design_bandpass_fir",
    "extract_epoch",
    "filtfilt",
    "load_trialset",
    "periodogram",
    "preprocess",
    "save_trialset",
]
