"""Mel-spectrogram augmentation policies with a DPD-driven hyperparameter search."""

from melaug.augment import (
    FreqMask,
    FreqWarp,
    LoudnessCtl,
    TimeLenCtl,
    TimeMask,
    TimeWarp,
    apply,
)
from melaug.signal import MelConfig, MelSpectrogram, Waveform, extract_mel, griffin_lim

__version__ = "0.1.0"

__all__ = [
    "FreqMask",
    "FreqWarp",
    "LoudnessCtl",
    "MelConfig",
    "MelSpectrogram",
    "TimeLenCtl",
    "TimeMask",
    "TimeWarp",
    "Waveform",
    "apply",
    "extract_mel",
    "griffin_lim",
]
