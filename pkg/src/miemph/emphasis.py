"""Per-channel PSD weights and the channel-emphasis product.

Each channel's weight comes from its band power over ``[f1, f2]`` in the
trial's own MI epoch. The window is then scaled row by row.

Modes
-----
linear-mean-norm
    band power divided by its mean across channels (default).
db-raw
    ``10 log10`` of band power, used verbatim. Values can be negative,
    which flips the sign of the emphasized channel.
minmax
    band power mapped affinely onto ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Epoch
from .dsp import band_power, periodogram

MODES = ("linear-mean-norm", "db-raw", "minmax")


class SilentChannelError(ValueError):
    def __init__(self, channel: int, name: str | None = None):
        self.channel = channel
        label = f"{channel} ({name})" if name else str(channel)
        super().__init__(f"channel {label} has zero band power; dB weight undefined")


@dataclass(frozen=True)
class EmphasisConfig:
    f1: float = 8.0
    f2: float = 30.0
    mode: str = "linear-mean-norm"

    def __post_init__(self):
        if not (0 <= self.f1 < self.f2):
            raise ValueError(f"emphasis band must satisfy 0 <= f1 < f2, got [{self.f1}, {self.f2}]")
        if self.mode not in MODES:
            raise ValueError(f"unknown emphasis mode {self.mode!r}; choose from {MODES}")


@dataclass(frozen=True, eq=False)
class EmphasisWeights:
    weights: np.ndarray
    mode: str
    band_power: np.ndarray | None = None

    def __len__(self):
        return len(self.weights)


def channel_band_power(data: np.ndarray, fs: float, f1: float, f2: float) -> np.ndarray:
    """Linear band power of every row of ``data``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError("epoch must be (channels, samples) with at least 2 samples")
    return band_power(periodogram(data, fs), f1, f2)


def weights_from_power(power: np.ndarray, mode: str) -> np.ndarray:
    power = np.asarray(power, dtype=np.float64)
    if mode == "linear-mean-norm":
        mean = power.mean()
        if mean <= 0:
            return np.ones_like(power)
        return power / mean
    if mode == "db-raw":
        silent = np.flatnonzero(power <= 0)
        if silent.size:
            raise SilentChannelError(int(silent[0]))
        return 10 * np.log10(power)
    if mode == "minmax":
        lo, hi = power.min(), power.max()
        if hi == lo:
            return np.ones_like(power)
        return (power - lo) / (hi - lo)
    raise ValueError(f"unknown emphasis mode {mode!r}")


def compute_weights(epoch: Epoch, cfg: EmphasisConfig = EmphasisConfig()) -> EmphasisWeights:
    power = channel_band_power(epoch.data, epoch.fs, cfg.f1, min(cfg.f2, epoch.fs / 2))
    return EmphasisWeights(weights_from_power(power, cfg.mode), cfg.mode, power)


def apply_emphasis(window, w) -> np.ndarray:
    """Row ``c`` of the result is ``w[c]`` times row ``c`` of ``window``."""
    weights = w.weights if isinstance(w, EmphasisWeights) else np.asarray(w, dtype=np.float64)
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[0] != len(weights):
        raise ValueError(
            f"window has {window.shape[0] if window.ndim else 0} rows but "
            f"{len(weights)} weights were given"
        )
    return window * weights[:, None]
