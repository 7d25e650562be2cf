"""Band-pass FIR design, zero-phase filtering, periodogram and windowing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Epoch


@dataclass(frozen=True)
class FirSpec:
    order: int = 30
    f_low: float = 8.0
    f_high: float = 30.0
    fs: float = 250.0
    window: str = "hamming"

    def __post_init__(self):
        if self.order <= 0 or self.order % 2:
            raise ValueError(f"filter order must be a positive even integer, got {self.order}")
        if not (0 < self.f_low < self.f_high < self.fs / 2):
            raise ValueError(
                f"band edges must satisfy 0 < f_low < f_high < fs/2, "
                f"got [{self.f_low}, {self.f_high}] at fs={self.fs}"
            )
        if self.window != "hamming":
            raise ValueError(f"unsupported window {self.window!r}")


@dataclass(frozen=True, eq=False)
class FirKernel:
    coefficients: np.ndarray
    spec: FirSpec | None = None

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray
    fs: float
    n_fft: int

    @property
    def df(self) -> float:
        return self.fs / self.n_fft


@dataclass(frozen=True)
class WindowSpec:
    length_s: float = 2.0
    overlap_frac: float = 0.5

    def __post_init__(self):
        if self.length_s <= 0:
            raise ValueError("window length must be positive")
        if not (0 <= self.overlap_frac < 1):
            raise ValueError("overlap fraction must lie in [0, 1)")

    def samples(self, fs: float) -> tuple[int, int]:
        """Return (window length, stride) in samples."""
        length = int(round(self.length_s * fs))
        stride = int(round(self.length_s * (1 - self.overlap_frac) * fs))
        return length, max(stride, 1)


def design_bandpass_fir(spec: FirSpec) -> FirKernel:
    """Hamming-windowed sinc band-pass of length ``order + 1``.

    Built as the difference of two windowed-sinc low-passes at ``f_high`` and
    ``f_low``, each scaled to unit DC gain so the band-pass rejects DC
    exactly. Only the first half is evaluated and mirrored, so the taps are
    exactly symmetric.
    """
    half = spec.order // 2
    m = np.arange(-half, 1, dtype=np.float64)  # -M .. 0
    n = np.arange(half + 1)
    window = 0.54 - 0.46 * np.cos(2 * np.pi * n / spec.order)

    def lowpass_half(cutoff):
        wc = 2 * cutoff / spec.fs
        h = wc * np.sinc(wc * m) * window
        return h / (2 * h[:-1].sum() + h[-1])

    left = lowpass_half(spec.f_high) - lowpass_half(spec.f_low)
    taps = np.concatenate([left, left[-2::-1]])
    taps.flags.writeable = False
    return FirKernel(taps, spec)


def frequency_response(kernel: FirKernel, freqs, fs: float) -> np.ndarray:
    """Complex response by direct summation of ``c[n] exp(-j 2 pi f n / fs)``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    n = np.arange(len(kernel.coefficients))
    phase = np.exp(-2j * np.pi * np.outer(freqs, n) / fs)
    return phase @ kernel.coefficients


def _fir_forward(taps: np.ndarray, x: np.ndarray) -> np.ndarray:
    # causal FIR along the last axis, zero initial state
    n = x.shape[-1]
    out = np.zeros_like(x)
    for k, c in enumerate(taps):
        if k >= n:
            break
        out[..., k:] += c * x[..., : n - k]
    return out


def filtfilt(kernel: FirKernel, signal) -> np.ndarray:
    """Forward-backward FIR filtering along the last axis.

    Both ends are extended by odd reflection of ``3 * order`` samples, which
    are stripped again before returning. Accepts 1-D or stacked signals.
    """
    taps = np.asarray(kernel.coefficients, dtype=np.float64)
    x = np.asarray(signal, dtype=np.float64)
    order = len(taps) - 1
    n = x.shape[-1]
    if n <= 3 * (order + 1):
        raise ValueError(
            f"signal of {n} samples too short for order-{order} filtfilt "
            f"(need more than {3 * (order + 1)})"
        )
    pad = 3 * order
    first = x[..., :1]
    last = x[..., -1:]
    head = 2 * first - x[..., pad:0:-1]
    tail = 2 * last - x[..., -2 : -pad - 2 : -1]
    padded = np.concatenate([head, x, tail], axis=-1)
    y = _fir_forward(taps, padded)
    y = _fir_forward(taps, y[..., ::-1])[..., ::-1]
    return np.ascontiguousarray(y[..., pad : pad + n])


def periodogram(signal, fs: float) -> PsdEstimate:
    """One-sided, untapered periodogram with ``n_fft == len(signal)``.

    ``P(f_k) = |X_k|^2 / (fs N)``, doubled for ``0 < f_k < fs/2``. Stacked
    input (..., N) gives stacked power.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("periodogram needs at least 2 samples")
    spectrum = np.fft.rfft(x, axis=-1)
    power = (spectrum.real**2 + spectrum.imag**2) / (fs * n)
    if n % 2 == 0:
        power[..., 1:-1] *= 2
    else:
        power[..., 1:] *= 2
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    return PsdEstimate(freqs, power, float(fs), n)


class EmptyBandError(ValueError):
    pass


def band_power(psd: PsdEstimate, f1: float, f2: float) -> np.ndarray:
    """Trapezoidal integral of the PSD over bins with ``f1 <= f <= f2``.

    Returns linear power (one value per stacked series). Use :func:`to_db`
    for decibels.
    """
    nyquist = psd.fs / 2
    if not (0 <= f1 < f2 <= nyquist + 1e-12):
        raise ValueError(f"band [{f1}, {f2}] must satisfy 0 <= f1 < f2 <= {nyquist}")
    mask = (psd.freqs >= f1) & (psd.freqs <= f2)
    if not mask.any():
        raise EmptyBandError(f"no frequency bins in [{f1}, {f2}] Hz")
    p = psd.power[..., mask]
    if p.shape[-1] == 1:
        return p[..., 0] * 0.0
    return np.trapezoid(p, psd.freqs[mask], axis=-1)


def to_db(linear) -> np.ndarray:
    linear = np.asarray(linear, dtype=np.float64)
    if np.any(linear <= 0):
        raise ValueError("decibels undefined for non-positive power")
    return 10 * np.log10(linear)


def slide_windows(epoch: Epoch, spec: WindowSpec) -> list[np.ndarray]:
    """Cut overlapping windows from an epoch; each is a view into ``epoch.data``."""
    length, stride = spec.samples(epoch.fs)
    total = epoch.n_samples
    if total < length:
        raise ValueError(f"epoch of {total} samples shorter than window of {length}")
    count = (total - length) // stride + 1
    return [epoch.data[:, i * stride : i * stride + length] for i in range(count)]
