"""Core signal types and shared numeric primitives.

Everything downstream (preprocessing, training losses, evaluation metrics)
funnels through the handful of primitives defined here so that, e.g., there
is exactly one power-spectral-density convention in the whole package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.signal

from .errors import DegenerateSignalError, ShapeError

__all__ = [
    "Signal",
    "MultiSignal",
    "SegmentBatch",
    "resample",
    "minmax_normalize",
    "pearson_corr",
    "psd",
    "mean_power",
]


@dataclass
class Signal:
    """One channel of uniformly sampled amplitudes.

    Parameters
    ----------
    samples : array
        Amplitude values, arbitrary units. Must be non-empty and finite.
    sample_rate_hz : float
        Sampling rate, > 0.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains NaN or Inf samples")
        self.sample_rate_hz = float(self.sample_rate_hz)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass
class MultiSignal:
    """A group of equal-length, equal-rate channels (e.g. a 4-lead abdominal recording)."""

    channels: list[Signal]

    def __post_init__(self):
        if len(self.channels) < 1:
            raise ValueError("MultiSignal needs at least one channel")
        n = len(self.channels[0])
        rate = self.channels[0].sample_rate_hz
        for ch in self.channels[1:]:
            if len(ch) != n:
                raise ShapeError("all channels must have equal length")
            if ch.sample_rate_hz != rate:
                raise ShapeError("all channels must share one sample rate")

    @property
    def channel_count(self) -> int:
        return len(self.channels)

    @property
    def sample_rate_hz(self) -> float:
        return self.channels[0].sample_rate_hz

    def __len__(self):
        return len(self.channels[0])

    def as_array(self) -> np.ndarray:
        """Stack channels into a (C, n_samples) array."""
        return np.stack([ch.samples for ch in self.channels])


@dataclass
class SegmentBatch:
    """N windows of M samples over C channels — the model's training currency.

    ``data`` has shape (N, M, C). When ``normalized`` is set, every segment
    spans [0, 1] with per-segment extrema 0 and 1, except segments flagged in
    ``degenerate`` (constant windows, e.g. flat-line dropouts).
    """

    data: np.ndarray
    sample_rate_hz: float
    normalized: bool = False
    degenerate: np.ndarray | None = None
    start_indices: np.ndarray | None = None  # window starts in the trimmed record

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ShapeError("SegmentBatch data must be (N, M, C)")
        if self.degenerate is None:
            self.degenerate = np.zeros((self.data.shape[0], self.data.shape[2]), dtype=bool)

    @property
    def n_segments(self) -> int:
        return self.data.shape[0]

    @property
    def segment_len(self) -> int:
        return self.data.shape[1]

    @property
    def channel_count(self) -> int:
        return self.data.shape[2]


def resample(s: Signal, target_rate_hz: float) -> Signal:
    """Band-limited polyphase resampling to a new rate.

    Uses a rational approximation of the rate ratio and a Kaiser-windowed
    sinc prototype; downsampling is anti-alias filtered by construction.
    Duration is preserved to within one sample period.
    """
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be positive")
    if len(s) == 0:
        raise ValueError("cannot resample an empty signal")
    if target_rate_hz == s.sample_rate_hz:
        return Signal(s.samples.copy(), s.sample_rate_hz)
    ratio = Fraction(target_rate_hz / s.sample_rate_hz).limit_denominator(1 << 16)
    up, down = ratio.numerator, ratio.denominator
    out = scipy.signal.resample_poly(s.samples, up, down, window=("kaiser", 5.0))
    return Signal(out, target_rate_hz)


def minmax_normalize(segment: np.ndarray) -> tuple[np.ndarray, bool]:
    """Rescale a segment to span [0, 1].

    Returns ``(normalized, degenerate)``. A constant segment cannot be
    rescaled; it comes back all-zeros with the degenerate flag set instead of
    raising, so batch pipelines survive flat-line dropouts.
    """
    x = np.asarray(segment, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot normalize an empty segment")
    if not np.all(np.isfinite(x)):
        raise ValueError("segment contains NaN or Inf")
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return np.zeros_like(x), True
    return (x - lo) / (hi - lo), False


def pearson_corr(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson's correlation coefficient of two equal-length sequences.

    Symmetric, and invariant under positive affine transforms of either
    argument. Raises :class:`DegenerateSignalError` for constant inputs,
    where the coefficient is undefined.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt(np.dot(xd, xd)) * np.sqrt(np.dot(yd, yd))
    if denom == 0.0:
        raise DegenerateSignalError("correlation undefined for a constant input")
    return float(np.dot(xd, yd) / denom)


def psd(s: Signal | np.ndarray) -> np.ndarray:
    """One-sided periodogram, the canonical PSD for losses and metrics alike.

    Normalized so that the bin sum equals the mean signal power
    (``mean(x**2)``), which makes the estimate Parseval-consistent. For a
    length-M input the output has M//2 + 1 bins; bin k sits at frequency
    k * rate / M.
    """
    x = s.samples if isinstance(s, Signal) else np.asarray(s, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("psd expects a single channel")
    n = x.size
    if n < 8:
        raise ValueError("signal too short for a PSD estimate (need >= 8 samples)")
    spec = np.fft.rfft(x)
    p = (spec.real**2 + spec.imag**2) / (n * n)
    p[1:] *= 2.0
    if n % 2 == 0:
        p[-1] *= 0.5  # Nyquist bin is not mirrored
    return p


def mean_power(x: np.ndarray) -> float:
    """Mean power of a sequence: (1/len) * sum(x**2)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("mean_power of an empty sequence is undefined")
    return float(np.dot(x, x) / x.size)
