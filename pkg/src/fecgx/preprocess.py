"""Conditioning chain that turns raw recordings into normalized segment batches.

The chain, in order: resample to 512 Hz, powerline bandstop, 0.1-70 Hz
bandpass (both applied with zero phase via the apply-flip-reapply trick),
whole-record polynomial baseline removal, moving-average smoothing, then
windowing into per-segment detrended, min-max normalized 1-second slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.signal
from numpy.polynomial import chebyshev

from .errors import FilterDesignError, FitError, ShapeError
from .signals import MultiSignal, SegmentBatch, Signal, minmax_normalize, resample

__all__ = [
    "FilterSpec",
    "PreprocessConfig",
    "butterworth_coeffs",
    "zero_phase_filter",
    "one_pass_filter",
    "remove_baseline_poly",
    "moving_average",
    "segment",
    "preprocess_mecg",
    "preprocess_fecg",
]


@dataclass
class FilterSpec:
    """Recursive or moving-average filter description.

    ``kind`` is one of ``bandpass``, ``bandstop``, ``moving_average``.
    ``low_hz``/``high_hz`` bound the band for the IIR kinds; ``window_len``
    sizes the moving average.
    """

    kind: str
    low_hz: float = 0.0
    high_hz: float = 0.0
    order: int = 1
    window_len: int = 1

    def __post_init__(self):
        if self.kind not in ("bandpass", "bandstop", "moving_average"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.kind == "moving_average":
            if self.window_len < 1:
                raise ValueError("window_len must be positive")
        else:
            if self.order < 1:
                raise ValueError("order must be positive")
            if not (0 < self.low_hz < self.high_hz):
                raise FilterDesignError(
                    f"need 0 < low_hz < high_hz, got ({self.low_hz}, {self.high_hz})"
                )
            if self.kind == "bandstop" and self.order % 2 != 0:
                raise FilterDesignError("bandstop order must be even")


@dataclass
class PreprocessConfig:
    """Defaults for the full conditioning chain.

    Maternal and fetal records share the filters but differ in baseline-fit
    order (8 vs 36) and smoothing window (4 vs 10 samples).
    """

    target_rate_hz: float = 512.0
    notch_center_hz: float = 50.0
    notch_half_width_hz: float = 1.0
    bandpass_low_hz: float = 0.1
    bandpass_high_hz: float = 70.0
    bandpass_order: int = 6
    bandstop_order: int = 4
    baseline_poly_order_mecg: int = 8
    baseline_poly_order_fecg: int = 36
    ma_window_mecg: int = 4
    ma_window_fecg: int = 10
    segment_len: int = 512
    segment_overlap: int = 256
    edge_trim: int = 512

    def __post_init__(self):
        if self.segment_overlap >= self.segment_len:
            raise ValueError("segment_overlap must be smaller than segment_len")
        for name in ("baseline_poly_order_mecg", "baseline_poly_order_fecg",
                     "ma_window_mecg", "ma_window_fecg", "segment_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.edge_trim < 0 or self.segment_overlap < 0:
            raise ValueError("edge_trim and segment_overlap must be non-negative")

    @property
    def stride(self) -> int:
        return self.segment_len - self.segment_overlap

    def bandpass_spec(self) -> FilterSpec:
        return FilterSpec("bandpass", self.bandpass_low_hz, self.bandpass_high_hz,
                          order=self.bandpass_order)

    def bandstop_spec(self) -> FilterSpec:
        return FilterSpec("bandstop",
                          self.notch_center_hz - self.notch_half_width_hz,
                          self.notch_center_hz + self.notch_half_width_hz,
                          order=self.bandstop_order)


def butterworth_coeffs(spec: FilterSpec, rate_hz: float) -> np.ndarray:
    """Butterworth design for the given band, as second-order sections.

    The SOS cascade keeps high orders numerically stable where a single
    transfer-function polynomial would not be.
    """
    if spec.kind not in ("bandpass", "bandstop"):
        raise ValueError("butterworth_coeffs needs a bandpass or bandstop spec")
    nyq = rate_hz / 2.0
    if not (0 < spec.low_hz < spec.high_hz < nyq):
        raise FilterDesignError(
            f"band ({spec.low_hz}, {spec.high_hz}) Hz outside (0, {nyq}) Hz Nyquist range"
        )
    # Band filters realize 2*order poles (one lowpass-prototype pole pair per
    # edge) -- the usual convention for "order-N Butterworth bandpass".
    return scipy.signal.butter(
        spec.order, [spec.low_hz, spec.high_hz], btype=spec.kind,
        fs=rate_hz, output="sos",
    )


def one_pass_filter(s: Signal, spec: FilterSpec) -> Signal:
    """Single forward pass of the Butterworth cascade (has phase lag)."""
    sos = butterworth_coeffs(spec, s.sample_rate_hz)
    return Signal(scipy.signal.sosfilt(sos, s.samples), s.sample_rate_hz)


def zero_phase_filter(s: Signal, spec: FilterSpec) -> Signal:
    """Apply-flip-reapply filtering: zero net phase, squared magnitude response.

    The cascade is run forward, the output is time-reversed, filtered again
    with identical coefficients, and reversed back. Lag introduced by the
    first pass is cancelled exactly by the second.
    """
    sos = butterworth_coeffs(spec, s.sample_rate_hz)
    realized_order = 2 * spec.order  # band filters double the prototype order
    if len(s) <= 3 * realized_order:
        raise ValueError(
            f"signal of {len(s)} samples too short for order-{spec.order} zero-phase filtering"
        )
    fwd = scipy.signal.sosfilt(sos, s.samples)
    back = scipy.signal.sosfilt(sos, fwd[::-1])
    return Signal(back[::-1], s.sample_rate_hz)


def remove_baseline_poly(s: Signal, order: int) -> Signal:
    """Subtract a least-squares polynomial fit of the baseline drift.

    The fit runs over the whole record in a Chebyshev basis on a domain
    rescaled to [-1, 1]; a raw monomial Vandermonde is hopelessly
    ill-conditioned at the orders used for fetal records (36).
    """
    if order < 1:
        raise ValueError("order must be positive")
    n = len(s)
    if n <= order + 1:
        raise ValueError(f"record of {n} samples too short for an order-{order} fit")
    t = np.linspace(-1.0, 1.0, n)
    coeffs, info = chebyshev.chebfit(t, s.samples, order, full=True)
    rank = int(info[1])
    if rank < order + 1:
        raise FitError(f"order-{order} baseline fit is rank deficient (rank {rank})")
    baseline = chebyshev.chebval(t, coeffs)
    return Signal(s.samples - baseline, s.sample_rate_hz)


def moving_average(s: Signal, window: int) -> Signal:
    """Centered moving mean; edges average over the shrunken overlap.

    Output length equals input length. For even windows the span leans one
    sample to the right of center, covering [i - (w-1)//2, i + w//2].
    """
    if window < 1:
        raise ValueError("window must be positive")
    n = len(s)
    if window > n:
        raise ValueError(f"window {window} exceeds signal length {n}")
    left = (window - 1) // 2
    right = window // 2
    csum = np.concatenate(([0.0], np.cumsum(s.samples)))
    idx = np.arange(n)
    lo = np.maximum(idx - left, 0)
    hi = np.minimum(idx + right + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return Signal(out, s.sample_rate_hz)


def _detrend_linear(x: np.ndarray) -> np.ndarray:
    n = x.size
    t = np.arange(n, dtype=np.float64)
    t -= t.mean()
    denom = np.dot(t, t)
    slope = np.dot(t, x - x.mean()) / denom if denom > 0 else 0.0
    return x - (x.mean() + slope * t)


def segment(s: Signal | MultiSignal, cfg: PreprocessConfig) -> SegmentBatch:
    """Slice a record into per-segment detrended, normalized windows.

    ``edge_trim`` samples are dropped from the record's head and tail first
    (this is where baseline-correction ripples live), then overlapping
    windows advance by ``segment_len - segment_overlap``. Each window gets a
    linear detrend (local baseline fix) and a min-max rescale to [0, 1].
    """
    chans = s.channels if isinstance(s, MultiSignal) else [s]
    rate = chans[0].sample_rate_hz
    n = len(chans[0])
    trim = cfg.edge_trim
    usable = n - 2 * trim
    if usable < cfg.segment_len:
        raise ValueError(
            f"record of {n} samples leaves {usable} after trimming, "
            f"shorter than one {cfg.segment_len}-sample window"
        )
    stride = cfg.stride
    n_seg = (usable - cfg.segment_len) // stride + 1
    starts = trim + stride * np.arange(n_seg)
    data = np.empty((n_seg, cfg.segment_len, len(chans)))
    degenerate = np.zeros((n_seg, len(chans)), dtype=bool)
    for c, ch in enumerate(chans):
        x = ch.samples
        for i, s0 in enumerate(starts):
            win = _detrend_linear(x[s0:s0 + cfg.segment_len])
            data[i, :, c], degenerate[i, c] = minmax_normalize(win)
    return SegmentBatch(data, rate, normalized=True, degenerate=degenerate,
                        start_indices=starts)


def _condition_channel(ch: Signal, cfg: PreprocessConfig, poly_order: int,
                       ma_window: int) -> Signal:
    out = resample(ch, cfg.target_rate_hz)
    out = zero_phase_filter(out, cfg.bandstop_spec())
    out = zero_phase_filter(out, cfg.bandpass_spec())
    out = remove_baseline_poly(out, poly_order)
    out = moving_average(out, ma_window)
    return out


def preprocess_mecg(m: MultiSignal, cfg: PreprocessConfig | None = None) -> SegmentBatch:
    """Full conditioning chain for a multi-channel abdominal recording.

    Produces an (N, segment_len, C) batch. Batches built from simultaneous
    maternal/fetal records are index-aligned: segment i covers the same span
    of time in both.
    """
    cfg = cfg or PreprocessConfig()
    conditioned = [
        _condition_channel(ch, cfg, cfg.baseline_poly_order_mecg, cfg.ma_window_mecg)
        for ch in m.channels
    ]
    return segment(MultiSignal(conditioned), cfg)


def preprocess_fecg(f: Signal, cfg: PreprocessConfig | None = None) -> SegmentBatch:
    """Conditioning chain for the single-channel reference fetal record."""
    cfg = cfg or PreprocessConfig()
    conditioned = _condition_channel(f, cfg, cfg.baseline_poly_order_fecg,
                                     cfg.ma_window_fecg)
    return segment(conditioned, cfg)


def stitch_segments(segments: np.ndarray, start_indices: np.ndarray,
                    sample_rate_hz: float) -> Signal:
    """Inverse of :func:`segment` for single-channel windows: place each
    window at its start index and average where windows overlap."""
    segs = np.asarray(segments, dtype=np.float64)
    if segs.ndim == 3:
        if segs.shape[2] == 1:    # (N, M, 1) batch layout
            segs = segs[:, :, 0]
        elif segs.shape[1] == 1:  # (B, 1, L) network layout
            segs = segs[:, 0, :]
        else:
            raise ShapeError("stitching needs single-channel segments")
    if segs.ndim != 2:
        raise ShapeError("expected (N, M) single-channel segments")
    starts = np.asarray(start_indices, dtype=np.int64)
    if starts.size != segs.shape[0]:
        raise ShapeError("one start index per segment required")
    base = int(starts.min()) if starts.size else 0
    m = segs.shape[1]
    total = int(starts.max()) - base + m
    acc = np.zeros(total)
    count = np.zeros(total)
    for seg, s0 in zip(segs, starts - base):
        acc[s0:s0 + m] += seg
        count[s0:s0 + m] += 1.0
    covered = count > 0
    acc[covered] /= count[covered]
    return Signal(acc, sample_rate_hz)
