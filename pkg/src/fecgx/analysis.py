"""Everything downstream of extraction: signal-quality metrics, R-peak
detection with tolerance-based scoring, and heart-rate-variability analytics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSignalError, ShapeError
from .signals import SegmentBatch, Signal, mean_power, pearson_corr, psd

__all__ = [
    "EvalReport", "PeakList", "DetectionScore", "HrvReport",
    "eval_extraction", "engzee_detect", "match_peaks", "hrv_report",
    "compare_hrv", "HRV_METRICS", "QRS_TOLERANCE_MS",
]

QRS_TOLERANCE_MS = 31.25  # an R peak within this of the reference is correct

HRV_METRICS = ("mean_rr_ms", "mean_hr_bpm", "std_hr_bpm", "rmssd_ms",
               "sdnn_ms", "sdnn_over_rmssd", "nn50", "pnn50")


@dataclass
class PeakList:
    """Strictly increasing R-peak sample indices at a known rate."""

    indices: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("peak indices must be strictly increasing")
        if self.indices.size and self.indices[0] < 0:
            raise ValueError("peak indices must be non-negative")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def times_ms(self) -> np.ndarray:
        return self.indices * (1000.0 / self.sample_rate_hz)

    def __len__(self):
        return self.indices.size


@dataclass
class DetectionScore:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float = field(init=False)
    recall: float = field(init=False)
    f1: float = field(init=False)
    accuracy: float = field(init=False)

    def __post_init__(self):
        self.precision = _ratio(self.tp, self.tp + self.fp)
        self.recall = _ratio(self.tp, self.tp + self.fn)
        psum = self.precision + self.recall
        self.f1 = 2.0 * self.precision * self.recall / psum if psum > 0 else 0.0
        self.accuracy = _ratio(self.tp + self.tn,
                               self.tp + self.tn + self.fp + self.fn)


def _ratio(num, den) -> float:
    return num / den if den > 0 else 0.0


@dataclass
class HrvReport:
    mean_rr_ms: float
    mean_hr_bpm: float
    std_hr_bpm: float
    rmssd_ms: float
    sdnn_ms: float
    sdnn_over_rmssd: float
    nn50: int
    pnn50: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in HRV_METRICS}


@dataclass
class EvalReport:
    """Per-segment extraction metrics plus their fold-level means."""

    seg_mae: np.ndarray
    seg_rmse: np.ndarray
    seg_pcc: np.ndarray
    seg_spec_corr: np.ndarray
    seg_spec_rmse: np.ndarray
    flagged: int  # segments skipped in pcc / spectral means (degenerate)

    @property
    def mae(self) -> float:
        return float(np.mean(self.seg_mae))

    @property
    def rmse(self) -> float:
        return float(np.mean(self.seg_rmse))

    @property
    def pcc(self) -> float:
        return _nanmean(self.seg_pcc)

    @property
    def spec_corr(self) -> float:
        return _nanmean(self.seg_spec_corr)

    @property
    def spec_rmse(self) -> float:
        return _nanmean(self.seg_spec_rmse)

    def as_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "pcc": self.pcc,
                "spec_corr": self.spec_corr, "spec_rmse": self.spec_rmse}


def _nanmean(arr) -> float:
    good = arr[np.isfinite(arr)]
    return float(good.mean()) if good.size else math.nan


def _segments_2d(batch) -> np.ndarray:
    """Lift (N, M), (N, M, C) arrays or a SegmentBatch to (N, M*C)."""
    if isinstance(batch, SegmentBatch):
        arr = batch.data
    else:
        arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3:
        return arr.reshape(arr.shape[0], -1)
    raise ShapeError("expected (N, M) or (N, M, C) segments")


def eval_extraction(truth, predicted, inputs=None) -> EvalReport:
    """Extraction quality: MAE, RMSE, correlation, and the two spectral
    metrics, per segment with fold-level means.

    ``inputs`` holds the abdominal segments the prediction was extracted
    from; its channel-averaged PSD normalizes the spectral correlation. When
    omitted, the truth's own PSD stands in (reference correlation 1).
    """
    t = _segments_2d(truth)
    p = _segments_2d(predicted)
    if t.shape != p.shape:
        raise ShapeError(f"shape mismatch: truth {t.shape} vs predicted {p.shape}")
    n = t.shape[0]
    x_psd = None
    if inputs is not None:
        x = inputs.data if isinstance(inputs, SegmentBatch) else np.asarray(inputs)
        if x.ndim != 3 or x.shape[0] != n:
            raise ShapeError("inputs must be (N, M, C) aligned with truth")
    seg_mae = np.empty(n)
    seg_rmse = np.empty(n)
    seg_pcc = np.full(n, np.nan)
    seg_scorr = np.full(n, np.nan)
    seg_srmse = np.full(n, np.nan)
    flagged = 0
    for i in range(n):
        diff = t[i] - p[i]
        seg_mae[i] = np.abs(diff).mean()
        seg_rmse[i] = math.sqrt((diff * diff).mean())
        try:
            seg_pcc[i] = pearson_corr(t[i], p[i])
        except DegenerateSignalError:
            flagged += 1
            continue
        psd_t = psd(t[i])
        psd_p = psd(p[i])
        if inputs is None:
            ref_corr = 1.0
        else:
            xi = x[i]
            psd_x = np.mean([psd(xi[:, c]) for c in range(xi.shape[1])], axis=0)
            try:
                ref_corr = pearson_corr(psd_t, psd_x)
            except DegenerateSignalError:
                flagged += 1
                continue
        if psd_t.std() == 0 or psd_p.std() == 0 or ref_corr == 0:
            flagged += 1
            continue
        seg_scorr[i] = 1.0 - (1.0 - pearson_corr(psd_t, psd_p)) / ref_corr
        denom = math.sqrt(np.mean(psd_p**2))
        seg_srmse[i] = math.sqrt(np.mean((psd_t - psd_p) ** 2)) / denom \
            if denom > 0 else np.nan
    return EvalReport(seg_mae, seg_rmse, seg_pcc, seg_scorr, seg_srmse, flagged)


# ---------------------------------------------------------------------------
# R-peak detection (Engelse-Zeelenberg with the real-time modifications)

def engzee_detect(fecg: Signal, threshold: float = 0.48) -> PeakList:
    """R-peak detection: 4-sample differentiator, low-passed derivative,
    adaptive threshold crossings opening a search window, peak at the signal
    extremum inside the window, with a refractory period against double
    fires.
    """
    x = np.asarray(fecg.samples, dtype=np.float64)
    fs = fecg.sample_rate_hz
    warmup = int(1.75 * fs)
    if x.size <= warmup + 13:
        raise ValueError(
            f"record of {x.size} samples shorter than the detector warm-up "
            f"({warmup + 13} samples at {fs:g} Hz)")

    # Differentiator and 10-tap smoothing of the derivative.
    y1 = x[4:] - x[:-4]
    c = np.array([1.0, 4, 6, 4, 1, -1, -4, -6, -4, -1])
    y2 = np.convolve(y1, c[::-1], mode="valid")
    ny = y2.size

    change_m = int(0.75 * fs)     # threshold re-estimation interval
    miterate = int(1.75 * fs)     # initial threshold estimation window
    refractory = int(0.20 * fs)   # 200 ms: no second fire inside this
    max_rr = int(1.2 * fs)
    window_w = int(0.16 * fs)     # 160 ms search region after a crossing
    hold_need = max(2, int(round(0.01 * fs)))   # 10 ms below lower threshold
    lookback = int(math.ceil(0.02 * fs))            # peak may sit slightly left
    err_kill = int(0.01 * fs)
    mmth, mmp = threshold, 0.2

    mm = mmth * y2[:miterate].max() * np.ones(3)
    nn = mmp * y2[:miterate].min() * np.ones(2)
    mm_idx = nn_idx = 0
    th = mm.mean()
    th_new = nn.mean()
    inc = 1
    update = False
    crossings: list[int] = []
    rpeaks: list[int] = []

    while True:
        if update:
            a = (inc - 1) * change_m
            b = inc * change_m + miterate
            if b < ny:
                m_new = mmth * y2[a:b].max()
                n_new = mmp * y2[a:b].min()
            elif ny - a > int(1.5 * fs):
                m_new = mmth * y2[a:].max()
                n_new = mmp * y2[a:].min()
            else:
                m_new, n_new = mm[mm_idx - 1], nn[nn_idx - 1]
            if ny - inc * change_m > miterate:
                # cap jumps, decay otherwise: keeps one burst from locking out beats
                mm[mm_idx] = m_new if m_new <= 1.5 * mm[mm_idx - 1] else 1.1 * mm[mm_idx - 1]
                nn[nn_idx] = n_new if abs(n_new) <= 1.5 * abs(nn[nn_idx - 1]) else 1.1 * nn[nn_idx - 1]
            mm_idx = (mm_idx + 1) % len(mm)
            nn_idx = (nn_idx + 1) % len(nn)
            th = mm.mean()
            th_new = nn.mean()
            inc += 1
            update = False
        if crossings:
            lastp = max(crossings[-1] + 1, (inc - 1) * change_m)
            seg = y2[lastp:inc * change_m + err_kill]
            above = np.nonzero(seg > th)[0]
            below_next = np.nonzero(seg < th)[0] - 1
            hits = np.intersect1d(above, below_next)
            if hits.size == 0:
                if inc * change_m > ny:
                    break
                update = True
                continue
            cross = int(hits[0]) + lastp
            if rpeaks and cross - rpeaks[-1] < refractory:
                crossings.append(cross)
                continue
            if rpeaks and not (refractory <= cross - rpeaks[-1] < max_rr):
                pass  # long gap: accept and resynchronize
        else:
            seg = y2[(inc - 1) * change_m:inc * change_m + err_kill]
            above = np.nonzero(seg > th)[0]
            below_next = np.nonzero(seg < th)[0] - 1
            hits = np.intersect1d(above, below_next)
            if hits.size == 0:
                if inc * change_m > ny:
                    break
                update = True
                continue
            cross = int(hits[0]) + (inc - 1) * change_m
        crossings.append(cross)

        # search window: require the smoothed derivative to hold below the
        # lower threshold for ~10 ms, then localize on the raw signal
        i = cross
        f = min(cross + window_w, ny)
        hold = np.diff(np.nonzero(y2[i:f] < th_new)[0])
        run = 0
        for step in hold:
            if step == 1:
                run += 1
                if run == hold_need - 1:
                    lo = i - lookback if i > lookback else i
                    rpeaks.append(int(np.argmax(x[lo:f]) + lo))
                    break
            else:
                run = 0

    uniq = sorted(set(rpeaks))
    return PeakList(np.asarray(uniq, dtype=np.int64), fs)


def match_peaks(detected: PeakList, truth: PeakList,
                tolerance_ms: float = QRS_TOLERANCE_MS,
                n_samples: int | None = None) -> DetectionScore:
    """Greedy one-to-one nearest matching within the tolerance.

    Matched pairs are TP, unmatched detections FP, unmatched reference peaks
    FN. TN counts one-second decision windows holding neither a reference
    nor a detected beat (event detection has no natural negatives; this is
    the windowed convention).
    """
    if detected.sample_rate_hz != truth.sample_rate_hz:
        raise ValueError("peak lists must share a sample rate")
    fs = truth.sample_rate_hz
    tol = tolerance_ms * fs / 1000.0
    d = detected.indices
    t = truth.indices
    pairs = []
    for ti, tv in enumerate(t):
        lo = np.searchsorted(d, tv - tol)
        hi = np.searchsorted(d, tv + tol, side="right")
        for di in range(lo, hi):
            dist = abs(int(d[di]) - int(tv))
            if dist <= tol:
                key = (dist, min(int(tv), int(d[di])), max(int(tv), int(d[di])))
                pairs.append((key, ti, di))
    pairs.sort(key=lambda item: item[0])
    used_t = np.zeros(t.size, dtype=bool)
    used_d = np.zeros(d.size, dtype=bool)
    tp = 0
    for _, ti, di in pairs:
        if not used_t[ti] and not used_d[di]:
            used_t[ti] = used_d[di] = True
            tp += 1
    fp = int(d.size - tp)
    fn = int(t.size - tp)
    if n_samples is None:
        last = max(d.max(initial=-1), t.max(initial=-1))
        n_samples = int(last) + 1 if last >= 0 else 0
    n_windows = int(math.ceil(n_samples / fs)) if n_samples > 0 else 0
    occupied = set((np.concatenate([d, t]) // int(fs)).tolist()) if (d.size or t.size) else set()
    tn = max(0, n_windows - len(occupied))
    return DetectionScore(tp=tp, fp=fp, fn=fn, tn=tn)


def hrv_report(peaks: PeakList) -> HrvReport:
    """Summary heart-rate-variability statistics from an R-peak list.

    The mean heart rate averages per-interval instantaneous rates
    (60000/RR_i). Standard deviations use the N-1 sample convention; RMSSD
    divides by the count of successive differences; PNN50 is a percentage of
    all RR intervals.
    """
    if len(peaks) < 3:
        raise ValueError("need at least 3 peaks for HRV statistics")
    rr = np.diff(peaks.times_ms())
    drr = np.diff(rr)
    hr = 60000.0 / rr
    nn50 = int(np.sum(np.abs(drr) > 50.0))
    rmssd = math.sqrt(float(np.mean(drr * drr)))
    sdnn = float(np.std(rr, ddof=1))
    return HrvReport(
        mean_rr_ms=float(np.mean(rr)),
        mean_hr_bpm=float(np.mean(hr)),
        std_hr_bpm=float(np.std(hr, ddof=1)),
        rmssd_ms=rmssd,
        sdnn_ms=sdnn,
        sdnn_over_rmssd=sdnn / rmssd if rmssd > 0 else 0.0,
        nn50=nn50,
        pnn50=100.0 * nn50 / rr.size,
    )


def compare_hrv(truth: HrvReport, extracted: HrvReport) -> tuple[dict, list]:
    """Per-metric percent errors |truth - extracted| / truth * 100.

    Returns (errors, flagged): metrics with a zero truth value and a nonzero
    extracted value are undefined (NaN) and listed in ``flagged``; identical
    zeros count as zero error.
    """
    errors = {}
    flagged = []
    td = truth.as_dict()
    ed = extracted.as_dict()
    for name in HRV_METRICS:
        tv, ev = float(td[name]), float(ed[name])
        if tv == 0.0:
            if ev == 0.0:
                errors[name] = 0.0
            else:
                errors[name] = math.nan
                flagged.append(name)
        else:
            errors[name] = abs(tv - ev) / abs(tv) * 100.0
    return errors, flagged
