"""Parametric maternal + fetal ECG mixtures with controlled noise.

Ground truth for the whole pipeline: beat schedules are exact, so R-peak
positions, heart rates and mixture components are known analytically. Each
PQRST complex is a sum of five Gaussians, the standard synthetic ECG
morphology.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import PeakList
from .signals import MultiSignal, Signal

__all__ = [
    "EcgTemplateParams", "MixtureSpec", "SyntheticRecording",
    "maternal_template", "fetal_template", "gen_template_train",
    "gen_recording", "gen_components", "gen_coincidence_stress",
    "coincidence_fraction", "DEFAULT_MIXING",
]

# Channel gains: column 0 scales the maternal trace, column 1 the fetal one.
DEFAULT_MIXING = np.array([
    [1.00, 1.00],
    [0.90, 1.10],
    [1.10, 0.85],
    [0.95, 1.05],
])


@dataclass
class EcgTemplateParams:
    """Gaussian-sum PQRST morphology on a jittered beat schedule.

    Each wave is (amplitude, center offset in ms relative to the R peak,
    Gaussian width in ms). The R amplitude must dominate the other waves.
    """

    heart_rate_bpm: float = 80.0
    rate_jitter_pct: float = 0.0
    p_wave: tuple = (0.12, -170.0, 22.0)
    q_wave: tuple = (-0.10, -22.0, 6.0)
    r_wave: tuple = (1.00, 0.0, 9.0)
    s_wave: tuple = (-0.15, 22.0, 7.0)
    t_wave: tuple = (0.35, 210.0, 40.0)

    def waves(self):
        return (self.p_wave, self.q_wave, self.r_wave, self.s_wave, self.t_wave)

    def __post_init__(self):
        if self.heart_rate_bpm <= 0:
            raise ValueError("heart_rate_bpm must be positive")
        if any(w[2] <= 0 for w in self.waves()):
            raise ValueError("wave widths must be positive")
        r_amp = abs(self.r_wave[0])
        others = [abs(w[0]) for w in (self.p_wave, self.q_wave, self.s_wave, self.t_wave)]
        if r_amp <= max(others):
            raise ValueError("R amplitude must dominate the other waves")


def maternal_template() -> EcgTemplateParams:
    return EcgTemplateParams(heart_rate_bpm=80.0)


def fetal_template() -> EcgTemplateParams:
    """Faster rhythm with proportionally compressed wave timing."""
    return EcgTemplateParams(
        heart_rate_bpm=130.0,
        p_wave=(0.12, -100.0, 14.0),
        q_wave=(-0.10, -14.0, 4.0),
        r_wave=(1.00, 0.0, 6.0),
        s_wave=(-0.15, 14.0, 4.5),
        t_wave=(0.35, 130.0, 25.0),
    )


@dataclass
class MixtureSpec:
    """Recipe for one synthetic abdominal recording."""

    maternal: EcgTemplateParams = field(default_factory=maternal_template)
    fetal: EcgTemplateParams = field(default_factory=fetal_template)
    fetal_ratio: float = 0.2  # fetal R amplitude relative to maternal in the mixture
    mixing: np.ndarray = field(default_factory=lambda: DEFAULT_MIXING.copy())
    drift_amplitude: float = 0.3
    drift_freq_hz: float = 0.25
    powerline_amplitude: float = 0.05
    powerline_freq_hz: float = 50.0
    white_noise_sigma: float = 0.02
    duration_s: float = 60.0
    rate_hz: float = 512.0
    seed: int = 0

    def __post_init__(self):
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if self.mixing.ndim != 2 or self.mixing.shape[1] != 2:
            raise ValueError("mixing must be a (channels, 2) gain matrix")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ValueError("duration_s and rate_hz must be positive")

    @property
    def channel_count(self) -> int:
        return self.mixing.shape[0]


@dataclass
class SyntheticRecording:
    abdominal: MultiSignal
    fetal_truth: Signal
    fetal_peaks: PeakList
    maternal_peaks: PeakList
    spec: MixtureSpec


def _beat_schedule(params: EcgTemplateParams, duration_s: float,
                   rng: np.random.Generator, start_offset_s=None) -> np.ndarray:
    """Beat (R-center) times in seconds. Jitter perturbs each interval by a
    uniform fraction of the base interval."""
    base = 60.0 / params.heart_rate_bpm
    t = 0.5 * base if start_offset_s is None else start_offset_s
    times = []
    frac = params.rate_jitter_pct / 100.0
    while t < duration_s:
        times.append(t)
        step = base
        if frac > 0:
            step = base * (1.0 + frac * rng.uniform(-1.0, 1.0))
        t += step
    return np.asarray(times)


def _render_train(beat_times: np.ndarray, params: EcgTemplateParams,
                  duration_s: float, rate_hz: float) -> np.ndarray:
    n = int(round(duration_s * rate_hz))
    out = np.zeros(n)
    for t0 in beat_times:
        for amp, offset_ms, width_ms in params.waves():
            center = t0 + offset_ms / 1000.0
            sigma = width_ms / 1000.0
            lo = max(0, int((center - 5 * sigma) * rate_hz))
            hi = min(n, int((center + 5 * sigma) * rate_hz) + 1)
            if hi <= lo:
                continue
            tt = np.arange(lo, hi) / rate_hz
            out[lo:hi] += amp * np.exp(-0.5 * ((tt - center) / sigma) ** 2)
    return out


def _peaks_from_schedule(beat_times: np.ndarray, rate_hz: float,
                         n_samples: int) -> PeakList:
    idx = np.round(beat_times * rate_hz).astype(int)
    idx = idx[(idx >= 0) & (idx < n_samples)]
    return PeakList(np.unique(idx), rate_hz)


def gen_template_train(params: EcgTemplateParams, duration_s: float,
                       rate_hz: float, seed: int = 0,
                       start_offset_s=None) -> tuple[Signal, PeakList]:
    """Render one PQRST train; the returned peak list marks exact R centers."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    beats = _beat_schedule(params, duration_s, rng, start_offset_s)
    samples = _render_train(beats, params, duration_s, rate_hz)
    return (Signal(samples, rate_hz),
            _peaks_from_schedule(beats, rate_hz, samples.size))


def gen_components(spec: MixtureSpec, maternal_start=None, fetal_start=None) -> dict:
    """Render every mixture component separately (deterministic per seed)."""
    ss = np.random.SeedSequence(spec.seed)
    sched_m, sched_f, noise_ss = ss.spawn(3)
    rng_m = np.random.default_rng(sched_m)
    rng_f = np.random.default_rng(sched_f)
    beats_m = _beat_schedule(spec.maternal, spec.duration_s, rng_m, maternal_start)
    beats_f = _beat_schedule(spec.fetal, spec.duration_s, rng_f, fetal_start)
    maternal = _render_train(beats_m, spec.maternal, spec.duration_s, spec.rate_hz)
    fetal = _render_train(beats_f, spec.fetal, spec.duration_s, spec.rate_hz)
    n = maternal.size
    t = np.arange(n) / spec.rate_hz
    c = spec.channel_count
    noise_rng = np.random.default_rng(noise_ss)
    drift = np.empty((c, n))
    powerline = np.empty((c, n))
    white = np.empty((c, n))
    for ch in range(c):
        drift[ch] = spec.drift_amplitude * np.sin(
            2 * np.pi * spec.drift_freq_hz * t + noise_rng.uniform(0, 2 * np.pi))
        powerline[ch] = spec.powerline_amplitude * np.sin(
            2 * np.pi * spec.powerline_freq_hz * t + noise_rng.uniform(0, 2 * np.pi))
        white[ch] = spec.white_noise_sigma * noise_rng.standard_normal(n)
    return {
        "maternal": maternal, "fetal": fetal,
        "beats_m": beats_m, "beats_f": beats_f,
        "drift": drift, "powerline": powerline, "white": white,
    }


def _assemble(spec: MixtureSpec, parts: dict) -> SyntheticRecording:
    fetal_scaled = spec.fetal_ratio * parts["fetal"]
    channels = []
    for ch in range(spec.channel_count):
        samples = (spec.mixing[ch, 0] * parts["maternal"]
                   + spec.mixing[ch, 1] * fetal_scaled
                   + parts["drift"][ch] + parts["powerline"][ch]
                   + parts["white"][ch])
        channels.append(Signal(samples, spec.rate_hz))
    n = parts["maternal"].size
    return SyntheticRecording(
        abdominal=MultiSignal(channels),
        fetal_truth=Signal(parts["fetal"], spec.rate_hz),
        fetal_peaks=_peaks_from_schedule(parts["beats_f"], spec.rate_hz, n),
        maternal_peaks=_peaks_from_schedule(parts["beats_m"], spec.rate_hz, n),
        spec=spec,
    )


def gen_recording(spec: MixtureSpec) -> SyntheticRecording:
    """Abdominal channels = mixing gains x (maternal, scaled fetal) + drift
    + powerline + white noise; fetal_truth is the clean fetal train."""
    return _assemble(spec, gen_components(spec))


def gen_coincidence_stress(spec: MixtureSpec) -> SyntheticRecording:
    """Phase-locked variant: the fetal rate is forced to twice the maternal
    rate with zero jitter and aligned first beats, so every second fetal R
    peak lands on a maternal R peak (coincidence fraction 0.5 >= 0.3)."""
    locked = replace(
        spec,
        maternal=replace(spec.maternal, rate_jitter_pct=0.0),
        fetal=replace(spec.fetal, rate_jitter_pct=0.0,
                      heart_rate_bpm=2.0 * spec.maternal.heart_rate_bpm),
    )
    start = 0.5 * 60.0 / locked.maternal.heart_rate_bpm
    parts = gen_components(locked, maternal_start=start, fetal_start=start)
    return _assemble(locked, parts)


def coincidence_fraction(fetal_peaks: PeakList, maternal_peaks: PeakList,
                         tol_ms: float = 20.0) -> float:
    """Fraction of fetal R peaks within ``tol_ms`` of some maternal R peak."""
    if len(fetal_peaks.indices) == 0:
        return 0.0
    tol = tol_ms / 1000.0 * fetal_peaks.sample_rate_hz
    m = np.asarray(maternal_peaks.indices)
    hits = 0
    for p in fetal_peaks.indices:
        if m.size and np.abs(m - p).min() <= tol:
            hits += 1
    return hits / len(fetal_peaks.indices)
