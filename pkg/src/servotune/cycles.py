"""Steady-state limit cycle extraction and on-line noise characterization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import TimeSeries


class CycleNotConverged(RuntimeError):
    """The relay test did not settle into a steady oscillation."""


WAVEFORM_SAMPLES = 128


@dataclass
class LimitCycle:
    """One steady period of the relay-excited oscillation."""

    amplitude: float            # a0, error units
    period: float               # T0, s
    bias: float                 # error units
    error_waveform: np.ndarray  # WAVEFORM_SAMPLES points over one period
    control_waveform: np.ndarray

    def __post_init__(self):
        if not self.amplitude > 0.0:
            raise ValueError("limit cycle amplitude must be positive")
        if not self.period > 0.0:
            raise ValueError("limit cycle period must be positive")
        self.error_waveform = np.asarray(self.error_waveform, dtype=float)
        self.control_waveform = np.asarray(self.control_waveform, dtype=float)
        if self.error_waveform.size != WAVEFORM_SAMPLES:
            raise ValueError(f"waveform must hold exactly {WAVEFORM_SAMPLES} samples")

    @property
    def frequency(self) -> float:
        """Omega_0 in rad/s."""
        return 2.0 * math.pi / self.period

    def scaled(self, amplitude_factor: float, time_factor: float = 1.0) -> "LimitCycle":
        return LimitCycle(self.amplitude * amplitude_factor,
                          self.period * time_factor,
                          self.bias * amplitude_factor,
                          self.error_waveform * amplitude_factor,
                          self.control_waveform)

    def to_json(self) -> dict:
        return {"amplitude": self.amplitude, "period_s": self.period,
                "frequency_rad_s": self.frequency, "bias": self.bias,
                "error_waveform": self.error_waveform.tolist(),
                "control_waveform": self.control_waveform.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "LimitCycle":
        return cls(doc["amplitude"], doc["period_s"], doc["bias"],
                   np.asarray(doc["error_waveform"]),
                   np.asarray(doc["control_waveform"]))


def detect_limit_cycle(error: TimeSeries, control: TimeSeries,
                       agreement: float = 0.05, min_periods: int = 8,
                       steady_periods: int = 3,
                       average_periods: int = 6) -> LimitCycle:
    """Extract the steady oscillation from relay test traces.

    Periods are delimited by relay up-switches.  Steady state requires the
    last ``steady_periods`` complete periods to agree in amplitude within
    ``agreement``.  The representative waveform is the switch-synchronous
    average of up to ``average_periods`` final periods, which suppresses
    measurement noise without touching the deterministic shape.  Raises
    :class:`CycleNotConverged` when no steady oscillation is reached.
    """
    u = control.values
    e = error.values
    t = error.times()
    if u.size != e.size:
        raise ValueError("error and control traces must share sampling")
    sign = np.sign(u)
    up = np.nonzero((sign[1:] > 0) & (sign[:-1] <= 0))[0] + 1
    if up.size < min_periods + 1:
        raise CycleNotConverged(
            f"only {max(up.size - 1, 0)} complete relay periods, need {min_periods}")
    amps, biases, durations = [], [], []
    for a, b in zip(up[:-1], up[1:]):
        seg = e[a:b]
        amps.append(0.5 * (seg.max() - seg.min()))
        biases.append(float(np.mean(seg)))
        durations.append(t[b] - t[a])
    amps = np.asarray(amps)
    last = amps[-steady_periods:]
    mean_amp = float(np.mean(last))
    if mean_amp <= 0.0 or np.max(np.abs(last - mean_amp)) > agreement * mean_amp:
        raise CycleNotConverged(
            f"last {steady_periods} period amplitudes {last} disagree beyond "
            f"{agreement:.0%}")
    period = float(np.mean(durations[-steady_periods:]))
    # switch-synchronous average of the final periods on the waveform grid
    n_avg = min(average_periods, up.size - 1)
    frac = np.arange(WAVEFORM_SAMPLES) / WAVEFORM_SAMPLES
    wf_e = np.zeros(WAVEFORM_SAMPLES)
    wf_u = np.zeros(WAVEFORM_SAMPLES)
    for a, b in zip(up[-n_avg - 1:-1], up[-n_avg:]):
        grid = t[a] + (t[b] - t[a]) * frac
        wf_e += np.interp(grid, t[a:b + 1], e[a:b + 1])
        wf_u += np.interp(grid, t[a:b + 1], u[a:b + 1])
    wf_e /= n_avg
    wf_u /= n_avg
    # amplitude and bias from the averaged waveform: measurement noise is
    # suppressed there, keeping noisy estimates comparable to clean references
    amp = 0.5 * float(wf_e.max() - wf_e.min())
    bias = float(np.mean(wf_e))
    return LimitCycle(amp, period, bias, wf_e, wf_u)


# ---------------------------------------------------------------------------
# noise characterization
# ---------------------------------------------------------------------------

@dataclass
class NoiseEstimate:
    amplitude: float            # a_n: average peak of the high-passed signal
    period: float               # T_n, s (nan when no peaks were found)
    phase: float = 0.0          # psi_n, only meaningful for synthetic noise

    @property
    def frequency(self) -> float:
        return 2.0 * math.pi / self.period

    @property
    def ok(self) -> bool:
        return self.amplitude > 0.0 and math.isfinite(self.period)


class _HighpassBiquad:
    """Second-order Butterworth high-pass, bilinear transform."""

    def __init__(self, cutoff_hz: float, fs: float):
        if cutoff_hz <= 0.0 or cutoff_hz >= fs / 2.0:
            raise ValueError(f"cutoff {cutoff_hz} Hz must lie in (0, fs/2)")
        k = math.tan(math.pi * cutoff_hz / fs)
        norm = 1.0 + math.sqrt(2.0) * k + k * k
        self.b = (1.0 / norm, -2.0 / norm, 1.0 / norm)
        self.a = (2.0 * (k * k - 1.0) / norm, (1.0 - math.sqrt(2.0) * k + k * k) / norm)

    def filter(self, x: np.ndarray) -> np.ndarray:
        from scipy.signal import lfilter
        return lfilter(self.b, (1.0,) + self.a, x)


def estimate_noise(e: TimeSeries, cutoff_hz: float) -> NoiseEstimate:
    """Characterize the high-frequency noise riding on an error signal.

    The signal is high-pass filtered at ``cutoff_hz``; the noise period T_n is
    the mean spacing of consecutive same-sign excursion peaks, and the noise
    amplitude a_n is the average of peak magnitudes taken over blocks of
    twenty noise periods (the block maximum tracks the noise envelope, which
    is what inflates measured oscillation extrema).
    """
    fs = 1.0 / e.dt
    hp = _HighpassBiquad(cutoff_hz, fs).filter(e.values)
    settle = min(int(2.0 * fs / cutoff_hz), hp.size // 4)
    hp = hp[settle:]
    if hp.size < 8:
        return NoiseEstimate(0.0, math.nan)
    # excursion extrema between zero crossings
    sign = np.sign(hp)
    crossings = np.nonzero(sign[1:] * sign[:-1] < 0)[0] + 1
    if crossings.size < 4:
        return NoiseEstimate(0.0, math.nan)
    pos_peaks, neg_peaks = [], []
    bounds = np.concatenate([[0], crossings, [hp.size]])
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = hp[a:b]
        if seg.size == 0:
            continue
        i = int(np.argmax(np.abs(seg)))
        if seg[i] > 0:
            pos_peaks.append(a + i)
        else:
            neg_peaks.append(a + i)
    spacings = []
    for peaks in (pos_peaks, neg_peaks):
        if len(peaks) >= 2:
            spacings.extend(np.diff(peaks))
    if not spacings:
        return NoiseEstimate(0.0, math.nan)
    period = float(np.mean(spacings)) * e.dt
    block = max(int(round(20.0 * period * fs)), 4)
    n_blocks = hp.size // block
    if n_blocks == 0:
        amp = float(np.max(np.abs(hp)))
    else:
        trimmed = np.abs(hp[:n_blocks * block]).reshape(n_blocks, block)
        amp = float(np.mean(trimmed.max(axis=1)))
    return NoiseEstimate(amp, period)


def sinusoidal_noise(amplitude: float, omega: float, phase: float = 0.0):
    """Deterministic noise generator a_n * sin(omega*t + psi)."""
    def gen(t: float) -> float:
        return amplitude * math.sin(omega * t + phase)
    return gen


def gaussian_noise(sigma: float, dt: float, seed: int = 0, bias: float = 0.0):
    """Sampled white Gaussian measurement noise, reproducible given the seed.

    Values are frozen per controller tick so repeated evaluation at one time
    is consistent.
    """
    rng = np.random.default_rng(seed)
    cache: dict[int, float] = {}

    def gen(t: float) -> float:
        k = int(round(t / dt))
        if k not in cache:
            # draws are ordered by first access; the loop accesses ticks in order
            cache[k] = float(rng.standard_normal()) * sigma
        return cache[k] + bias
    return gen
