"""Vision sensor emulation: rate, latency, quantization and noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import TimeSeries


@dataclass(frozen=True)
class SensorProfile:
    """Measurement chain characteristics of one vision sensor."""

    kind: str = "normal"            # normal | event | thermal
    rate_hz: float = 60.0
    latency: float = 0.03           # s
    sigma: float = 0.0              # m, Gaussian position noise
    hf_amplitude: float = 0.0       # a_n of the periodic component
    hf_omega: float = 0.0           # rad/s
    hf_phase: float = 0.0
    quantization: float = 0.0       # m per pixel-equivalent step

    def __post_init__(self):
        if self.rate_hz <= 0.0:
            raise ValueError("sensor rate must be positive")
        if self.latency < 0.0:
            raise ValueError("latency cannot be negative")


def normal_camera(**kw) -> SensorProfile:
    return SensorProfile(kind="normal", rate_hz=60.0, latency=0.03, **kw)


def event_camera(**kw) -> SensorProfile:
    return SensorProfile(kind="event", rate_hz=100.0, latency=0.012, **kw)


def thermal_camera(**kw) -> SensorProfile:
    # rate and latency are configurable placeholders
    return SensorProfile(kind="thermal", rate_hz=9.0, latency=0.08, **kw)


IMU_RATE_HZ = 200.0


@dataclass
class MeasurementStream:
    """Sensor frames: sample time, delivery time and value."""

    t_sampled: np.ndarray
    t_delivered: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.values.size


def emulate_sensor(truth: TimeSeries, profile: SensorProfile,
                   seed: int = 0) -> MeasurementStream:
    """Sample the true signal through the sensor chain.

    Frames are taken at the sensor rate, corrupted with Gaussian and
    periodic noise, quantized, and delivered one latency later.
    """
    rng = np.random.default_rng(seed)
    t_end = truth.start + truth.duration
    t_s = np.arange(truth.start, t_end + 1e-12, 1.0 / profile.rate_hz)
    vals = np.interp(t_s, truth.times(), truth.values)
    if profile.sigma > 0.0:
        vals = vals + rng.standard_normal(t_s.size) * profile.sigma
    if profile.hf_amplitude > 0.0:
        vals = vals + profile.hf_amplitude * np.sin(profile.hf_omega * t_s
                                                    + profile.hf_phase)
    if profile.quantization > 0.0:
        vals = np.round(vals / profile.quantization) * profile.quantization
    return MeasurementStream(t_s, t_s + profile.latency, vals)
