"""Per-axis Kalman filter fusing accelerometer prediction with camera fixes,
plus the innovation-driven controller schedule supervisor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# state transition for [position, velocity, accelerometer bias]
def _f_matrix(dt: float) -> np.ndarray:
    return np.array([[1.0, dt, -dt * dt],
                     [0.0, 1.0, -dt],
                     [0.0, 0.0, 1.0]])


def _b_vector(dt: float) -> np.ndarray:
    return np.array([dt * dt, dt, 0.0])


@dataclass
class KfState:
    """One axis of the decoupled estimator."""

    dt: float
    sigma_process: float = 0.05
    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cov: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(self.cov) < -1e-12):
            raise ValueError("covariance must be positive semi-definite")

    @property
    def position(self) -> float:
        return float(self.x[0])

    @property
    def velocity(self) -> float:
        return float(self.x[1])

    @property
    def accel_bias(self) -> float:
        return float(self.x[2])


def kf_predict(state: KfState, accel: float) -> KfState:
    """Propagate one IMU step with the measured acceleration as input."""
    if not math.isfinite(accel):
        raise ValueError("non-finite accelerometer sample")
    f = _f_matrix(state.dt)
    b = _b_vector(state.dt)
    x = f @ state.x + b * accel
    q = state.sigma_process ** 2 * np.eye(3)
    cov = f @ state.cov @ f.T + q
    return KfState(state.dt, state.sigma_process, x, 0.5 * (cov + cov.T))


def kf_update(state: KfState, z: float, sigma_meas: float) -> tuple[KfState, float]:
    """Position correction from a camera fix; returns the innovation."""
    if sigma_meas <= 0.0:
        raise ValueError("measurement noise must be positive")
    innovation = z - state.x[0]
    s = state.cov[0, 0] + sigma_meas ** 2
    k = state.cov[:, 0] / s
    x = state.x + k * innovation
    ikh = np.eye(3)
    ikh[:, 0] -= k
    cov = ikh @ state.cov @ ikh.T + np.outer(k, k) * sigma_meas ** 2
    return KfState(state.dt, state.sigma_process, x, 0.5 * (cov + cov.T)), float(innovation)


WITH_KF = 1
WITHOUT_KF = 2


@dataclass
class ScheduleSupervisor:
    """Switches gain schedules on Kalman-filter inconsistency.

    Large innovations mean the camera sees motion the inertial prediction
    cannot explain (the target moved), so control falls back to raw camera
    feedback; once the loop settles the filter is reset and trusted again.
    """

    sigma_meas: float
    threshold_sigmas: float = 5.0
    consecutive: int = 3
    settle_band: float = 0.05
    settle_time: float = 1.0
    pinned: bool = False

    schedule: int = WITH_KF
    _count: int = 0
    _settle_start: float | None = None
    switch_times: list = field(default_factory=list)

    def observe_innovation(self, innovation: float, t: float) -> int:
        if self.pinned or self.schedule != WITH_KF:
            return self.schedule
        if abs(innovation) > self.threshold_sigmas * self.sigma_meas:
            self._count += 1
            if self._count >= self.consecutive:
                self.schedule = WITHOUT_KF
                self.switch_times.append(t)
                self._count = 0
                self._settle_start = None
        else:
            self._count = 0
        return self.schedule

    def observe_error(self, error: float, t: float) -> int:
        if self.pinned or self.schedule != WITHOUT_KF:
            return self.schedule
        if abs(error) < self.settle_band:
            if self._settle_start is None:
                self._settle_start = t
            elif t - self._settle_start >= self.settle_time:
                self.schedule = WITH_KF
                self.switch_times.append(t)
                self._settle_start = None
        else:
            self._settle_start = None
        return self.schedule
