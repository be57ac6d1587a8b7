"""Cascaded lateral loop: an outer PD commands the closed attitude loop.

The lumped lateral model factors exactly into the attitude dynamics times a
residual of one integrator, the T_2 lag and the extra dead time.  The outer
controller therefore sees the closed inner loop in series with that residual,
which is also the plant the outer relay test excites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (Biquad, PdGains, PlantStepper, SimulationConfig,
                     TransferFunctionModel)
from .tuning import _filter_response


@dataclass(frozen=True)
class CascadedPlant:
    """Closed inner loop plus the lateral residual dynamics."""

    inner_model: TransferFunctionModel
    inner_gains: PdGains
    lateral_model: TransferFunctionModel     # lumped: shares the inner lags
    filter_hz: float | None = 20.0
    inner_saturation: tuple[float, float] | None = None

    def __post_init__(self):
        if self.lateral_model.integrator_order != 2:
            raise ValueError("lateral model must carry two integrators")
        if self.lateral_model.delay < self.inner_model.delay - 1e-12:
            raise ValueError("lateral dead time cannot be below the inner dead time")

    @property
    def residual(self) -> TransferFunctionModel:
        """Lateral dynamics left over after factoring out the inner loop."""
        inner_lags = set()
        lags = list(self.lateral_model.time_constants)
        for t in self.inner_model.time_constants:
            for cand in lags:
                if abs(cand - t) < 1e-12:
                    lags.remove(cand)
                    break
        if len(lags) != len(self.lateral_model.time_constants) - len(self.inner_model.time_constants):
            raise ValueError("lateral model does not contain the inner lags")
        gain = self.lateral_model.gain / self.inner_model.gain
        return TransferFunctionModel(gain, tuple(lags),
                                     self.lateral_model.delay - self.inner_model.delay, 1)

    def make_stepper(self, dt: float) -> "CascadeStepper":
        return CascadeStepper(self, dt)

    def inner_tracking(self, w: np.ndarray) -> np.ndarray:
        """Setpoint-to-attitude transfer of the closed inner loop."""
        g = self.inner_model.frequency_response(w)
        f = _filter_response(w, self.filter_hz)
        c = self.inner_gains.kp + 1j * w * self.inner_gains.kd
        return self.inner_gains.kp * g / (1.0 + c * g * f)

    def frequency_response(self, w) -> np.ndarray:
        """Open response seen by the outer controller (setpoint to position)."""
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        resp = self.inner_tracking(w_arr) * self.residual.frequency_response(w_arr)
        return complex(resp[0]) if np.isscalar(w) else resp

    def phase(self, w) -> np.ndarray:
        """Continuous outer-plant phase; safe to threshold against targets."""
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        g = self.inner_model.frequency_response(w_arr)
        f = _filter_response(w_arr, self.filter_hz)
        c = self.inner_gains.kp + 1j * w_arr * self.inner_gains.kd
        # 1 + L_inner never winds for a stable inner loop, so plain angle is safe
        corr = np.angle(1.0 + c * g * f)
        ph = (self.inner_model.phase(w_arr) + self.residual.phase(w_arr) - corr)
        return float(ph[0]) if np.isscalar(w) else ph


class CascadeStepper:
    """Time stepping of the cascade at simulation resolution.

    The inner PD runs at every simulation step (the inner loop is the fast
    loop); its measurement passes through the shared low-pass filter and the
    derivative acts on the filtered measurement.
    """

    __slots__ = ("dt", "inner", "resid", "kp", "kd", "filt", "prev_f",
                 "sat", "theta", "y")

    def __init__(self, plant: CascadedPlant, dt: float):
        self.dt = dt
        self.inner = PlantStepper(plant.inner_model, dt)
        self.resid = PlantStepper(plant.residual, dt)
        self.kp = plant.inner_gains.kp
        self.kd = plant.inner_gains.kd
        self.filt = (Biquad(plant.filter_hz, 1.0 / dt)
                     if plant.filter_hz else None)
        self.prev_f = 0.0
        self.sat = plant.inner_saturation
        self.theta = 0.0
        self.y = 0.0

    def step(self, theta_ref: float) -> float:
        th_f = self.filt.step(self.theta) if self.filt else self.theta
        de = (th_f - self.prev_f) / self.dt
        self.prev_f = th_f
        u = self.kp * (theta_ref - th_f) - self.kd * de
        if self.sat is not None:
            u = min(max(u, self.sat[0]), self.sat[1])
        self.theta = self.inner.step(u)
        self.y = self.resid.step(self.theta)
        return self.y

    def acceleration(self) -> float:
        # residual chain output is the lateral velocity; differentiate its lag
        return self.resid.acceleration() if self.resid.n_int else 0.0


def lateral_lumped(inner_model: TransferFunctionModel, t_2: float,
                   tau_out: float, gain: float | None = None) -> TransferFunctionModel:
    """Lumped lateral model sharing the inner lags."""
    t_p, t_1 = inner_model.time_constants
    return TransferFunctionModel.lateral(gain if gain is not None else inner_model.gain,
                                         t_p, t_1, t_2, tau_out)
