"""Relay feedback test with tunable switching phase, and its noise-protected
variant.

The relay output is +h or -h.  Switching thresholds are proportional, via the
phase parameter beta, to the last error extrema, which selects the phase of
the excited limit cycle.  The noise-protected variant replaces the raw
extrema with globally confirmed ones (a candidate extremum counts only after
it has survived an observation window tau_obs unchanged), corrects both
thresholds for the measured noise amplitude, and inhibits switching between a
relay switch and the next confirmed extremum.  Those three measures remove
advance switching, peak inflation, local-peak switching and chattering that
high-frequency measurement noise would otherwise cause.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import (PlantStepper, SimulationConfig, TimeSeries,
                     TransferFunctionModel)


class RelayError(RuntimeError):
    pass


@dataclass(frozen=True)
class MrftConfig:
    amplitude: float            # relay half-amplitude h, control units
    beta: float                 # switching phase parameter, -1 < beta < 1

    def __post_init__(self):
        if not self.amplitude > 0.0:
            raise ValueError(f"relay amplitude must be positive, got {self.amplitude}")
        if not -1.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (-1, 1), got {self.beta}")


@dataclass(frozen=True)
class NpMrftConfig:
    base: MrftConfig
    tau_obs: float              # observation window, s
    noise_amplitude: float = 0.0        # a_n, error units
    highpass_cutoff_hz: float | None = None

    def __post_init__(self):
        if self.tau_obs < 0.0:
            raise ValueError("tau_obs must be non-negative")
        if self.noise_amplitude < 0.0:
            raise ValueError("noise amplitude estimate must be non-negative")


@dataclass
class RelayState:
    """Mutable switching state advanced once per controller tick.

    The current extrema track the running max/min of the present half-wave of
    the error (reset at each zero crossing).  The global extrema hold the
    last values confirmed over the observation window, together with the time
    they occurred and the time they were confirmed.
    """

    u: float = 0.0
    prev_e: float = 0.0
    started: bool = False
    # running half-wave extrema; retain the last completed half-wave value
    cur_max: float = 0.0
    cur_min: float = 0.0
    t_cur_max: float = 0.0
    t_cur_min: float = 0.0
    max_pending: bool = False
    min_pending: bool = False
    # confirmed global extrema (noise-protected mode)
    gmax: float = 0.0
    gmin: float = 0.0
    t_gmax: float = 0.0
    t_gmin: float = 0.0
    gmax_confirmed_at: float = 0.0
    gmin_confirmed_at: float = 0.0
    # bookkeeping; refresh stamps start armed relative to last_switch_t
    last_switch_t: float = -math.inf
    t_max_refresh: float = 0.0
    t_min_refresh: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    period_index: int = 0
    switch_times: list = field(default_factory=list)

    def reset(self, tau_obs: float = 0.0) -> None:
        self.__init__()
        # let the first switch through: windows are already expired at t = 0
        self.t_gmax = self.t_gmin = -tau_obs
        self.gmax_confirmed_at = self.gmin_confirmed_at = -tau_obs


def _track_halfwaves(state: RelayState, e: float, t: float) -> None:
    """Update running half-wave extrema and refresh bookkeeping."""
    if e > 0.0:
        if state.prev_e <= 0.0:            # upward zero crossing
            state.cur_max = e
            state.t_cur_max = t
            state.max_pending = True
            state.t_max_refresh = t
            state.period_index += 1
        elif e > state.cur_max:
            state.cur_max = e
            state.t_cur_max = t
            state.max_pending = True
            state.t_max_refresh = t
    elif e < 0.0:
        if state.prev_e >= 0.0:            # downward zero crossing
            state.cur_min = e
            state.t_cur_min = t
            state.min_pending = True
            state.t_min_refresh = t
        elif e < state.cur_min:
            state.cur_min = e
            state.t_cur_min = t
            state.min_pending = True
            state.t_min_refresh = t
    state.prev_e = e


def mrft_step(state: RelayState, e: float, t: float, cfg: MrftConfig) -> float:
    """Advance the plain relay test one sample and return the control output.

    Thresholds are b1 = -beta*e_min and b2 = beta*e_max with e_max, e_min the
    extrema of the most recent positive and negative error half-waves.  A
    switch is armed only once the extremum it thresholds on has refreshed
    after the previous switch; this is the zero-observation-window limit of
    the noise-protected rule and is what keeps negative-beta operation free
    of immediate re-switching.
    """
    if not math.isfinite(e):
        raise RelayError(f"non-finite error sample at t={t}")
    h, beta = cfg.amplitude, cfg.beta
    _track_halfwaves(state, e, t)
    state.b1 = -beta * state.cur_min
    state.b2 = beta * state.cur_max
    if not state.started:
        state.started = True
        state.u = h if e >= state.b1 else -h
        return state.u
    if state.u > 0.0:
        if state.t_max_refresh > state.last_switch_t and e <= -state.b2:
            state.u = -h
            state.last_switch_t = t
            state.switch_times.append(t)
    else:
        if state.t_min_refresh > state.last_switch_t and e >= state.b1:
            state.u = h
            state.last_switch_t = t
            state.switch_times.append(t)
    return state.u


def np_mrft_step(state: RelayState, e: float, t: float, cfg: NpMrftConfig) -> float:
    """Advance the noise-protected relay test one sample.

    Switching to -h requires the error to cross the corrected threshold
    -b2 = -(beta*e_gmax + a_n*(1-beta)) *and* the global maximum of the
    current period to have been confirmed after the previous switch; the
    confirmation happens tau_obs after the candidate extremum last changed.
    Mirror conditions hold for switching to +h.
    """
    if not math.isfinite(e):
        raise RelayError(f"non-finite error sample at t={t}")
    h, beta = cfg.base.amplitude, cfg.base.beta
    a_n = cfg.noise_amplitude
    tau = cfg.tau_obs
    _track_halfwaves(state, e, t)
    # confirm candidates that survived the observation window unchanged
    if state.max_pending and t >= state.t_cur_max + tau:
        state.gmax = state.cur_max
        state.t_gmax = state.t_cur_max
        state.gmax_confirmed_at = t
        state.max_pending = False
    if state.min_pending and t >= state.t_cur_min + tau:
        state.gmin = state.cur_min
        state.t_gmin = state.t_cur_min
        state.gmin_confirmed_at = t
        state.min_pending = False
    corr = a_n * (1.0 - beta)
    state.b1 = -beta * state.gmin + corr
    state.b2 = beta * state.gmax + corr
    if not state.started:
        state.started = True
        state.u = h if e >= state.b1 else -h
        return state.u
    if state.u > 0.0:
        if state.gmax_confirmed_at > state.last_switch_t and e <= -state.b2:
            state.u = -h
            state.last_switch_t = t
            state.switch_times.append(t)
    else:
        if state.gmin_confirmed_at > state.last_switch_t and e >= state.b1:
            state.u = h
            state.last_switch_t = t
            state.switch_times.append(t)
    return state.u


def switch_inhibited(state: RelayState, t: float) -> bool:
    """True while the next switch of the active direction is locked out,
    either because its extremum is still inside the observation window or
    because no fresh extremum has been confirmed since the last switch."""
    if state.u > 0.0:
        return state.max_pending or state.gmax_confirmed_at <= state.last_switch_t
    return state.min_pending or state.gmin_confirmed_at <= state.last_switch_t


# ---------------------------------------------------------------------------
# relay test runner
# ---------------------------------------------------------------------------

@dataclass
class RelayRun:
    """Relay test log at controller-tick resolution."""

    error: TimeSeries
    control: TimeSeries
    b1: np.ndarray
    b2: np.ndarray
    inhibited: np.ndarray
    switch_times: np.ndarray
    diverged: bool = False

    def to_csv(self, path) -> None:
        data = np.column_stack([self.error.times(), self.error.values,
                                self.control.values, self.b1, self.b2,
                                self.inhibited.astype(float)])
        np.savetxt(path, data, delimiter=",", comments="",
                   header="t,e,u,b1,b2,inhibited")


def run_relay_test(model,
                   relay_cfg: MrftConfig | NpMrftConfig,
                   cfg: SimulationConfig | None = None,
                   noise=None,
                   horizon: float | None = None,
                   max_periods: int | None = None) -> RelayRun:
    """Excite ``model`` with the (NP-)MRFT in closed loop around zero setpoint.

    ``noise`` may be a callable of time added to the measured output.  The
    identification loop is deliberately unfiltered; sensor lag is part of the
    model's dead time.  Samples are logged at the controller rate.
    """
    if cfg is None:
        cfg = SimulationConfig(dt_sim=5e-3, dt_ctrl=5e-3, horizon=60.0,
                               measurement_filter_hz=None)
    if isinstance(relay_cfg, NpMrftConfig):
        stepper, step_cfg = np_mrft_step, relay_cfg
        h = relay_cfg.base.amplitude
        tau_obs = relay_cfg.tau_obs
    else:
        stepper, step_cfg = mrft_step, relay_cfg
        h = relay_cfg.amplitude
        tau_obs = 0.0
    dt = cfg.dt_sim
    ticks = cfg.steps_per_tick
    span = horizon if horizon is not None else cfg.horizon
    n_steps = int(round(span / dt))
    plant = (model.make_stepper(dt) if hasattr(model, "make_stepper")
             else PlantStepper(model, dt))
    state = RelayState()
    state.reset(tau_obs)

    n_ticks = n_steps // ticks + 1
    e_log = np.empty(n_ticks)
    u_log = np.empty(n_ticks)
    b1_log = np.empty(n_ticks)
    b2_log = np.empty(n_ticks)
    inh_log = np.zeros(n_ticks, dtype=bool)
    y = 0.0
    u = 0.0
    tick = 0
    diverged = False
    limit = 1e9 * h
    for k in range(n_steps):
        if k % ticks == 0:
            t = k * dt
            meas = y + (noise(t) if noise is not None else 0.0)
            e = -meas
            u = stepper(state, e, t, step_cfg)
            e_log[tick] = e
            u_log[tick] = u
            b1_log[tick] = state.b1
            b2_log[tick] = state.b2
            inh_log[tick] = switch_inhibited(state, t)
            tick += 1
            if max_periods is not None and len(state.switch_times) >= 2 * max_periods:
                break
        y = plant.step(u)
        if not math.isfinite(y) or abs(y) > limit:
            diverged = True
            break
    return RelayRun(
        error=TimeSeries(0.0, cfg.dt_ctrl, e_log[:tick]),
        control=TimeSeries(0.0, cfg.dt_ctrl, u_log[:tick]),
        b1=b1_log[:tick], b2=b2_log[:tick], inhibited=inh_log[:tick],
        switch_times=np.asarray(state.switch_times), diverged=diverged)


# ---------------------------------------------------------------------------
# describing-function limit cycle prediction
# ---------------------------------------------------------------------------

def beta_min(tau_obs: float, period: float) -> float:
    """Most negative realizable switching phase for a given observation window.

    Under the sinusoidal oscillation assumption the confirmed extremum is
    available tau_obs after the true peak, so phases requiring an earlier
    switch are unreachable.  Valid for tau_obs up to a quarter period.
    """
    if tau_obs <= 0.0 or period <= 0.0:
        raise ValueError("tau_obs and period must be positive")
    ratio = tau_obs / period
    if ratio > 0.25:
        raise ValueError(f"tau_obs/period = {ratio:.3f} exceeds 1/4: phase not realizable")
    return -1.0 + math.sin(2.0 * math.pi * ratio)


def harmonic_balance_predict(model, cfg: MrftConfig,
                             w_lo: float = 1e-3, w_hi: float = 1e4
                             ) -> tuple[float, float]:
    """Limit cycle (amplitude, frequency) from N(a0) * G(jw0) = -1.

    The relay describing function is (4h/(pi*a0)) * (sqrt(1-beta^2) - j*beta),
    so the oscillation sits where the plant phase equals -pi + arcsin(beta),
    with amplitude (4h/pi) * |G(jw0)|.
    """
    target = -math.pi + math.asin(cfg.beta)
    if model.phase(w_lo) <= target:
        raise RelayError("phase already below the harmonic-balance target at w_lo")
    if model.phase(w_hi) > target:
        raise RelayError("no phase crossing of the harmonic-balance target in range")
    lo, hi = w_lo, w_hi
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if model.phase(mid) > target:
            lo = mid
        else:
            hi = mid
    w0 = math.sqrt(lo * hi)
    a0 = 4.0 * cfg.amplitude / math.pi * abs(model.frequency_response(w0))
    return a0, w0
