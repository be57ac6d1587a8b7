"""Closed-loop servoing scenarios: estimator in the loop, scheduled gains,
and the disturbance experiments (target steps, wind, pull and release)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fusion import WITH_KF, WITHOUT_KF, KfState, ScheduleSupervisor, kf_predict, kf_update
from .models import PdGains, PlantStepper, SimulationConfig, TransferFunctionModel
from .sensors import SensorProfile


@dataclass(frozen=True)
class GainSchedule:
    with_kf: PdGains
    without_kf: PdGains


@dataclass
class EventScript:
    """Timed disturbances, all optional."""

    target_steps: list = field(default_factory=list)   # (t, position jump)
    wind_steps: list = field(default_factory=list)     # (t, input force step)
    pulls: list = field(default_factory=list)          # (t_on, t_release, force)
    reference_steps: list = field(default_factory=list)  # (t, setpoint jump)

    def target_offset(self, t: float) -> float:
        return sum(d for (ts, d) in self.target_steps if t >= ts)

    def reference(self, t: float) -> float:
        return sum(d for (ts, d) in self.reference_steps if t >= ts)

    def input_disturbance(self, t: float) -> float:
        d = sum(f for (ts, f) in self.wind_steps if t >= ts)
        for (t_on, t_off, force) in self.pulls:
            if t_on <= t < t_off:
                ramp = min(1.0, (t - t_on) / max(0.2 * (t_off - t_on), 1e-6))
                d += force * ramp
        return d


@dataclass
class ServoScenario:
    plant: object                      # TransferFunctionModel or CascadedPlant
    schedule: GainSchedule
    sensor: SensorProfile
    script: EventScript = field(default_factory=EventScript)
    cfg: SimulationConfig = field(default_factory=lambda: SimulationConfig(horizon=12.0))
    sigma_meas: float = 0.01           # KF camera noise parameter, m
    sigma_process: float = 0.05
    accel_bias: float = 0.0
    accel_sigma: float = 0.0
    rng_seed: int = 0
    pin_schedule: int | None = None    # identification runs pin the schedule

    def __post_init__(self):
        horizon = self.cfg.horizon
        for (ts, _) in self.script.target_steps + self.script.wind_steps \
                + self.script.reference_steps:
            if not 0.0 <= ts <= horizon:
                raise ValueError(f"scripted event at t={ts} outside the horizon")
        for (t_on, t_off, force) in self.script.pulls:
            if not (0.0 <= t_on < t_off <= horizon):
                raise ValueError("pull interval must lie inside the horizon")
            if not math.isfinite(force):
                raise ValueError("pull force must be finite")


@dataclass
class ScenarioResult:
    t: np.ndarray
    truth: np.ndarray            # measured-center ground truth
    reference: np.ndarray
    estimate: np.ndarray         # KF position estimate
    estimate_cov: np.ndarray     # position variance
    error: np.ndarray            # controller error in force at each tick
    control: np.ndarray
    schedule: np.ndarray
    camera_t: np.ndarray
    camera_values: np.ndarray
    switch_times: list
    diverged: bool = False

    def metrics(self) -> dict:
        err = self.reference - self.truth
        ise = float(np.trapezoid(err * err, self.t))
        return {
            "ise": ise,
            "max_abs_error": float(np.max(np.abs(err))),
            "final_error": float(err[-1]),
            "schedule_switches": list(self.switch_times),
            "diverged": self.diverged,
        }

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.reference, self.truth,
                                self.estimate, self.error, self.control,
                                self.schedule])
        np.savetxt(path, data, delimiter=",", comments="",
                   header="t,reference,truth,estimate,error,control,schedule")


def run_scenario(s: ServoScenario) -> ScenarioResult:
    """Deterministic event loop over plant ticks, camera frames and control."""
    cfg = s.cfg
    dt = cfg.dt_sim
    ticks = cfg.steps_per_tick
    n = int(round(cfg.horizon / dt))
    rng = np.random.default_rng(s.rng_seed)
    plant = (s.plant.make_stepper(dt) if hasattr(s.plant, "make_stepper")
             else PlantStepper(s.plant, dt))

    kf = KfState(cfg.dt_ctrl, s.sigma_process)
    sup = ScheduleSupervisor(sigma_meas=max(s.sigma_meas, 1e-6))
    if s.pin_schedule is not None:
        sup.schedule = s.pin_schedule
        sup.pinned = True

    frame_dt = 1.0 / s.sensor.rate_hz
    next_frame = 0.0
    pending: list[tuple[float, float]] = []   # (deliver time, value)
    z_latest = 0.0
    z_prev = 0.0
    z_deriv = 0.0
    have_fix = False

    t_arr = np.empty(n); truth_arr = np.empty(n); ref_arr = np.empty(n)
    est_arr = np.empty(n); cov_arr = np.empty(n); err_arr = np.empty(n)
    u_arr = np.empty(n); sched_arr = np.empty(n, dtype=int)
    cam_t, cam_v = [], []

    y = 0.0
    u_held = 0.0
    sat = cfg.actuator_saturation
    diverged = False
    end = n

    for k in range(n):
        t = k * dt
        c_truth = y + s.script.target_offset(t)
        ref = s.script.reference(t)

        # camera frame capture
        if t >= next_frame - 1e-12:
            v = c_truth
            if s.sensor.sigma > 0.0:
                v += float(rng.standard_normal()) * s.sensor.sigma
            if s.sensor.hf_amplitude > 0.0:
                v += s.sensor.hf_amplitude * math.sin(s.sensor.hf_omega * t
                                                      + s.sensor.hf_phase)
            if s.sensor.quantization > 0.0:
                v = round(v / s.sensor.quantization) * s.sensor.quantization
            pending.append((t + s.sensor.latency, v))
            next_frame += frame_dt

        if k % ticks == 0:
            # inertial prediction at the controller/IMU rate
            accel = plant.acceleration() + s.accel_bias
            if s.accel_sigma > 0.0:
                accel += float(rng.standard_normal()) * s.accel_sigma
            kf = kf_predict(kf, accel)
            # deliver due camera frames
            while pending and pending[0][0] <= t:
                _, z = pending.pop(0)
                kf, innovation = kf_update(kf, z, s.sigma_meas)
                sup.observe_innovation(innovation, t)
                z_deriv = (z - z_prev) / frame_dt if have_fix else 0.0
                z_prev = z_latest = z
                have_fix = True
                cam_t.append(t); cam_v.append(z)
            # control law per active schedule
            if sup.schedule == WITH_KF:
                g = s.schedule.with_kf
                e = ref - kf.position
                u = g.kp * e - g.kd * kf.velocity
            else:
                g = s.schedule.without_kf
                e = ref - z_latest
                u = g.kp * e - g.kd * z_deriv
            sup.observe_error(ref - z_latest if have_fix else e, t)
            if sat is not None:
                u = min(max(u, sat[0]), sat[1])
            u_held = u
        else:
            e = ref - kf.position

        y = plant.step(u_held + s.script.input_disturbance(t))
        t_arr[k] = t; truth_arr[k] = c_truth; ref_arr[k] = ref
        est_arr[k] = kf.position; cov_arr[k] = kf.cov[0, 0]
        err_arr[k] = e; u_arr[k] = u_held; sched_arr[k] = sup.schedule
        if not math.isfinite(y) or abs(y) > 1e6:
            diverged = True
            end = k + 1
            break

    sl = slice(0, end)
    return ScenarioResult(t_arr[sl], truth_arr[sl], ref_arr[sl], est_arr[sl],
                          cov_arr[sl], err_arr[sl], u_arr[sl], sched_arr[sl],
                          np.asarray(cam_t), np.asarray(cam_v),
                          sup.switch_times, diverged)
