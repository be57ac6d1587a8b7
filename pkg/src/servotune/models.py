"""Delayed LTI plant models, closed-loop PD simulation, and the ISE cost.

The plant family is a gain, an optional dead time, a chain of first-order
lags, and zero to two pure integrators.  That structure covers propulsion
(no integrator, one lag), attitude/altitude (one integrator, two lags) and
lateral motion (two integrators, three lags).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter


class SimulationError(RuntimeError):
    """Raised when a simulation request is malformed or infeasible."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransferFunctionModel:
    """K * exp(-delay*s) / (s^n * prod(T_i*s + 1)).

    gain:             equivalent static gain K (control units -> output units/s^n)
    time_constants:   lag time constants T_i in seconds
    delay:            dead time in seconds
    integrator_order: number of pure integrators n, 0..2
    """

    gain: float
    time_constants: tuple[float, ...]
    delay: float = 0.0
    integrator_order: int = 0

    def __post_init__(self):
        if not self.gain > 0.0:
            raise ValueError(f"gain must be positive, got {self.gain}")
        if any(t <= 0.0 for t in self.time_constants):
            raise ValueError(f"time constants must be positive, got {self.time_constants}")
        if self.delay < 0.0:
            raise ValueError(f"delay must be non-negative, got {self.delay}")
        if self.integrator_order not in (0, 1, 2):
            raise ValueError(f"integrator order must be 0, 1 or 2, got {self.integrator_order}")
        object.__setattr__(self, "time_constants", tuple(float(t) for t in self.time_constants))

    @classmethod
    def propulsion(cls, k_eq: float, t_prop: float, tau: float) -> "TransferFunctionModel":
        return cls(k_eq, (t_prop,), tau, 0)

    @classmethod
    def inner_loop(cls, k_eq: float, t_prop: float, t_1: float, tau_in: float) -> "TransferFunctionModel":
        """Attitude or altitude dynamics: one integrator, two lags."""
        return cls(k_eq, (t_prop, t_1), tau_in, 1)

    @classmethod
    def lateral(cls, k_eq: float, t_prop: float, t_1: float, t_2: float,
                tau_out: float) -> "TransferFunctionModel":
        """Lateral motion dynamics: two integrators, three lags."""
        return cls(k_eq, (t_prop, t_1, t_2), tau_out, 2)

    def gain_scaled(self, c: float) -> "TransferFunctionModel":
        return replace(self, gain=self.gain * c)

    def time_scaled(self, alpha: float) -> "TransferFunctionModel":
        """Dilate all time parameters by ``alpha``, keeping the gain field.

        Note the frequency response of the dilated model is
        alpha^n * G(alpha * s) evaluated with the original gain.
        """
        return replace(self,
                       time_constants=tuple(alpha * t for t in self.time_constants),
                       delay=alpha * self.delay)

    def normalized(self) -> tuple["TransferFunctionModel", float]:
        """Scale the slowest lag to 1 s and the gain to 1.

        Returns the shape model and the time-scale factor that recovers the
        original time constants.
        """
        scale = max(self.time_constants)
        shape = TransferFunctionModel(
            1.0,
            tuple(sorted((t / scale for t in self.time_constants), reverse=True)),
            self.delay / scale,
            self.integrator_order,
        )
        return shape, scale

    def frequency_response(self, omega):
        """G(j*omega) including the dead-time phase.  Accepts scalars or arrays."""
        w = np.asarray(omega, dtype=float)
        if np.any(w < 0.0):
            raise ValueError("frequency must be non-negative")
        if self.integrator_order >= 1 and np.any(w == 0.0):
            raise ValueError("pole at the origin: omega=0 not evaluable for integrating models")
        jw = 1j * w
        g = self.gain * np.exp(-jw * self.delay)
        for t in self.time_constants:
            g = g / (1.0 + jw * t)
        if self.integrator_order:
            g = g / jw ** self.integrator_order
        return complex(g) if np.isscalar(omega) else g

    def phase(self, omega):
        """Unwrapped open phase in radians, monotone decreasing in omega."""
        w = np.asarray(omega, dtype=float)
        ph = -w * self.delay - self.integrator_order * (np.pi / 2.0)
        for t in self.time_constants:
            ph = ph - np.arctan(w * t)
        return float(ph) if np.isscalar(omega) else ph

    def to_json(self) -> dict:
        return {
            "gain": self.gain,
            "time_constants_s": list(self.time_constants),
            "delay_s": self.delay,
            "integrator_order": self.integrator_order,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TransferFunctionModel":
        return cls(doc["gain"], tuple(doc["time_constants_s"]),
                   doc["delay_s"], doc["integrator_order"])


@dataclass(frozen=True)
class PdGains:
    """Proportional and derivative gains of the PD law u = kp*e + kd*de/dt."""

    kp: float
    kd: float = 0.0

    def __post_init__(self):
        # kp = 0 is tolerated so open-loop baselines can be expressed
        if self.kp < 0.0:
            raise ValueError(f"kp must be non-negative, got {self.kp}")
        if self.kd < 0.0:
            raise ValueError(f"kd must be non-negative, got {self.kd}")

    def scaled(self, c: float) -> "PdGains":
        return PdGains(self.kp * c, self.kd * c)

    def to_json(self) -> dict:
        return {"kp": self.kp, "kd": self.kd}

    @classmethod
    def from_json(cls, doc: dict) -> "PdGains":
        return cls(doc["kp"], doc["kd"])


@dataclass(frozen=True)
class SimulationConfig:
    """Fixed-step simulation setup.

    The plant integrates at ``dt_sim`` while the controller runs every
    ``dt_ctrl`` (default 200 Hz) and holds its output in between.
    """

    dt_sim: float = 1e-3
    dt_ctrl: float = 5e-3
    horizon: float = 20.0
    actuator_saturation: tuple[float, float] | None = None
    measurement_filter_hz: float | None = 20.0
    derivative_on: str = "measurement"    # "measurement" (setpoint-kick free) or "error"
    settle_band: float = 1e-3             # fraction of step, early-exit band
    settle_time: float = 2.0              # seconds inside the band before exit
    rng_seed: int = 0

    def __post_init__(self):
        if self.dt_sim <= 0.0 or self.dt_ctrl <= 0.0:
            raise ValueError("time steps must be positive")
        if self.dt_sim > self.dt_ctrl + 1e-15:
            raise ValueError("dt_sim must not exceed dt_ctrl")
        ratio = self.dt_ctrl / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"dt_ctrl must be an integer multiple of dt_sim, got ratio {ratio}")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.actuator_saturation is not None:
            lo, hi = self.actuator_saturation
            if not lo < hi:
                raise ValueError("saturation bounds must satisfy low < high")
        if self.derivative_on not in ("error", "measurement"):
            raise ValueError("derivative_on must be 'error' or 'measurement'")

    @property
    def steps_per_tick(self) -> int:
        return round(self.dt_ctrl / self.dt_sim)

    def to_json(self) -> dict:
        return {
            "dt_sim_s": self.dt_sim,
            "dt_ctrl_s": self.dt_ctrl,
            "horizon_s": self.horizon,
            "actuator_saturation": list(self.actuator_saturation) if self.actuator_saturation else None,
            "measurement_filter_hz": self.measurement_filter_hz,
            "derivative_on": self.derivative_on,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SimulationConfig":
        sat = doc.get("actuator_saturation")
        return cls(dt_sim=doc.get("dt_sim_s", 1e-3),
                   dt_ctrl=doc.get("dt_ctrl_s", 5e-3),
                   horizon=doc.get("horizon_s", 20.0),
                   actuator_saturation=tuple(sat) if sat else None,
                   measurement_filter_hz=doc.get("measurement_filter_hz", 20.0),
                   derivative_on=doc.get("derivative_on", "measurement"),
                   rng_seed=doc.get("rng_seed", 0))


@dataclass
class TimeSeries:
    """Uniformly sampled signal: value[k] is taken at start + k*dt."""

    start: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    def times(self) -> np.ndarray:
        return self.start + self.dt * np.arange(self.values.size)

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return self.dt * max(len(self) - 1, 0)


@dataclass
class RunTraces:
    """Closed-loop run record at simulation resolution."""

    t: np.ndarray
    reference: np.ndarray
    output: np.ndarray
    error: np.ndarray
    control: np.ndarray
    diverged: bool = False

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.reference, self.output, self.error, self.control])
        np.savetxt(path, data, delimiter=",", comments="",
                   header="t,reference,output,error,control")


# ---------------------------------------------------------------------------
# open-loop simulation
# ---------------------------------------------------------------------------

def simulate_lti(model: TransferFunctionModel, inp: TimeSeries,
                 cfg: SimulationConfig | None = None) -> TimeSeries:
    """Response of the delayed LTI model to ``inp`` from zero initial state.

    The dead time is realized on the input history with linear interpolation
    for fractional-sample delays, each lag by its exact zero-order-hold
    equivalent, and integrators by the trapezoidal rule.
    """
    dt = inp.dt
    if cfg is not None and abs(cfg.dt_sim - dt) > 1e-12:
        raise SimulationError(f"input sampled at {dt} s but config expects dt_sim={cfg.dt_sim} s")
    u = inp.values
    if not np.all(np.isfinite(u)):
        raise SimulationError("non-finite input sample")
    if inp.duration < model.delay:
        raise SimulationError(f"horizon {inp.duration} s shorter than the {model.delay} s delay")

    shift = model.delay / dt
    if shift > 0.0:
        # interpolate into the zero pre-test history for fractional delays
        idx = np.arange(u.size) - shift + 1.0
        u = np.interp(idx, np.arange(u.size + 1), np.concatenate([[0.0], u]),
                      left=0.0)

    y = u
    if model.time_constants:
        num, den = _zoh_chain_tf(model.time_constants, dt)
        y = lfilter(num, den, y)
    for _ in range(model.integrator_order):
        y = lfilter([dt / 2.0, dt / 2.0], [1.0, -1.0], y)
    return TimeSeries(inp.start, dt, model.gain * y)


def frequency_response(model: TransferFunctionModel, omega):
    """Alias for :meth:`TransferFunctionModel.frequency_response`."""
    return model.frequency_response(omega)


# ---------------------------------------------------------------------------
# discrete plant stepper shared by closed-loop and relay runs
# ---------------------------------------------------------------------------

def _chain_state_space(time_constants):
    """Continuous state space of the cascade of first-order lags."""
    m = len(time_constants)
    a = np.zeros((m, m))
    b = np.zeros(m)
    for i, t in enumerate(time_constants):
        a[i, i] = -1.0 / t
        if i == 0:
            b[0] = 1.0 / t
        else:
            a[i, i - 1] = 1.0 / time_constants[i]
    return a, b


def _zoh_discretize(time_constants, dt):
    """Exact zero-order-hold (Phi, Gamma) of the whole lag cascade.

    Per-stage discretization would add half a sample of lag at every stage
    boundary; discretizing the cascade jointly is exact for staircase inputs.
    """
    from scipy.linalg import expm
    a, b = _chain_state_space(time_constants)
    m = len(time_constants)
    blk = np.zeros((m + 1, m + 1))
    blk[:m, :m] = a * dt
    blk[:m, m] = b * dt
    e = expm(blk)
    return e[:m, :m], e[:m, m]


def _zoh_chain_tf(time_constants, dt):
    """Exact discrete transfer function of the lag cascade under ZOH."""
    from scipy.signal import ss2tf
    phi, gamma = _zoh_discretize(time_constants, dt)
    m = len(time_constants)
    c = np.zeros((1, m))
    c[0, -1] = 1.0
    num, den = ss2tf(phi, gamma[:, None], c, np.zeros((1, 1)))
    return num[0], den


class PlantStepper:
    """Steps the delayed lag/integrator chain one ``dt`` at a time.

    The control input is treated as piecewise constant over simulation steps;
    the lag cascade advances by its exact zero-order-hold equivalent and the
    integrators by the trapezoidal rule.  The delayed input is reconstructed
    from a short history buffer with linear interpolation, so dead times need
    not be multiples of ``dt``.
    """

    __slots__ = ("dt", "gain", "phi", "gamma", "n_lags", "n_int", "lag_states",
                 "int_states", "prev_chain", "hist", "hist_len", "shift", "k",
                 "last_lag_t", "u_delayed", "y")

    def __init__(self, model: TransferFunctionModel, dt: float):
        self.dt = dt
        self.gain = model.gain
        self.n_lags = len(model.time_constants)
        if self.n_lags:
            phi, gamma = _zoh_discretize(model.time_constants, dt)
            self.phi = [tuple(row) for row in phi]
            self.gamma = tuple(gamma)
        else:
            self.phi = []
            self.gamma = ()
        self.n_int = model.integrator_order
        self.lag_states = [0.0] * self.n_lags
        self.int_states = [0.0] * self.n_int
        self.prev_chain = [0.0] * max(self.n_int, 1)
        self.shift = model.delay / dt
        self.hist_len = int(math.ceil(self.shift)) + 2
        self.hist = [0.0] * self.hist_len
        self.k = 0
        self.last_lag_t = model.time_constants[-1] if model.time_constants else None
        self.u_delayed = 0.0
        self.y = 0.0

    def step(self, u: float) -> float:
        """Advance one dt with plant input ``u`` applied over the step."""
        h = self.hist
        n = self.hist_len
        k = self.k
        h[k % n] = u
        # delayed input at the start of the step, linearly interpolated
        lo = int(math.floor(self.shift))
        frac = self.shift - lo
        i0 = k - lo
        a = h[i0 % n] if i0 >= 0 else 0.0
        if frac > 0.0:
            i1 = i0 - 1
            b = h[i1 % n] if i1 >= 0 else 0.0
            a = a * (1.0 - frac) + b * frac
        self.u_delayed = a
        states = self.lag_states
        if self.n_lags:
            new = [0.0] * self.n_lags
            for i in range(self.n_lags):
                row = self.phi[i]
                acc = self.gamma[i] * a
                for j in range(self.n_lags):
                    acc += row[j] * states[j]
                new[i] = acc
            self.lag_states = states = new
            x = states[-1]
        else:
            x = a
        prev = self.prev_chain
        half_dt = 0.5 * self.dt
        for i in range(self.n_int):
            nxt = self.int_states[i] + half_dt * (prev[i] + x)
            prev[i] = x
            self.int_states[i] = nxt
            x = nxt
        self.k = k + 1
        self.y = self.gain * x
        return self.y

    @property
    def output(self) -> float:
        return self.y

    def acceleration(self) -> float:
        """Second time derivative of the output, for IMU emulation.

        Valid for integrator orders 1 and 2 where the lag-chain output is the
        acceleration or velocity respectively.
        """
        if self.n_int == 2:
            return self.gain * self.prev_chain[0]
        if self.n_int == 1:
            # velocity is the last lag output; differentiate its state equation
            if not self.lag_states:
                return 0.0
            w = self.lag_states[-1]
            up = self.lag_states[-2] if self.n_lags >= 2 else self.u_delayed
            return self.gain * (up - w) / self.last_lag_t
        raise SimulationError("acceleration only defined for integrating models")


class Biquad:
    """Second-order Butterworth low-pass section, direct form 2 transposed."""

    __slots__ = ("b0", "b1", "b2", "a1", "a2", "z1", "z2")

    def __init__(self, cutoff_hz: float, fs: float):
        if cutoff_hz <= 0.0 or cutoff_hz >= fs / 2.0:
            raise ValueError(f"cutoff {cutoff_hz} Hz not inside (0, fs/2) for fs={fs} Hz")
        # bilinear transform with prewarping
        wc = math.tan(math.pi * cutoff_hz / fs)
        q = 1.0 / math.sqrt(2.0)
        norm = 1.0 + wc / q + wc * wc
        self.b0 = wc * wc / norm
        self.b1 = 2.0 * self.b0
        self.b2 = self.b0
        self.a1 = 2.0 * (wc * wc - 1.0) / norm
        self.a2 = (1.0 - wc / q + wc * wc) / norm
        self.z1 = 0.0
        self.z2 = 0.0

    def step(self, x: float) -> float:
        y = self.b0 * x + self.z1
        self.z1 = self.b1 * x - self.a1 * y + self.z2
        self.z2 = self.b2 * x - self.a2 * y
        return y

    def filter(self, values: np.ndarray) -> np.ndarray:
        out = np.empty_like(values)
        for i, v in enumerate(values):
            out[i] = self.step(float(v))
        return out


# ---------------------------------------------------------------------------
# closed-loop step response
# ---------------------------------------------------------------------------

def closed_loop_step(model: TransferFunctionModel, gains: PdGains,
                     step_amplitude: float, cfg: SimulationConfig | None = None
                     ) -> tuple[RunTraces, float]:
    """Simulate a PD-controlled reference step and return traces plus ISE.

    A diverging loop is reported with ``traces.diverged`` set and an infinite
    ISE rather than an exception, so optimizers can rank it.
    """
    if cfg is None:
        cfg = SimulationConfig()
    dt = cfg.dt_sim
    n_steps = int(round(cfg.horizon / dt))
    ticks = cfg.steps_per_tick
    plant = PlantStepper(model, dt)
    filt = (Biquad(cfg.measurement_filter_hz, 1.0 / cfg.dt_ctrl)
            if cfg.measurement_filter_hz else None)
    sat = cfg.actuator_saturation
    amp = float(step_amplitude)
    kp, kd = gains.kp, gains.kd
    inv_dtc = 1.0 / cfg.dt_ctrl
    on_error = cfg.derivative_on == "error"

    t_arr = np.empty(n_steps)
    y_arr = np.empty(n_steps)
    u_arr = np.empty(n_steps)

    y = 0.0
    u_held = 0.0
    prev_d = 0.0        # previous filtered error (or measurement)
    diverge_at = None
    settle_count = 0
    settle_needed = int(round(cfg.settle_time / dt))
    band = cfg.settle_band * abs(amp)
    limit = 1e6 * max(abs(amp), 1e-9)
    end = n_steps

    for k in range(n_steps):
        if k % ticks == 0:
            y_f = filt.step(y) if filt else y
            e_f = amp - y_f
            if on_error:
                de = (e_f - prev_d) * inv_dtc
                prev_d = e_f
            else:
                de = -(y_f - prev_d) * inv_dtc
                prev_d = y_f
            u = kp * e_f + kd * de
            if sat is not None:
                if u < sat[0]:
                    u = sat[0]
                elif u > sat[1]:
                    u = sat[1]
            u_held = u
        y = plant.step(u_held)
        t_arr[k] = (k + 1) * dt
        y_arr[k] = y
        u_arr[k] = u_held
        if not math.isfinite(y) or abs(y) > limit:
            diverge_at = k + 1
            end = k + 1
            break
        if abs(amp - y) < band:
            settle_count += 1
            if settle_count >= settle_needed:
                end = k + 1
                break
        else:
            settle_count = 0

    t_arr = t_arr[:end]
    y_arr = y_arr[:end]
    u_arr = u_arr[:end]
    ref = np.full(end, amp)
    err = ref - y_arr
    traces = RunTraces(t_arr, ref, y_arr, err, u_arr, diverged=diverge_at is not None)
    if diverge_at is not None:
        return traces, math.inf
    # include the t=0 sample (error = amp) in the cost integral
    e_full = np.concatenate([[amp], err])
    ise = float(np.trapezoid(e_full * e_full, dx=dt))
    return traces, ise


def ise_cost(error: TimeSeries) -> float:
    """Trapezoidal integral of the squared error over the series."""
    if len(error) == 0:
        raise ValueError("empty error series")
    e = error.values
    return float(np.trapezoid(e * e, dx=error.dt))


def percent_overshoot(traces: RunTraces, step_amplitude: float) -> float:
    peak = float(np.max(traces.output)) if step_amplitude > 0 else float(np.min(traces.output))
    return (peak - step_amplitude) / step_amplitude * 100.0


def rise_time(traces: RunTraces, step_amplitude: float,
              lo: float = 0.1, hi: float = 0.9) -> float:
    """10-90% rise time of the step response."""
    y = traces.output / step_amplitude
    above_lo = np.nonzero(y >= lo)[0]
    above_hi = np.nonzero(y >= hi)[0]
    if above_lo.size == 0 or above_hi.size == 0:
        return math.inf
    return float(traces.t[above_hi[0]] - traces.t[above_lo[0]])
