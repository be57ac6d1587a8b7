"""Sensitivity-driven discretization of the process-parameter space.

A candidate lattice covers the physical parameter ranges; candidates whose
relative-sensitivity distance to every already accepted class exceeds the
target join the grid.  Gain is normalized out (all classes have unit gain)
and lattice points that are pure time dilations of an accepted shape are
deduplicated up front, since the scale properties make them equivalent.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cycles import LimitCycle
from .models import PdGains, SimulationConfig, TransferFunctionModel
from .relay import MrftConfig, harmonic_balance_predict
from .tuning import LoopCache, TuningSpec, fast_step_metrics, gain_box

# grid tuning searches a slightly wider box than optimize_pd while staying
# on the robust side of the margin constraint
GRID_KP_FRACTIONS = (0.03, 0.9)
GRID_KD_FRACTIONS = (0.0, 0.3)

# parameter ranges (seconds)
T_PROP_RANGE = (0.015, 0.3)
T_1_RANGE = (0.2, 2.0)
T_2_RANGE = (0.2, 6.0)
TAU_IN_RANGE = (0.0005, 0.03)
TAU_IN_ALT_RANGE = (0.0005, 0.06)
TAU_OUT_RANGE = (0.0005, 0.15)

DEFAULT_TARGET_J = 10.0          # percent

# lattice densities reproducing the published class counts at target_J = 10%
_LATTICE = {
    "attitude": (10, 10, 14),
    "altitude": (12, 10, 26),
    "lateral": (8, 9),
}


@dataclass
class GridClass:
    index: int
    model: TransferFunctionModel
    gains: PdGains
    q_optimal: float
    shape_key: tuple
    ref_cycle: LimitCycle | None = None

    def to_json(self) -> dict:
        return {"index": self.index, "model": self.model.to_json(),
                "gains": self.gains.to_json(), "q_optimal": self.q_optimal,
                "shape_key": list(self.shape_key),
                "ref_cycle": self.ref_cycle.to_json() if self.ref_cycle else None}

    @classmethod
    def from_json(cls, doc: dict) -> "GridClass":
        ref = doc.get("ref_cycle")
        return cls(doc["index"], TransferFunctionModel.from_json(doc["model"]),
                   PdGains.from_json(doc["gains"]), doc["q_optimal"],
                   tuple(doc["shape_key"]),
                   LimitCycle.from_json(ref) if ref else None)


@dataclass
class ProcessGrid:
    """Discretized process classes with their sensitivity matrix."""

    loop: str
    classes: list[GridClass]
    target_j: float
    relay_amplitude: float
    beta_star: float
    j_matrix: np.ndarray | None = None
    inner_model: TransferFunctionModel | None = None    # lateral grids only
    inner_gains: PdGains | None = None

    def __len__(self) -> int:
        return len(self.classes)

    def models(self) -> list[TransferFunctionModel]:
        return [c.model for c in self.classes]

    def j_row(self, label: int) -> np.ndarray:
        if self.j_matrix is None:
            raise ValueError("sensitivity matrix not computed for this grid")
        return self.j_matrix[label]

    def to_json(self) -> dict:
        return {
            "loop": self.loop,
            "target_j_percent": self.target_j,
            "relay_amplitude": self.relay_amplitude,
            "beta_star": self.beta_star,
            "classes": [c.to_json() for c in self.classes],
            "j_matrix_percent": self.j_matrix.tolist() if self.j_matrix is not None else None,
            "inner_model": self.inner_model.to_json() if self.inner_model else None,
            "inner_gains": self.inner_gains.to_json() if self.inner_gains else None,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, doc: dict) -> "ProcessGrid":
        jm = doc.get("j_matrix_percent")
        inner = doc.get("inner_model")
        ig = doc.get("inner_gains")
        return cls(doc["loop"], [GridClass.from_json(c) for c in doc["classes"]],
                   doc["target_j_percent"], doc["relay_amplitude"], doc["beta_star"],
                   np.asarray(jm) if jm is not None else None,
                   TransferFunctionModel.from_json(inner) if inner else None,
                   PdGains.from_json(ig) if ig else None)

    @classmethod
    def load(cls, path) -> "ProcessGrid":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def export_j_csv(self, path) -> None:
        if self.j_matrix is None:
            raise ValueError("sensitivity matrix not computed")
        np.savetxt(path, self.j_matrix, delimiter=",")


# ---------------------------------------------------------------------------
# fast surrogate optimization used during construction
# ---------------------------------------------------------------------------

def _nelder_mead_2d(fn, x0, budget, scale=0.25):
    """Tiny deterministic Nelder-Mead on the unit square."""
    from scipy.optimize import minimize
    res = minimize(fn, np.asarray(x0), method="Nelder-Mead",
                   bounds=[(0.0, 1.0), (0.0, 1.0)],
                   options={"maxfev": budget, "xatol": 1e-3, "fatol": 1e-8,
                            "initial_simplex": np.array([x0, [min(x0[0] + scale, 1.0), x0[1]],
                                                         [x0[0], min(x0[1] + scale, 1.0)]])})
    return res.x, res.fun


def tuning_cost(model, gains: PdGains, spec: TuningSpec,
                cache: LoopCache) -> float:
    """Margin-penalized step ISE; only the optimizer sees the penalty."""
    ise, pm, _ = fast_step_metrics(model, gains, 1.0, spec.filter_hz,
                                   cache=cache)
    if not math.isfinite(ise):
        return math.inf
    deficit = max(0.0, spec.min_phase_margin - pm) if pm is not math.inf else 0.0
    return ise * (1.0 + (deficit / 0.25) ** 2)


def performance_cost(model, gains: PdGains, spec: TuningSpec,
                     cache: LoopCache | None = None) -> float:
    """Raw step ISE backing the sensitivity distance; unstable is infinite."""
    ise, _, _ = fast_step_metrics(model, gains, 1.0, spec.filter_hz,
                                  cache=cache)
    return ise


def surrogate_optimize(model: TransferFunctionModel, spec: TuningSpec,
                       cache: LoopCache | None = None, budget: int = 70
                       ) -> tuple[PdGains, float]:
    """Operating-cost optimum inside the standard gain box."""
    if cache is None:
        cache = LoopCache(model, spec.filter_hz)
    (kp_lo, kp_hi), (kd_lo, kd_hi) = gain_box(model, spec.filter_hz,
                                              GRID_KP_FRACTIONS, GRID_KD_FRACTIONS)

    def obj(x):
        kp = kp_lo + (kp_hi - kp_lo) * min(max(x[0], 0.0), 1.0)
        kd = kd_lo + (kd_hi - kd_lo) * min(max(x[1], 0.0), 1.0)
        if kp <= 0.0:
            return math.inf
        c = tuning_cost(model, PdGains(kp, kd), spec, cache)
        return c if math.isfinite(c) else 1e9

    best_x, best_f = None, math.inf
    for s in ((0.2, 0.2), (0.5, 0.4), (0.85, 0.7)):
        x, f = _nelder_mead_2d(obj, s, budget)
        if f < best_f:
            best_x, best_f = x, f
    kp = kp_lo + (kp_hi - kp_lo) * min(max(best_x[0], 0.0), 1.0)
    kd = kd_lo + (kd_hi - kd_lo) * min(max(best_x[1], 0.0), 1.0)
    gains = PdGains(kp, kd)
    return gains, performance_cost(model, gains, spec, cache)


def _shape_key(t_small: float, t_big: float, tau: float) -> tuple:
    """Dilation-invariant rounded signature of a two-lag shape."""
    return (round(math.log10(t_small / t_big), 2), round(math.log10(tau / t_big), 2))


def _log_space(lo: float, hi: float, n: int) -> np.ndarray:
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def build_grid(loop: str, target_j: float = DEFAULT_TARGET_J,
               spec: TuningSpec | None = None,
               lattice: tuple | None = None,
               inner_model: TransferFunctionModel | None = None,
               inner_gains: PdGains | None = None,
               with_reference_cycles: bool = True,
               with_j_matrix: bool = True,
               progress=None) -> ProcessGrid:
    """Greedy sensitivity packing of the parameter lattice.

    A candidate joins the grid when its symmetrized sensitivity to every
    accepted class exceeds ``target_j`` percent.  For lateral grids the
    candidate models share the attitude class's fast lags and the cascade is
    handled by the caller's cost functions through the lumped product model.
    """
    if spec is None:
        spec = TuningSpec()
    if target_j <= 0.0:
        raise ValueError("target_j must be positive")
    lattice = lattice or _LATTICE[loop]
    beta_star = spec.beta_lateral if loop == "lateral" else (
        spec.beta_altitude if loop == "altitude" else spec.beta_lateral)

    if loop in ("attitude", "altitude"):
        tau_range = TAU_IN_ALT_RANGE if loop == "altitude" else TAU_IN_RANGE
        n_p, n_1, n_tau = lattice
        candidates = []
        for t_p, t_1, tau in itertools.product(
                _log_space(*T_PROP_RANGE, n_p), _log_space(*T_1_RANGE, n_1),
                _log_space(*tau_range, n_tau)):
            t_big, t_small = max(t_p, t_1), min(t_p, t_1)
            # raw-box key: the absolute-scale loop elements (measurement filter,
            # controller rate, saturations) break pure time-dilation equivalence
            key = (round(math.log10(t_small / t_big), 2),
                   round(math.log10(tau / t_big), 2),
                   round(math.log10(t_big), 2))
            candidates.append((key, TransferFunctionModel.inner_loop(1.0, t_p, t_1, tau)))
    elif loop == "lateral":
        if inner_model is None or inner_gains is None:
            raise ValueError("lateral grids require the identified inner loop")
        n_2, n_tau = lattice
        t_p, t_1 = inner_model.time_constants
        candidates = []
        for t_2, tau in itertools.product(_log_space(*T_2_RANGE, n_2),
                                          _log_space(*TAU_OUT_RANGE, n_tau)):
            if tau < inner_model.delay:   # residual dead time must be causal
                continue
            key = (round(math.log10(t_2), 2), round(math.log10(tau), 2))
            candidates.append((key, TransferFunctionModel.lateral(1.0, t_p, t_1, t_2, tau)))
    else:
        raise ValueError(f"unknown loop kind {loop!r}")

    # deterministic insertion order: slow, low-delay shapes first
    candidates.sort(key=lambda c: c[0][::-1])

    def as_plant(model):
        if loop != "lateral":
            return model
        from .cascade import CascadedPlant
        return CascadedPlant(inner_model, inner_gains, model, spec.filter_hz)

    accepted: list[GridClass] = []
    caches: list[LoopCache] = []
    plants: list = []
    for n_done, (key, model) in enumerate(candidates):
        plant = as_plant(model)
        cache = LoopCache(plant, spec.filter_hz)
        gains, q_self = surrogate_optimize(plant, spec, cache)
        if not math.isfinite(q_self):
            continue
        # sensitivity against accepted classes, nearest first, early exit
        order = sorted(range(len(accepted)),
                       key=lambda i: sum((a - b) ** 2 for a, b in
                                         zip(accepted[i].shape_key, key)))
        distinct = True
        for i in order:
            cls = accepted[i]
            # controller of the accepted class applied to the candidate process
            q_on_cand = performance_cost(plant, cls.gains, spec, cache)
            j_cls_cand = math.inf if not math.isfinite(q_on_cand) else \
                (q_on_cand - q_self) / q_self * 100.0
            if j_cls_cand <= target_j:
                q_on_cls = performance_cost(plants[i], gains, spec, caches[i])
                j_cand_cls = math.inf if not math.isfinite(q_on_cls) else \
                    (q_on_cls - cls.q_optimal) / cls.q_optimal * 100.0
                if max(j_cls_cand, j_cand_cls) <= target_j:
                    distinct = False
                    break
        if distinct:
            accepted.append(GridClass(len(accepted), model, gains, q_self, key))
            caches.append(cache)
            plants.append(plant)
        if progress is not None and (n_done + 1) % 100 == 0:
            progress(n_done + 1, len(candidates), len(accepted))

    grid = ProcessGrid(loop, accepted, target_j, spec.relay_amplitude, beta_star,
                       inner_model=inner_model, inner_gains=inner_gains)
    if with_j_matrix:
        compute_j_matrix(grid, spec)
    if with_reference_cycles:
        attach_reference_cycles(grid, spec)
    return grid


def _class_plant(grid: ProcessGrid, cls: GridClass):
    if grid.loop != "lateral":
        return cls.model
    from .cascade import CascadedPlant
    return CascadedPlant(grid.inner_model, grid.inner_gains, cls.model,
                         TuningSpec().filter_hz)


def compute_j_matrix(grid: ProcessGrid, spec: TuningSpec | None = None) -> np.ndarray:
    """Symmetrized percent sensitivity between every pair of classes."""
    if spec is None:
        spec = TuningSpec()
    n = len(grid.classes)
    q_self = np.array([c.q_optimal for c in grid.classes])
    plants = [_class_plant(grid, c) for c in grid.classes]
    caches = [LoopCache(p, spec.filter_hz) for p in plants]
    j = np.zeros((n, n))
    for i, ci in enumerate(grid.classes):
        for k in range(i + 1, n):
            ck = grid.classes[k]
            q_ik = performance_cost(plants[k], ci.gains, spec, caches[k])
            q_ki = performance_cost(plants[i], ck.gains, spec, caches[i])
            j_ik = math.inf if not math.isfinite(q_ik) else (q_ik - q_self[k]) / q_self[k] * 100.0
            j_ki = math.inf if not math.isfinite(q_ki) else (q_ki - q_self[i]) / q_self[i] * 100.0
            j[i, k] = j[k, i] = max(j_ik, j_ki)
    grid.j_matrix = j
    return j


def relay_sim_config(model, h: float, beta: float,
                     periods: float = 30.0) -> SimulationConfig:
    """Simulation setup resolving the predicted limit cycle of ``model``."""
    _, w0 = harmonic_balance_predict(model, MrftConfig(h, beta))
    t0 = 2.0 * math.pi / w0
    dt = min(5e-3, t0 / 120.0)
    return SimulationConfig(dt_sim=dt, dt_ctrl=dt, horizon=periods * t0,
                            measurement_filter_hz=None)


def attach_reference_cycles(grid: ProcessGrid, spec: TuningSpec | None = None) -> None:
    """Record each class's noise-free limit cycle under (h, beta_star)."""
    from .cycles import CycleNotConverged, detect_limit_cycle
    from .relay import run_relay_test
    if spec is None:
        spec = TuningSpec()
    h, beta = grid.relay_amplitude, grid.beta_star
    for cls in grid.classes:
        plant = _class_plant(grid, cls)
        cfg = relay_sim_config(plant, h, beta)
        run = run_relay_test(plant, MrftConfig(h, beta), cfg)
        try:
            cls.ref_cycle = detect_limit_cycle(run.error, run.control)
        except CycleNotConverged:
            cfg = relay_sim_config(plant, h, beta, periods=60.0)
            run = run_relay_test(plant, MrftConfig(h, beta), cfg)
            cls.ref_cycle = detect_limit_cycle(run.error, run.control)
