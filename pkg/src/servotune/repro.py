"""Published-value reproduction checks behind the `reproduce` command."""

from __future__ import annotations

import math

from .models import SimulationConfig
from .presets import altitude_step_metrics
from .relay import beta_min


def _check(name, value, expected, tolerance, kind="abs") -> dict:
    if kind == "abs":
        passed = abs(value - expected) <= tolerance
    else:
        passed = abs(value - expected) <= tolerance * abs(expected)
    return {"name": name, "value": float(value), "expected": float(expected),
            "tolerance": tolerance if kind == "abs" else f"{tolerance:.0%} rel",
            "passed": bool(passed)}


def run_suite(suite: str = "tables") -> dict:
    """Quick reproduction suite; the full acceptance checks live in pytest."""
    if suite != "tables":
        raise ValueError(f"unknown suite {suite!r}")
    checks = []
    checks.append(_check("beta_min at window ratio 0.015",
                         beta_min(0.015, 1.0), -0.906, 1e-3))
    m_kf = altitude_step_metrics("normal", True)
    checks.append(_check("altitude step overshoot, normal sensor with estimator",
                         m_kf["overshoot_percent"], 6.32, 1.0))
    q_n = altitude_step_metrics("normal", False)["ise"]
    q_e = altitude_step_metrics("event", False)["ise"]
    checks.append(_check("estimator-free step cost ratio, normal over event",
                         q_n / q_e, 0.1629 / 0.1068, 0.15, kind="rel"))
    return {"suite": suite, "checks": checks}
