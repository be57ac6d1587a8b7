import math

import numpy as np
import pytest

from servotune.cascade import CascadedPlant, lateral_lumped
from servotune.models import PdGains, SimulationConfig, TransferFunctionModel
from servotune.presets import LATERAL_ROWS
from servotune.tuning import phase_margin

INNER = TransferFunctionModel.inner_loop(1.0, 0.08, 0.4, 0.008)
INNER_GAINS = PdGains(8.0, 1.5)


def test_residual_factorization():
    lumped = lateral_lumped(INNER, 1.2, 0.05)
    plant = CascadedPlant(INNER, INNER_GAINS, lumped)
    resid = plant.residual
    assert resid.integrator_order == 1
    assert resid.time_constants == (1.2,)
    assert resid.delay == pytest.approx(0.05 - 0.008)
    # product of factors reproduces the lumped response
    w = np.logspace(-2, 2, 50)
    lhs = INNER.frequency_response(w) * resid.frequency_response(w)
    rhs = lumped.frequency_response(w)
    assert np.allclose(lhs, rhs, rtol=1e-9)


def test_cascade_requires_causal_outer_delay():
    with pytest.raises(ValueError):
        CascadedPlant(INNER, INNER_GAINS, lateral_lumped(INNER, 1.2, 0.001))


def test_published_lateral_gains_stabilize_cascade_not_single_loop():
    row = LATERAL_ROWS[("normal", True)]
    lumped = lateral_lumped(INNER, row.t_2, max(row.tau_out, INNER.delay))
    # single-loop PD on the lumped double-integrator model: no positive margin
    pm_single = phase_margin(lumped, row.gains, 20.0)
    assert not (pm_single > 0.0 and pm_single is not math.inf)
    plant = CascadedPlant(INNER, INNER_GAINS, lumped)
    pm_cascade = phase_margin(plant, row.gains, 20.0)
    assert pm_cascade > 20.0


def test_cascade_step_response_is_stable():
    row = LATERAL_ROWS[("normal", True)]
    lumped = lateral_lumped(INNER, row.t_2, max(row.tau_out, INNER.delay))
    plant = CascadedPlant(INNER, INNER_GAINS, lumped)
    dt = 1e-3
    stepper = plant.make_stepper(dt)
    kp, kd = row.gains.kp, row.gains.kd
    y = 0.0
    prev = 0.0
    ys = []
    for k in range(int(15.0 / dt)):
        if k % 5 == 0:
            e = 1.0 - y
            de = (y - prev) / 5e-3
            prev = y
            u = kp * e - kd * de
            u = min(max(u, -0.2617), 0.2617)
        y = stepper.step(u)
        ys.append(y)
    ys = np.asarray(ys)
    assert abs(ys[-1] - 1.0) < 0.05
    assert np.max(ys) < 1.6


def test_frequency_and_phase_consistency():
    lumped = lateral_lumped(INNER, 1.2, 0.05)
    plant = CascadedPlant(INNER, INNER_GAINS, lumped)
    w = np.logspace(-2, 2, 200)
    resp = plant.frequency_response(w)
    ph = plant.phase(w)
    # the analytic phase must agree with the response angle modulo 2*pi
    ang = np.angle(resp)
    diff = (ph - ang + math.pi) % (2 * math.pi) - math.pi
    assert np.max(np.abs(diff)) < 1e-6
