import math

import numpy as np
import pytest

from servotune.grid import ProcessGrid, build_grid
from servotune.models import TransferFunctionModel
from servotune.tuning import TuningSpec, phase_margin


@pytest.fixture(scope="module")
def small_grid():
    return build_grid("altitude", lattice=(4, 4, 6))


def test_coarse_target_collapses_grid():
    g = build_grid("attitude", target_j=500.0, lattice=(4, 4, 5),
                   with_reference_cycles=False, with_j_matrix=False)
    assert 1 <= len(g) <= 5


def test_adjacent_pairs_exceed_target(small_grid):
    j = small_grid.j_matrix
    n = len(small_grid)
    off = j[~np.eye(n, dtype=bool)]
    assert np.all(off >= small_grid.target_j - 1e-9)


def test_j_matrix_structure(small_grid):
    j = small_grid.j_matrix
    assert np.all(np.diag(j) == 0.0)
    assert np.array_equal(j, j.T)
    assert np.all(j[np.isfinite(j)] >= 0.0)


def test_every_class_inside_ranges(small_grid):
    for cls in small_grid.classes:
        t_p, t_1 = cls.model.time_constants
        lo_p, hi_p = 0.015, 0.3
        lo_1, hi_1 = 0.2, 2.0
        assert lo_p * 0.999 <= t_p <= hi_p * 1.001
        assert lo_1 * 0.999 <= t_1 <= hi_1 * 1.001
        assert 0.0005 * 0.999 <= cls.model.delay <= 0.06 * 1.001
        assert cls.model.gain == 1.0


def test_controller_table_margins(small_grid):
    spec = TuningSpec()
    for cls in small_grid.classes:
        pm = phase_margin(cls.model, cls.gains, spec.filter_hz)
        assert pm >= spec.min_phase_margin - 0.5


def test_reference_cycles_attached(small_grid):
    for cls in small_grid.classes:
        assert cls.ref_cycle is not None
        assert cls.ref_cycle.amplitude > 0.0


def test_grid_roundtrip(tmp_path, small_grid):
    path = tmp_path / "grid.json"
    small_grid.save(path)
    loaded = ProcessGrid.load(path)
    assert len(loaded) == len(small_grid)
    assert np.allclose(np.nan_to_num(loaded.j_matrix, posinf=1e12),
                       np.nan_to_num(small_grid.j_matrix, posinf=1e12))
    assert loaded.classes[0].model.to_json() == small_grid.classes[0].model.to_json()


def test_lateral_grid_requires_inner():
    with pytest.raises(ValueError):
        build_grid("lateral")


def test_lateral_grid_builds():
    inner = TransferFunctionModel.inner_loop(1.0, 0.08, 0.4, 0.008)
    from servotune.grid import surrogate_optimize
    gains, _ = surrogate_optimize(inner, TuningSpec())
    g = build_grid("lateral", inner_model=inner, inner_gains=gains,
                   lattice=(5, 6), with_reference_cycles=False)
    assert 3 <= len(g) <= 40
    for cls in g.classes:
        assert cls.model.integrator_order == 2
        assert cls.model.delay >= inner.delay - 1e-12


def test_rejects_bad_target():
    with pytest.raises(ValueError):
        build_grid("altitude", target_j=0.0)
    with pytest.raises(ValueError):
        build_grid("unknown-loop")
