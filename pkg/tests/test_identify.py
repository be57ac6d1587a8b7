import numpy as np
import pytest

from servotune.classifier import TrainConfig, train
from servotune.grid import build_grid, relay_sim_config, surrogate_optimize
from servotune.identify import (UavPlant, generate_dataset, identify,
                                identify_cascaded, recover_gain_and_scale)
from servotune.identify import _tick_noise
from servotune.models import TransferFunctionModel
from servotune.tuning import TuningSpec, phase_margin


def test_zero_augmentation_is_deterministic(altitude_grid):
    ds = generate_dataset(altitude_grid, examples_per_class=3,
                          sigma_range=(0.0, 0.0), bias_range=(0.0, 0.0),
                          rng_seed=5)
    for cls in altitude_grid.classes[:4]:
        rows = ds.features[ds.labels == cls.index]
        assert np.allclose(rows, rows[0])


def test_interclass_distance_exceeds_intraclass(altitude_grid, altitude_dataset):
    feats, labels = altitude_dataset.features, altitude_dataset.labels
    jm = np.nan_to_num(altitude_grid.j_matrix, posinf=1e9)
    n = len(altitude_grid)
    far_pairs = [(i, k) for i in range(n) for k in range(n)
                 if i < k and jm[i, k] > 100.0]
    assert far_pairs
    i, k = far_pairs[len(far_pairs) // 2]
    fi = feats[labels == i]
    fk = feats[labels == k]
    intra = np.mean(np.linalg.norm(fi - fi.mean(axis=0), axis=1))
    inter = np.linalg.norm(fi.mean(axis=0) - fk.mean(axis=0))
    assert inter > intra


def test_dataset_covers_every_class(altitude_grid, altitude_dataset):
    assert set(np.unique(altitude_dataset.labels)) == set(range(len(altitude_grid)))


def test_recover_gain_identity_and_scaling(altitude_grid):
    cls = altitude_grid.classes[5]
    gains, c_hat, a_hat = recover_gain_and_scale(cls.index, cls.ref_cycle,
                                                 altitude_grid)
    assert c_hat == pytest.approx(1.0)
    assert a_hat == pytest.approx(1.0)
    assert gains.kp == pytest.approx(cls.gains.kp)
    doubled = cls.ref_cycle.scaled(2.0)
    gains2, c2, _ = recover_gain_and_scale(cls.index, doubled, altitude_grid)
    assert c2 == pytest.approx(2.0)
    assert gains2.kp == pytest.approx(cls.gains.kp / 2.0)
    assert gains2.kd == pytest.approx(cls.gains.kd / 2.0)


def test_identify_clean_plant_recovers_class(altitude_grid, altitude_dnn):
    jm = np.nan_to_num(altitude_grid.j_matrix, posinf=1e9)
    hits = 0
    trials = [1, 7, 13, 19, 25]
    for ci in trials:
        cls = altitude_grid.classes[ci]
        plant = cls.model.gain_scaled(3.0)
        res = identify(plant, altitude_grid, altitude_dnn, rng_seed=ci)
        j_cost = 0.0 if res.class_index == ci else jm[res.class_index, ci]
        if j_cost <= altitude_grid.target_j + 1e-9:
            hits += 1
        assert res.gain_ratio == pytest.approx(3.0, rel=0.05)
    assert hits >= len(trials) - 1


def test_identify_cascaded_self_test(altitude_grid, altitude_dnn):
    # assemble the vehicle from a known inner class plus a lateral extension
    cls = altitude_grid.classes[8]
    inner_true = cls.model.gain_scaled(2.0)
    t_p, t_1 = cls.model.time_constants
    lateral_true = TransferFunctionModel.lateral(2.0, t_p, t_1, 1.2,
                                                 cls.model.delay + 0.02)
    plant = UavPlant(inner_true, lateral_true)

    lateral_cache = {}

    def resolver(inner_idx):
        if inner_idx not in lateral_cache:
            inner_model = altitude_grid.classes[inner_idx].model
            inner_gains, _ = surrogate_optimize(inner_model, TuningSpec())
            lg = build_grid("lateral", inner_model=inner_model,
                            inner_gains=inner_gains, lattice=(4, 5))
            ds = generate_dataset(lg, examples_per_class=6,
                                  sigma_range=(0.0, 0.02), rng_seed=2)
            dnn = train(ds.features, ds.labels, lg.j_matrix,
                        TrainConfig(epochs=25, hidden_sizes=(200, 80)))
            lateral_cache[inner_idx] = (lg, dnn)
        return lateral_cache[inner_idx]

    result = identify_cascaded(plant, altitude_grid, altitude_dnn, resolver,
                               rng_seed=4)
    jm = np.nan_to_num(altitude_grid.j_matrix, posinf=1e9)
    j_inner = 0.0 if result.inner.class_index == 8 else jm[result.inner.class_index, 8]
    assert j_inner <= altitude_grid.target_j + 1e-9
    # outer tuning satisfies the margin constraint on the identified model
    lat_cls = result.lateral_grid.classes[result.outer.class_index]
    from servotune.cascade import CascadedPlant
    cascade = CascadedPlant(result.lateral_grid.inner_model,
                            result.lateral_grid.inner_gains, lat_cls.model)
    assert phase_margin(cascade, lat_cls.gains, 20.0) >= 19.5


def test_failed_class_reported():
    # a grid whose reference cycle is removed cannot generate examples
    g = build_grid("altitude", lattice=(3, 3, 3), with_j_matrix=False)
    g.classes[0].ref_cycle = None
    with pytest.raises(ValueError):
        generate_dataset(g, examples_per_class=1)
