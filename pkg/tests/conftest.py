"""Shared heavy fixtures, cached on disk so repeated runs stay fast."""

import json
from pathlib import Path

import numpy as np
import pytest

from servotune.classifier import MlpModel, TrainConfig, train
from servotune.grid import ProcessGrid, build_grid
from servotune.identify import DatasetResult, generate_dataset

CACHE = Path(__file__).resolve().parent.parent / ".cache"
CACHE.mkdir(exist_ok=True)

DATASET_SEED = 1
DATASET_PER_CLASS = 100
DATASET_SIGMA = (0.0, 0.08)
TRAIN_SEED = 0


@pytest.fixture(scope="session")
def altitude_grid() -> ProcessGrid:
    path = CACHE / "grid_altitude.json"
    if path.exists():
        return ProcessGrid.load(path)
    grid = build_grid("altitude")
    grid.save(path)
    return grid


@pytest.fixture(scope="session")
def attitude_grid() -> ProcessGrid:
    path = CACHE / "grid_attitude.json"
    if path.exists():
        return ProcessGrid.load(path)
    grid = build_grid("attitude")
    grid.save(path)
    return grid


@pytest.fixture(scope="session")
def altitude_dataset(altitude_grid) -> DatasetResult:
    path = CACHE / "dataset_altitude.npz"
    if path.exists():
        data = np.load(path)
        return DatasetResult(data["features"], data["labels"], [])
    ds = generate_dataset(altitude_grid, examples_per_class=DATASET_PER_CLASS,
                          sigma_range=DATASET_SIGMA, rng_seed=DATASET_SEED)
    np.savez_compressed(path, features=ds.features, labels=ds.labels)
    return ds


@pytest.fixture(scope="session")
def altitude_dnn(altitude_grid, altitude_dataset) -> MlpModel:
    path = CACHE / "dnn_altitude.json"
    if path.exists():
        return MlpModel.load(path)
    cfg = TrainConfig(epochs=50, rng_seed=TRAIN_SEED)
    model = train(altitude_dataset.features, altitude_dataset.labels,
                  altitude_grid.j_matrix, cfg)
    model.save(path)
    return model
