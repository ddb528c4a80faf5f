"""Shared fixtures: a small model context that keeps tests fast, plus the
desk-scale experiment defaults for the handful of tests that need them."""

import numpy as np
import pytest

from kronsample.config import ExperimentConfig
from kronsample.model import (ArrayGeometry, FrequencyGrid, ModelContext,
                              PulseSpec, generate_dataset)
from kronsample.sampling import AxisLayout

ROI = (-4e-3, 4e-3, 10e-3, 18e-3)


@pytest.fixture(scope="session")
def pulse():
    return PulseSpec(5e6, 0.6, 1540.0)


@pytest.fixture(scope="session")
def small_ctx(pulse):
    """2 x 2 x 3 acquisition: N_sigma = 7, N_pi = 12."""
    geom = ArrayGeometry(2, 2, 3e-4)
    return ModelContext(geom, pulse, FrequencyGrid.centered(pulse, 3, span=0.9e6))


@pytest.fixture(scope="session")
def small_layout(small_ctx):
    return AxisLayout(small_ctx.lengths, ("T", "R", "F"))


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(ROI, 8, (0.5, 1.5), 17)


@pytest.fixture(scope="session")
def desk_cfg():
    return ExperimentConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
