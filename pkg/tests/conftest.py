from __future__ import annotations

import numpy as np
import pytest

from cellloc.synth import Scenario, TrajectoryParams, generate_sets


@pytest.fixture(scope="session")
def small_scenario() -> Scenario:
    # Short walk keeps recordings ~300 frames so split sweeps stay fast.
    return Scenario(
        trajectory=TrajectoryParams(x_start=2.0, x_min=-10.8, dwell_outside_s=1.0,
                                    dwell_test_s=1.5)
    )


@pytest.fixture(scope="session")
def small_sets(small_scenario):
    return generate_sets(small_scenario, 4, seed=7)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
