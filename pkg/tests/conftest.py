"""Shared fixtures for the test suite"""

import numpy as np
import pytest

from src.target_states import bell, dicke, ghz, homogeneous_strategy

BELL_LAMBDA = 1.0 / 3.0


@pytest.fixture
def bell_target():
    return bell()


@pytest.fixture
def bell_strategy(bell_target):
    return homogeneous_strategy(bell_target, BELL_LAMBDA)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["bell", "ghz3", "dicke31"])
def small_target(request):
    return {"bell": bell, "ghz3": lambda: ghz(3), "dicke31": lambda: dicke(3, 1)}[request.param]()


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / "output"
    path.mkdir()
    return path
