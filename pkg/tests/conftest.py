"""Shared instance generators for the test suite."""

import numpy as np
import pytest

from levyot.suites import random_grid_function, random_measure, random_unit_measure


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def make_measure():
    return random_measure


@pytest.fixture
def make_unit_measure():
    return random_unit_measure


@pytest.fixture
def make_grid_function():
    return random_grid_function
