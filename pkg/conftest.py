"""Shared fixtures: the repository root on sys.path, preset curves, one certified loop"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from closure import find_closing_radius  # noqa: E402
from curves import arclength_reparam, function_from_preset  # noqa: E402
from forge import find_preset  # noqa: E402

TEST_SAMPLES = 512


@pytest.fixture(scope="session")
def sine_arch():
    """FunctionSpec of 0.2 sin^2(pi x) on [0; 1]"""
    return function_from_preset(find_preset("sine_arch_0.2"))


@pytest.fixture(scope="session")
def sine_arch_curve(sine_arch):
    return arclength_reparam(sine_arch, TEST_SAMPLES)


@pytest.fixture(scope="session")
def certificate(sine_arch_curve):
    """Closing radius of the sine arch with at most 6 copies"""
    return find_closing_radius(sine_arch_curve, (0.5, 20.0), n_max=6)
