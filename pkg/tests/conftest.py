import numpy as np
import pytest

from msbtm.numerics import RngStream, gaussian_sample_n
from msbtm.oracle import GaussianState


@pytest.fixture
def harmonic_gaussian():
    return GaussianState(np.array([2.0, 0.0]), 0.25 * np.eye(2), 0.0)


@pytest.fixture
def harmonic_samples(harmonic_gaussian):
    return gaussian_sample_n(harmonic_gaussian.m, harmonic_gaussian.C, 300,
                             RngStream(2024, stream=1))
