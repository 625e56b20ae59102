import math

import numpy as np
import pytest

from passat.presets import reference_array, three_source_scenario, two_source_scenario
from passat.scenario import ArrayConfig, SamplingConfig, Scenario, sources_from


@pytest.fixture
def array():
    return reference_array()


@pytest.fixture
def fig3():
    return three_source_scenario()


@pytest.fixture
def mse_scenario():
    return two_source_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_factors(rng, shape, K):
    return [(rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))) / math.sqrt(2)
            for n in shape]


def small_scenario(K=2, N=4, ns=64, L=2, snr_db=10.0, seed=0):
    """Scenario with a valid delay pattern for N antennas."""
    half = N // 2
    delays = tuple([0.0] * half + [1e-9] * (N - half))
    arr = ArrayConfig(N, 0.8 * 2.99792458e8 / 1e9, delays, 1e9)
    carriers = [152e6, 437e6, 301e6][:K]
    bws = [126e3, 63e3, 90e3][:K]
    doas = [math.pi / 4, math.pi / 3, 2.0][:K]
    return Scenario(sources_from(carriers, bws, doas), arr, SamplingConfig(1.26e6, ns, L),
                    snr_db=snr_db, rng_seed=seed)
