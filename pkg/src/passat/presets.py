"""Reference array and the benchmark scenarios used throughout the demos.

The array has eight antennas at 0.8 C/f_nyq spacing with f_nyq = 1 GHz; the
second half of the antennas carry a 1 ns delay line.
"""
from __future__ import annotations

import math

from .scenario import SPEED_OF_LIGHT, ArrayConfig, SamplingConfig, Scenario, sources_from

F_NYQ_HZ = 1e9


def reference_array(num_antennas: int = 8, f_nyq_hz: float = F_NYQ_HZ,
                    delay_s: float = 1e-9) -> ArrayConfig:
    """ULA with zero delay on the first half and ``delay_s`` on the second."""
    half = num_antennas // 2
    delays = [0.0] * half + [delay_s] * (num_antennas - half)
    return ArrayConfig(num_antennas, 0.8 * SPEED_OF_LIGHT / f_nyq_hz, tuple(delays), f_nyq_hz)


def three_source_scenario(num_samples: int = 100_000, snr_db: float = 5.0,
                          seed: int = 0, max_lag: int = 8) -> Scenario:
    """Three well separated bands sampled at 28 MHz."""
    sources = sources_from([152e6, 323e6, 432e6], [20e6, 20e6, 15e6],
                           [2.051, 1.447, 0.361])
    return Scenario(sources, reference_array(), SamplingConfig(28e6, num_samples, max_lag),
                    snr_db=snr_db, rng_seed=seed)


def overlap_scenario(num_samples: int = 100_000, snr_db: float = 20.0,
                     seed: int = 0, max_lag: int = 64) -> Scenario:
    """Two sources whose bands partially overlap around 156 MHz."""
    sources = sources_from([151.36e6, 161.36e6], [20e6, 10e6], [2.064, 0.968])
    return Scenario(sources, reference_array(), SamplingConfig(28e6, num_samples, max_lag),
                    snr_db=snr_db, rng_seed=seed)


def two_source_scenario(num_samples: int = 300, snr_db: float = 15.0,
                        seed: int = 0, max_lag: int = 8) -> Scenario:
    """Two narrow bands sampled at 1.26 MHz, used for the MSE-versus-CRB study."""
    sources = sources_from([152e6, 437e6], [126e3, 63e3], [math.pi / 4, math.pi / 3])
    return Scenario(sources, reference_array(), SamplingConfig(1.26e6, num_samples, max_lag),
                    snr_db=snr_db, rng_seed=seed)
