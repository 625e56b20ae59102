"""Sub-Nyquist array snapshot synthesis and the analytic correlation model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .scenario import Scenario, SourceSpec, steering_matrix, validate_scenario

FILTER_TAPS = 257
NOISE_STREAM = 0


class ScenarioError(ValueError):
    """The scenario failed validation."""

    def __init__(self, report):
        super().__init__("scenario violates assumptions:\n" + report.format())
        self.report = report


@dataclass(frozen=True)
class SampleMatrix:
    data: np.ndarray
    sample_rate_hz: float
    scenario_digest: str = ""

    @property
    def num_antennas(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AnalyticCorrelation:
    tensor: np.ndarray
    sigma2: float

    @property
    def max_lag(self) -> int:
        return (self.tensor.shape[0] - 1) // 2


def substream(seed: int, offset: int) -> np.random.Generator:
    """Independent generator for stream ``offset`` of master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(offset,)))


def lowpass_taps(bandwidth_hz: float, fs: float, numtaps: int = FILTER_TAPS) -> np.ndarray:
    """Hamming windowed-sinc low-pass with cutoff ``bandwidth_hz / 2``."""
    if bandwidth_hz >= fs:
        taps = np.zeros(numtaps)
        taps[numtaps // 2] = 1.0
        return taps
    return signal.firwin(numtaps, bandwidth_hz / 2.0, window="hamming", fs=fs)


def generate_baseband(source: SourceSpec, n_samples: int, fs: float,
                      seed: int | np.random.Generator) -> np.ndarray:
    """Band-limited complex Gaussian baseband scaled to ``source.power``.

    White circular noise is shaped by the windowed-sinc filter; the filter
    warm-up is discarded and the result rescaled to the exact target power.
    """
    if source.bandwidth_hz > fs:
        raise ValueError(f"bandwidth {source.bandwidth_hz:g} Hz exceeds fs={fs:g} Hz")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    taps = lowpass_taps(source.bandwidth_hz, fs)
    warm = len(taps) - 1
    white = rng.standard_normal(n_samples + warm) + 1j * rng.standard_normal(n_samples + warm)
    shaped = signal.fftconvolve(white, taps, mode="valid")
    scale = np.sqrt(source.power / np.mean(np.abs(shaped) ** 2))
    return shaped * scale


def carrier_phasor(freq_hz: float, fs: float, n_samples: int) -> np.ndarray:
    """``exp(j omega l T_s)`` with the per-sample increment reduced mod 2*pi."""
    step = np.mod(freq_hz / fs, 1.0)
    cycles = np.mod(np.arange(n_samples) * step, 1.0)
    return np.exp(2j * np.pi * cycles)


def source_components(scenario: Scenario) -> np.ndarray:
    """K x Ns modulated source samples ``s_k(l T_s) exp(j omega_k l T_s)``."""
    fs = scenario.sampling.sample_rate_hz
    ns = scenario.sampling.num_samples
    out = np.empty((scenario.num_sources, ns), dtype=complex)
    for k, src in enumerate(scenario.sources):
        base = generate_baseband(src, ns, fs, substream(scenario.rng_seed, k + 1))
        out[k] = base * carrier_phasor(src.carrier_freq_hz, fs, ns)
    return out


def noise_samples(scenario: Scenario) -> np.ndarray:
    rng = substream(scenario.rng_seed, NOISE_STREAM)
    shape = (scenario.array.num_antennas, scenario.sampling.num_samples)
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return w * np.sqrt(scenario.sigma2 / 2.0)


def synthesize_array_samples(scenario: Scenario, check: bool = True) -> SampleMatrix:
    """Sampled array output ``x_n(l T_s)`` under the narrowband model."""
    if check:
        report = validate_scenario(scenario)
        if not report.passed:
            raise ScenarioError(report)
    A = steering_matrix(scenario)
    x = noise_samples(scenario)
    if scenario.num_sources:
        x = x + A @ source_components(scenario)
    return SampleMatrix(x, scenario.sampling.sample_rate_hz, scenario.digest())


def source_lag_profiles(scenario: Scenario, max_lag: int | None = None) -> np.ndarray:
    """(2L+1) x K matrix of ideal-model autocorrelations ``r_k(l)``, l=-L..L.

    Each source has a flat spectrum over its band, so
    ``r_k(l) = p_k sinc(B_k l T_s) exp(j omega_k l T_s)``.
    """
    L = scenario.sampling.max_lag if max_lag is None else max_lag
    fs = scenario.sampling.sample_rate_hz
    lags = np.arange(-L, L + 1)
    R = np.empty((2 * L + 1, scenario.num_sources), dtype=complex)
    for k, src in enumerate(scenario.sources):
        step = np.mod(src.carrier_freq_hz / fs, 1.0)
        phase = np.exp(2j * np.pi * np.mod(lags * step, 1.0))
        R[:, k] = src.power * np.sinc(src.bandwidth_hz * lags / fs) * phase
    return R


def exact_correlation_tensor(scenario: Scenario, max_lag: int | None = None) -> AnalyticCorrelation:
    """Closed-form lagged correlation tensor of the ideal model (with noise)."""
    L = scenario.sampling.max_lag if max_lag is None else max_lag
    N = scenario.array.num_antennas
    A = steering_matrix(scenario)
    R = source_lag_profiles(scenario, L)
    T = np.einsum("lk,mk,nk->lmn", R, A, A.conj())
    sigma2 = scenario.sigma2
    T[L] += sigma2 * np.eye(N)
    return AnalyticCorrelation(T, sigma2)
