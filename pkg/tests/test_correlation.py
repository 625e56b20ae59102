import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passat.correlation import (CorrelationTensor, default_max_lag, denoise_zero_lag,
                                estimate_correlation_tensor, estimate_noise_power)
from passat.cpd import cp_als, fit_residual
from passat.presets import three_source_scenario
from passat.simulate import exact_correlation_tensor, synthesize_array_samples


def test_zero_input_gives_zero_tensor():
    T = estimate_correlation_tensor(np.zeros((3, 50), complex), 4)
    assert T.tensor.shape == (9, 3, 3)
    assert not T.tensor.any()


def test_pure_tone_closed_form():
    ns, L, w = 200, 5, 0.7
    x = np.exp(1j * w * np.arange(ns))[None, :]
    T = estimate_correlation_tensor(x, L)
    for l in range(-L, L + 1):
        expected = (ns - abs(l)) / ns * np.exp(1j * w * l)
        assert T.slice(l)[0, 0] == pytest.approx(expected, abs=1e-13)
        # phase is exact, only the amplitude is biased
        assert np.angle(T.slice(l)[0, 0] / np.exp(1j * w * l)) == pytest.approx(0, abs=1e-12)


def test_pure_noise_statistics():
    rng = np.random.default_rng(3)
    ns = 100_000
    x = (rng.standard_normal((4, ns)) + 1j * rng.standard_normal((4, ns))) / math.sqrt(2)
    T = estimate_correlation_tensor(x, 3)
    lag0 = T.slice(0)
    np.testing.assert_allclose(np.diag(lag0).real, 1.0, atol=0.03)
    off = T.tensor.copy()
    off[3][np.diag_indices(4)] = 0
    assert np.abs(off).max() < 0.03


def test_lag_symmetry_and_scaling(rng):
    x = rng.standard_normal((3, 300)) + 1j * rng.standard_normal((3, 300))
    T = estimate_correlation_tensor(x, 6)
    for l in range(7):
        np.testing.assert_array_equal(T.slice(-l), T.slice(l).conj().T)
    alpha = 1.7 - 0.4j
    T2 = estimate_correlation_tensor(alpha * x, 6)
    np.testing.assert_allclose(T2.tensor, abs(alpha) ** 2 * T.tensor, rtol=1e-12)


def test_lag_limit():
    with pytest.raises(ValueError):
        estimate_correlation_tensor(np.ones((2, 10)), 5)


def test_noise_power_exact_cases(rng):
    assert estimate_noise_power(2 * np.eye(5), 0) == pytest.approx(2.0)
    a = np.exp(1j * rng.uniform(0, 2 * np.pi, 5))
    S = 3.0 * np.outer(a, a.conj()) + 0.4 * np.eye(5)
    assert estimate_noise_power(S, 1) == pytest.approx(0.4, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_noise_power(S, 5)


def test_noise_power_from_samples():
    sc = three_source_scenario(snr_db=5.0, seed=7)
    T = estimate_correlation_tensor(synthesize_array_samples(sc), 8)
    assert estimate_noise_power(T.slice(0), 3) == pytest.approx(sc.sigma2, rel=0.1)


def test_denoise_zero_and_exact_cancellation(fig3):
    sc = fig3.with_(noise_power=0.5)
    T = CorrelationTensor.from_array(exact_correlation_tensor(sc).tensor)
    same = denoise_zero_lag(T, 0.0)
    np.testing.assert_array_equal(same.tensor, T.tensor)
    clean = denoise_zero_lag(T, 0.5)
    truth = exact_correlation_tensor(sc.with_(noise_power=0.0)).tensor
    np.testing.assert_allclose(clean.tensor, truth, atol=1e-14)
    changed = np.argwhere(clean.tensor != T.tensor)
    assert len(changed) == 8
    assert np.all(changed[:, 0] == T.lags)
    with pytest.raises(ValueError):
        denoise_zero_lag(T, -1.0)


def test_denoising_improves_fit():
    sc = three_source_scenario(snr_db=5.0, seed=3)
    T = estimate_correlation_tensor(synthesize_array_samples(sc), 8)
    raw = fit_residual(T.tensor, cp_als(T.tensor, 3, restarts=2))
    D = denoise_zero_lag(T, estimate_noise_power(T.slice(0), 3))
    den = fit_residual(D.tensor, cp_als(D.tensor, 3, restarts=2))
    assert den < raw


@given(st.floats(1e5, 1e8), st.floats(1e3, 1e7), st.integers(10, 10**6))
@settings(max_examples=50)
def test_default_max_lag_rule(fs, bmin, ns):
    L = default_max_lag(fs, [bmin, 2 * bmin], ns)
    assert 1 <= L <= max(1, ns // 100)
    if L < ns // 100:
        assert L / fs >= 4 / bmin - 1e-12
