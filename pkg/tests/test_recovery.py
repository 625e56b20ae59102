import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_factors
from passat.cpd import FactorSet, cp_als, fit_residual
from passat.presets import reference_array, three_source_scenario
from passat.recovery import (RecoveryError, normalize_factors, recover_all, recover_carrier,
                             recover_doa, recover_spectrum)
from passat.scenario import (ArrayConfig, IdentifiabilityError, SourceSpec, steering_vector,
                             uniform_delays)
from passat.simulate import exact_correlation_tensor, source_lag_profiles

TWO_PI = 2 * math.pi


def omega(f):
    return TWO_PI * f


def test_normalize_idempotent_and_gauge(rng):
    R, A, B = random_factors(rng, (5, 4, 4), 3)
    fs = normalize_factors(FactorSet(R, A, B))
    np.testing.assert_allclose(np.linalg.norm(fs.A_hat, axis=0), 2.0)
    np.testing.assert_allclose(np.linalg.norm(fs.B_hat, axis=0), 2.0)
    again = normalize_factors(fs)
    for x, y in ((again.R_hat, fs.R_hat), (again.A_hat, fs.A_hat), (again.B_hat, fs.B_hat)):
        np.testing.assert_allclose(x, y, atol=1e-14)
    moved = normalize_factors(FactorSet(R / 3, 3 * A, B))
    np.testing.assert_allclose(moved.A_hat, fs.A_hat, atol=1e-14)
    np.testing.assert_allclose(moved.R_hat, fs.R_hat, atol=1e-14)
    X = FactorSet(R, A, B).reconstruct()
    assert abs(fit_residual(X, fs) - fit_residual(X, FactorSet(R, A, B))) < 1e-12


def test_normalize_rejects_zero_column(rng):
    R, A, B = random_factors(rng, (5, 4, 4), 2)
    A[:, 1] = 0
    with pytest.raises(RecoveryError):
        normalize_factors(FactorSet(R, A, B))


def test_carrier_with_global_phase(array):
    a = steering_vector(array, 1.0, omega(152e6)) * np.exp(-1j * 2.3)
    est = recover_carrier(a, array)
    assert est.omega == pytest.approx(omega(152e6), rel=1e-9)
    assert "a4_boundary" in est.flags
    assert set(est.per_index) == {2, 3}


def test_carrier_negative_branch_alone(array):
    a = steering_vector(array, 0.361, omega(432e6))
    est = recover_carrier(a, array, indices=[3])
    assert list(est.per_index) == [3]
    assert est.omega == pytest.approx(omega(432e6), rel=1e-9)


def test_carrier_needs_usable_index():
    arr = ArrayConfig(6, 0.2, uniform_delays(6, 0.3e-9), 1e9)
    with pytest.raises(IdentifiabilityError):
        recover_carrier(np.ones(6), arr)


@given(st.floats(1e6, 999e6), st.floats(0.0, math.pi - 1e-3))
@settings(max_examples=100)
def test_carrier_exact_on_grid(f, theta):
    arr = reference_array()
    est = recover_carrier(steering_vector(arr, theta, omega(f)), arr)
    assert est.omega == pytest.approx(omega(f), rel=1e-9)


def test_doa_negative_tau_branch(array):
    a = steering_vector(array, 2.051, omega(152e6))
    est = recover_doa(a, omega(152e6), array)
    assert est.theta == pytest.approx(2.051, abs=1e-6)
    assert est.tau < 0
    assert "ambiguous" not in est.flags


def test_doa_broadside(array):
    est = recover_doa(steering_vector(array, math.pi / 2, omega(300e6)), omega(300e6), array)
    assert est.tau == pytest.approx(0.0, abs=1e-20)
    assert est.theta == pytest.approx(math.pi / 2, abs=1e-12)


def test_doa_ambiguity_above_half_cycle(array):
    # (d/C) omega > pi at 700 MHz, so near end-fire both branches fit
    assert array.max_delay_s * omega(700e6) > math.pi
    est = recover_doa(steering_vector(array, 0.3, omega(700e6)), omega(700e6), array)
    assert "ambiguous" in est.flags
    est = recover_doa(steering_vector(array, 0.3, omega(300e6)), omega(300e6), array)
    assert "ambiguous" not in est.flags


def test_doa_errors(array):
    with pytest.raises(RecoveryError):
        recover_doa(np.ones(8), 0.0, array)
    bad = steering_vector(array, 0.2, omega(300e6)) * np.exp(-1j * np.arange(8) * 2.9)
    with pytest.raises(RecoveryError):
        recover_doa(bad, omega(300e6), array, strict=True)
    assert "tau_out_of_range" in recover_doa(bad, omega(300e6), array).flags


@given(st.integers(0, 10**6))
@settings(max_examples=100)
def test_gauge_phase_invariance(seed):
    rng = np.random.default_rng(seed)
    arr = reference_array()
    w = omega(rng.uniform(10e6, 600e6))
    a = steering_vector(arr, rng.uniform(0.1, 3.0), w)
    b = a * np.exp(1j * rng.uniform(0, TWO_PI))
    ca, cb = recover_carrier(a, arr), recover_carrier(b, arr)
    assert abs(ca.omega - cb.omega) < 1e-10 * ca.omega
    da, db = recover_doa(a, ca.omega, arr), recover_doa(b, cb.omega, arr)
    assert abs(da.theta - db.theta) < 1e-10


def test_white_spectrum_height():
    fs, p, L = 28e6, 2.5, 6
    r = np.zeros(2 * L + 1, complex)
    r[L] = p
    spec = recover_spectrum(r, omega(152e6), fs, 256)
    np.testing.assert_allclose(spec.power, p / fs, rtol=1e-12)
    assert spec.omega[0] == pytest.approx(omega(152e6) - math.pi * fs)
    assert spec.omega[-1] == pytest.approx(omega(152e6) + math.pi * fs)


def test_sinc_spectrum_matches_flat_ideal():
    fs, B, fc, L = 28e6, 20e6, 152e6, 400
    sc = three_source_scenario().with_(sources=(SourceSpec(fc, B, 1.0, power=1.3),))
    r = source_lag_profiles(sc, L)[:, 0]
    spec = recover_spectrum(r, omega(fc), fs, 2048)
    df = spec.freq_hz - fc
    edge = 2 * fs / L
    inside = np.abs(df) < B / 2 - edge
    outside = np.abs(df) > B / 2 + edge
    np.testing.assert_allclose(spec.power[inside], 1.3 / B, rtol=0.05)
    assert np.all(spec.power[outside] < 0.05 * 1.3 / B)
    assert np.all(spec.power >= 0)
    assert spec.integral_hz() == pytest.approx(1.3, rel=0.02)


def test_spectrum_phase_fix():
    fs, L = 28e6, 4
    r = np.zeros(2 * L + 1, complex)
    r[L] = 1.0
    rotated = recover_spectrum(r * np.exp(0.7j), 1.0, fs, 64)
    np.testing.assert_allclose(rotated.power, 1 / fs, rtol=1e-12)


def test_oracle_recover_all(fig3):
    X = exact_correlation_tensor(fig3.with_(noise_power=0.0))
    rep = recover_all(cp_als(X.tensor, 3), fig3.array, fig3.sampling.sample_rate_hz)
    assert rep.K_used == 3
    got = sorted((s.f_hat, s.theta_hat) for s in rep.sources)
    want = sorted((s.carrier_freq_hz, s.doa_rad) for s in fig3.sources)
    for (f, t), (f0, t0) in zip(got, want):
        assert abs(f - f0) / f0 < 1e-6
        assert abs(t - t0) < 1e-6
    assert "fit_residual" in rep.diagnostics


def test_single_source_power_bookkeeping(fig3):
    sc = fig3.with_(sources=(SourceSpec(323e6, 20e6, 1.447, power=2.0),), noise_power=0.0)
    X = exact_correlation_tensor(sc, 64)
    (src,) = recover_all(cp_als(X.tensor, 1), sc.array, 28e6).sources
    assert src.power_hat == pytest.approx(2.0, rel=1e-6)
    assert src.spectrum.integral_hz() == pytest.approx(2.0, rel=0.02)


def test_zero_column_isolated(fig3):
    X = exact_correlation_tensor(fig3.with_(noise_power=0.0))
    fs = cp_als(X.tensor, 3)
    A = fs.A_hat.copy()
    A[:, 1] = 0
    rep = recover_all(FactorSet(fs.R_hat, A, fs.B_hat), fig3.array, 28e6)
    assert [s.ok for s in rep.sources] == [True, False, True]
    assert len(rep.good()) == 2


def test_a_and_ab_agree_on_exact_tensor(fig3):
    X = exact_correlation_tensor(fig3.with_(noise_power=0.0))
    fs = cp_als(X.tensor, 3)
    ra = recover_all(fs, fig3.array, 28e6, use="A")
    rb = recover_all(fs, fig3.array, 28e6, use="AB")
    for a, b in zip(ra.sources, rb.sources):
        assert abs(a.omega_hat - b.omega_hat) < 1e-8 * a.omega_hat
        assert abs(a.theta_hat - b.theta_hat) < 1e-8
    with pytest.raises(ValueError):
        recover_all(fs, fig3.array, 28e6, use="B")
