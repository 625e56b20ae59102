"""Acceptance criteria 1-8; each test prints one PASS/FAIL line with its numbers."""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import signal
from scipy.integrate import trapezoid

from conftest import random_factors, small_scenario
from passat.crb import CrbModel, assemble_Rx, crb, fim, model_from_scenario, partial_derivatives
from passat.cpd import cp_als, cp_als_regularized, cp_reconstruct, factor_congruence
from passat.identifiability import k_rank, kruskal_check, scenario_identifiability
from passat.pipeline import PipelineOptions, estimate_scenario, monte_carlo, pair_estimates
from passat.presets import overlap_scenario, three_source_scenario, two_source_scenario
from passat.recovery import recover_all
from passat.scenario import SourceSpec, steering_matrix
from passat.simulate import exact_correlation_tensor, source_components, source_lag_profiles
from test_crb import fd_derivatives
from test_identifiability import krank_oracle, random_structured_matrix, random_valid_scenario

pytestmark = pytest.mark.acceptance


def report(capsys, n, passed, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if passed else 'FAIL'} | {detail}")


def matched(scenario, rep):
    """Good estimates reordered to the scenario's source order."""
    good = rep.good()
    w = [s.omega for s in scenario.sources]
    th = [s.doa_rad for s in scenario.sources]
    idx = pair_estimates(w, th, [g.omega_hat for g in good], [g.theta_hat for g in good])
    return [good[i] for i in idx]


def test_c1_noiseless_oracle(capsys):
    t0 = time.perf_counter()
    sc = three_source_scenario()
    X = exact_correlation_tensor(sc.with_(noise_power=0.0)).tensor
    rep = recover_all(cp_als(X, 3), sc.array, sc.sampling.sample_rate_hz)
    est = matched(sc, rep)
    f_err = max(abs(e.f_hat - s.carrier_freq_hz) / s.carrier_freq_hz
                for e, s in zip(est, sc.sources))
    th_err = max(abs(e.theta_hat - s.doa_rad) for e, s in zip(est, sc.sources))
    elapsed = time.perf_counter() - t0
    ok = f_err < 1e-6 and th_err < 1e-6 and elapsed < 10
    report(capsys, 1, ok, f"max rel carrier err {f_err:.2e}, max DoA err {th_err:.2e} rad, "
                          f"{elapsed:.2f} s")
    assert ok


def band_fraction(spec, src):
    f = spec.freq_hz
    inside = np.abs(f - src.carrier_freq_hz) <= src.bandwidth_hz / 2
    total = trapezoid(spec.power, f)
    return trapezoid(np.where(inside, spec.power, 0.0), f) / total


def test_c2_fig3_reproduction(capsys):
    t0 = time.perf_counter()
    hits, fracs, f_errs, th_errs = 0, [], [], []
    for seed in range(20):
        sc = three_source_scenario(seed=seed)
        rep, _ = estimate_scenario(sc, PipelineOptions(num_sources=3), seed=seed)
        est = matched(sc, rep)
        fe = [abs(e.f_hat - s.carrier_freq_hz) for e, s in zip(est, sc.sources)]
        te = [abs(e.theta_hat - s.doa_rad) for e, s in zip(est, sc.sources)]
        hits += len(est) == 3 and max(fe) <= 0.5e6 and max(te) <= 0.02
        f_errs.append(max(fe))
        th_errs.append(max(te))
        fracs += [band_fraction(e.spectrum, s) for e, s in zip(est, sc.sources)]
    elapsed = time.perf_counter() - t0
    rate = hits / 20
    ok_params = rate >= 0.9
    ok_spectra = min(fracs) >= 0.9
    ok = ok_params and ok_spectra and elapsed < 300
    report(capsys, 2, ok,
           f"trials with all carriers <=0.5 MHz and DoAs <=0.02 rad: {rate:.0%} "
           f"(median worst carrier err {np.median(f_errs) / 1e6:.2f} MHz, "
           f"median worst DoA err {np.median(th_errs):.3f} rad); "
           f"min in-band spectral power {min(fracs):.3f}; {elapsed:.0f} s")
    assert ok_spectra, "spectral power placement"
    assert ok_params, "carrier/DoA tolerance unattainable at this sample size"
    assert elapsed < 300


def periodogram_on_grid(x, fs, freq_hz):
    """Two-sided Welch density of x, read off periodically at freq_hz."""
    f, P = signal.welch(x, fs=fs, window="hann", nperseg=512, return_onesided=False,
                        scaling="density")
    order = np.argsort(f)
    f, P = f[order], P[order]
    wrapped = np.mod(freq_hz + fs / 2, fs) - fs / 2
    return np.interp(wrapped, f, P, period=fs)


def test_c3_overlap_reproduction(capsys):
    good, errs = 0, []
    for seed in range(20):
        sc = overlap_scenario(seed=seed)
        fs = sc.sampling.sample_rate_hz
        opts = PipelineOptions(num_sources=2, max_lag=sc.sampling.max_lag)
        rep, _ = estimate_scenario(sc, opts, seed=seed)
        est = matched(sc, rep)
        sep = abs(sc.sources[0].carrier_freq_hz - sc.sources[1].carrier_freq_hz)
        separated = len(est) == 2 and all(
            abs(e.f_hat - s.carrier_freq_hz) < sep / 2 for e, s in zip(est, sc.sources))
        comps = source_components(sc)
        trial = []
        for k, e in enumerate(est):
            ref = periodogram_on_grid(comps[k], fs, e.spectrum.freq_hz)
            trial.append(np.linalg.norm(e.spectrum.power - ref) / np.linalg.norm(ref))
        errs.append(max(trial) if trial else math.inf)
        good += separated and max(trial) < 0.1
    rate = good / 20
    ok = rate >= 0.9
    report(capsys, 3, ok, f"trials separated with both spectra within 0.1: {rate:.0%} "
                          f"(median worst l2 err {np.median(errs):.3f}, max {max(errs):.3f})")
    assert ok


def inversions(values):
    return int(np.sum(np.diff(values) > 0))


def test_c4_crb_proximity(capsys):
    sc = two_source_scenario()
    table = monte_carlo(sc, "num_samples", [100, 200, 300], trials=100,
                        options=PipelineOptions(num_sources=2), master_seed=0)
    last = table.rows[-1]
    gap_xi = 10 * math.log10(last.mse_xi / last.crb_xi)
    gap_psi = 10 * math.log10(last.mse_psi / last.crb_psi)
    inv = {c: inversions(table.column(c)) for c in ("mse_xi", "mse_psi")}
    ok = (gap_xi <= 10 and gap_psi <= 10 and all(v <= 1 for v in inv.values())
          and not table.any_aborted)
    series = "; ".join(f"Ns={int(r.sweep_value)}: mse_xi={r.mse_xi:.3g} crb_xi={r.crb_xi:.3g} "
                       f"mse_psi={r.mse_psi:.3g} crb_psi={r.crb_psi:.3g} used={r.trials_used}"
                       for r in table.rows)
    report(capsys, 4, ok, f"gap at Ns=300: xi {gap_xi:.1f} dB, psi {gap_psi:.1f} dB; "
                          f"inversions {inv}; {series}")
    assert ok


def test_c5_fim_correctness(capsys):
    t0 = time.perf_counter()
    sc = small_scenario(K=2, N=3, ns=8, L=2, snr_db=0.0)
    m = model_from_scenario(sc, num_samples=8, max_lag=2)
    fd_err = max(np.linalg.norm(D - F) / np.linalg.norm(D)
                 for D, F in zip(partial_derivatives(m), fd_derivatives(m)))
    # wide bands keep the L=2 truncation positive definite
    wide = sc.with_(sources=(replace(sc.sources[0], bandwidth_hz=0.9e6 * 1.26),
                             replace(sc.sources[1], bandwidth_hz=0.7e6 * 1.26)))
    mw = model_from_scenario(wide, num_samples=8, max_lag=2)
    fd_err = max(fd_err, max(np.linalg.norm(D - F) / np.linalg.norm(D)
                             for D, F in zip(partial_derivatives(mw), fd_derivatives(mw))))
    F = fim(mw)
    sym = np.abs(F - F.T).max() / np.abs(F).max()
    ev = np.linalg.eigvalsh(F)
    psd = ev.min() >= -1e-10 * ev.max()
    sigma2 = 0.7
    m0 = CrbModel(np.zeros(0), np.zeros(0), np.zeros((0, 3)), sigma2, 8, np.zeros(3))
    closed = abs(fim(m0)[0, 0] - 3 * 8 / sigma2 ** 2) / (3 * 8 / sigma2 ** 2)
    closed = max(closed, abs(crb(m0).value("sigma2") - sigma2 ** 2 / 24) / (sigma2 ** 2 / 24))
    closed = max(closed, np.abs(assemble_Rx(m0) - sigma2 * np.eye(24)).max())
    elapsed = time.perf_counter() - t0
    ok = fd_err < 1e-6 and sym < 1e-10 and psd and closed < 1e-10 and elapsed < 30
    report(capsys, 5, ok, f"max FD rel err {fd_err:.2e}; FIM asym {sym:.1e}, min eig/max "
                          f"{ev.min() / ev.max():.2e}; K=0 closed-form err {closed:.1e}; "
                          f"{elapsed:.1f} s")
    assert ok


def test_c6_identifiability(capsys):
    rng = np.random.default_rng(6)
    krank_ok = sum(k_rank(M) == krank_oracle(M)
                   for M in (random_structured_matrix(rng) for _ in range(200)))
    rng = np.random.default_rng(66)
    kruskal_ok = sum(scenario_identifiability(random_valid_scenario(rng)).satisfied
                     for _ in range(100))
    base = three_source_scenario()
    degenerate_fail = 0
    pairs = [(SourceSpec(150e6, 10e6, 1.0), SourceSpec(150e6 + m * 28e6, 10e6, 2.2))
             for m in (1, 2, 3, 5, 10)]
    for s1, s2 in pairs:
        sc = base.with_(sources=(s1, s2))
        rep = kruskal_check(source_lag_profiles(sc), steering_matrix(sc))
        degenerate_fail += not rep.satisfied
    ok = krank_ok == 200 and kruskal_ok == 100 and degenerate_fail == len(pairs)
    report(capsys, 6, ok, f"k_rank agrees {krank_ok}/200; Kruskal holds on {kruskal_ok}/100 "
                          f"random scenarios; fails on {degenerate_fail}/{len(pairs)} "
                          f"degenerate pairs")
    assert ok


def test_c7_cpd_suite(capsys):
    rng = np.random.default_rng(7)
    monotone, exact, detect = True, 0, 0
    for i in range(50):
        K = 1 + i % 4
        R, A, B = random_factors(rng, (12, 8, 8), K)
        fs = cp_als(cp_reconstruct(R, A, B), K, seed=i)
        monotone &= bool(np.all(np.diff(fs.fit_history) <= 1e-12))
        exact += factor_congruence(fs, R, A, B).min() > 0.999
    for i in range(100):
        K = 1 + i % 4
        X = cp_reconstruct(*random_factors(rng, (12, 8, 8), K))
        _, K_hat = cp_als_regularized(X, 2 * K + 2, seed=i)
        detect += K_hat == K
    ok = monotone and exact == 50 and detect >= 95
    report(capsys, 7, ok, f"monotone on every run: {monotone}; exact recovery {exact}/50; "
                          f"rank detected {detect}/100")
    assert ok


def test_c8_gauge_invariance(capsys):
    sc = three_source_scenario()
    X = exact_correlation_tensor(sc.with_(noise_power=0.0)).tensor
    fs = cp_als(X, 3)
    base = recover_all(fs, sc.array, sc.sampling.sample_rate_hz)
    rng = np.random.default_rng(8)
    d_omega, d_theta = 0.0, 0.0
    for _ in range(100):
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
        rep = recover_all(replace(fs, A_hat=fs.A_hat * phases), sc.array, 28e6)
        for a, b in zip(base.sources, rep.sources):
            d_omega = max(d_omega, abs(a.omega_hat - b.omega_hat) / a.omega_hat)
            d_theta = max(d_theta, abs(a.theta_hat - b.theta_hat))
    ok = d_omega < 1e-10 and d_theta < 1e-10
    report(capsys, 8, ok, f"max relative omega change {d_omega:.1e}; max theta change "
                          f"{d_theta:.1e} rad over 100 rescalings")
    assert ok
