"""End-to-end estimation and the Monte-Carlo harness that compares it with the CRB.

The estimator chains correlation, CP decomposition and parameter recovery.
With a known number of sources the lag-0 noise floor is removed with the
eigenvalue estimate before the fixed-rank decomposition. In rank-detection
mode the smallest lag-0 eigenvalue is removed first (so the white noise does
not show up as extra rank-one terms), the regularised decomposition picks
``K_hat``, and a second pass repeats the denoising with ``K_hat`` and fits a
fixed-rank model.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .correlation import (CorrelationTensor, default_max_lag, denoise_zero_lag,
                          estimate_correlation_tensor, estimate_noise_power)
from .cpd import cp_als, cp_als_regularized
from .crb import CrbError, crb, model_from_scenario
from .recovery import EstimateReport, recover_all
from .scenario import ArrayConfig, Scenario, tau_of_theta
from .simulate import SampleMatrix, exact_correlation_tensor, synthesize_array_samples

FAILURE_LIMIT = 0.05


@dataclass(frozen=True)
class PipelineOptions:
    """Estimator knobs. ``num_sources=None`` switches on rank detection."""
    num_sources: int | None = None
    max_lag: int | None = None
    mu: float | None = None
    k_over: int | None = None
    tol: float = 1e-10
    max_iter: int = 500
    restarts: int = 5
    denoise: bool = True
    init: str = "random"
    use: str = "A"
    grid_size: int = 1024

    def __post_init__(self):
        if self.num_sources is not None and self.num_sources < 1:
            raise ValueError("num_sources must be at least 1")
        if self.max_lag is not None and self.max_lag < 1:
            raise ValueError("max_lag must be at least 1")
        if self.restarts < 1 or self.max_iter < 1 or not self.tol > 0:
            raise ValueError("restarts, max_iter and tol must be positive")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be positive")


def estimate_from_tensor(tensor: CorrelationTensor, array: ArrayConfig, fs: float,
                         options: PipelineOptions = PipelineOptions(),
                         seed=0) -> tuple:
    """Decompose a correlation tensor and recover per-source parameters.

    Returns ``(report, factors)``; ``report.diagnostics`` records the rank
    used, the noise estimate and the decomposition health.
    """
    N = tensor.num_antennas
    K = options.num_sources
    diag = {"max_lag": tensor.lags}
    if K is None:
        blind = float(np.linalg.eigvalsh(tensor.slice(0))[0]) if options.denoise else 0.0
        k_over = options.k_over or N - 1
        _, K = cp_als_regularized(denoise_zero_lag(tensor, max(blind, 0.0)).tensor, k_over,
                                  mu=options.mu, tol=options.tol,
                                  restarts=options.restarts, seed=seed)
        K = min(K, N - 1)
        diag["k_detected"] = K
    work = tensor
    if options.denoise:
        sigma2 = estimate_noise_power(tensor.slice(0), K)
        work = denoise_zero_lag(tensor, sigma2)
        diag["sigma2_hat"] = sigma2
    factors = cp_als(work.tensor, K, init=options.init, tol=options.tol,
                     max_iter=options.max_iter, restarts=options.restarts, seed=seed)
    report = recover_all(factors, array, fs, options.grid_size, options.use)
    report.diagnostics.update(diag)
    return report, factors


def estimate_from_samples(samples: SampleMatrix, array: ArrayConfig,
                          options: PipelineOptions = PipelineOptions(), seed=0,
                          bandwidth_hint_hz=None) -> tuple:
    """Full pipeline from raw snapshots.

    Without ``options.max_lag`` the lag count follows
    :func:`default_max_lag`, which needs a bandwidth; ``bandwidth_hint_hz``
    defaults to the sample rate (so the cap decides).
    """
    fs = samples.sample_rate_hz
    L = options.max_lag
    if L is None:
        L = default_max_lag(fs, [bandwidth_hint_hz or fs], samples.num_samples)
    tensor = estimate_correlation_tensor(samples, L)
    return estimate_from_tensor(tensor, array, fs, options, seed)


def estimate_scenario(scenario: Scenario, options: PipelineOptions = PipelineOptions(),
                      seed=None, oracle: bool = False) -> tuple:
    """Simulate ``scenario`` (or take its noiseless exact tensor) and estimate."""
    fs = scenario.sampling.sample_rate_hz
    seed = scenario.rng_seed if seed is None else seed
    L = options.max_lag
    if L is None:
        L = (scenario.sampling.max_lag if oracle else
             default_max_lag(fs, [s.bandwidth_hz for s in scenario.sources],
                             scenario.sampling.num_samples))
    if oracle:
        exact = exact_correlation_tensor(scenario.with_(noise_power=0.0), L)
        tensor = CorrelationTensor(L, exact.tensor, 0, "exact", fs)
        options = replace(options, denoise=False)
    else:
        tensor = estimate_correlation_tensor(synthesize_array_samples(scenario), L)
    return estimate_from_tensor(tensor, scenario.array, fs, options, seed)


# Monte-Carlo

@dataclass(frozen=True)
class TrialErrors:
    se_xi: float
    se_psi: float
    se_theta: float
    nse_omega: float


def pair_estimates(omega_true, theta_true, omega_hat, theta_hat) -> np.ndarray:
    """Index of the estimate assigned to each true source.

    Minimum-cost assignment on ``(d omega / omega)^2 + (d theta / pi)^2``.
    """
    omega_true = np.asarray(omega_true, dtype=float)
    cost = (((np.asarray(omega_hat)[None, :] - omega_true[:, None]) / omega_true[:, None]) ** 2
            + ((np.asarray(theta_hat)[None, :] - np.asarray(theta_true)[:, None]) / math.pi) ** 2)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(len(omega_true), dtype=int)
    out[rows] = cols
    return out


def trial_errors(scenario: Scenario, report: EstimateReport, c_scale: float = 1e9) -> TrialErrors:
    """Summed squared errors of one trial after truth pairing."""
    good = report.good()
    K = scenario.num_sources
    if len(good) < K:
        raise ValueError(f"only {len(good)} usable estimates for {K} sources")
    w = np.array([s.omega for s in scenario.sources])
    th = np.array([s.doa_rad for s in scenario.sources])
    tau = np.array([tau_of_theta(t, scenario.array) for t in th])
    w_hat = np.array([g.omega_hat for g in good])
    th_hat = np.array([g.theta_hat for g in good])
    tau_hat = np.array([g.tau_hat for g in good])
    idx = pair_estimates(w, th, w_hat, th_hat)
    w_hat, th_hat, tau_hat = w_hat[idx], th_hat[idx], tau_hat[idx]
    return TrialErrors(
        se_xi=float(np.sum((w * tau - w_hat * tau_hat) ** 2)),
        se_psi=float(np.sum(((w - w_hat) / c_scale) ** 2)),
        se_theta=float(np.sum((th - th_hat) ** 2)),
        nse_omega=float(np.sum(((w - w_hat) / w) ** 2)),
    )


def trial_seed(master_seed: int, trial: int) -> int:
    """Seed of trial ``trial``; independent of how many trials are run."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(scenario: Scenario, options: PipelineOptions, trial: int,
              master_seed: int, oracle: bool = False) -> TrialErrors | None:
    """One simulate-and-estimate trial; ``None`` marks a failed trial."""
    seed = trial_seed(master_seed, trial)
    sc = scenario.with_(rng_seed=seed)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report, _ = estimate_scenario(sc, options, seed=seed, oracle=oracle)
        return trial_errors(sc, report)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError):
        return None


def _run_trial_args(args):
    return run_trial(*args)


@dataclass
class MetricsRow:
    sweep_value: float
    mse_xi: float
    mse_psi: float
    mse_theta: float
    nmse_omega: float
    crb_xi: float
    crb_psi: float
    trials_used: int
    trials_failed: int = 0
    aborted: bool = False


@dataclass
class MetricsTable:
    sweep: str
    rows: list = field(default_factory=list)
    trials: int = 0
    master_seed: int = 0

    COLUMNS = ("mse_xi", "mse_psi", "mse_theta", "nmse_omega", "crb_xi", "crb_psi",
               "trials_used")

    @property
    def header(self) -> list:
        return [self.sweep, *self.COLUMNS]

    def as_rows(self) -> list:
        out = []
        for r in self.rows:
            v = r.sweep_value
            out.append([int(v) if self.sweep == "num_samples" else v,
                        *(getattr(r, c) for c in self.COLUMNS)])
        return out

    def column(self, name: str) -> np.ndarray:
        if name == self.sweep:
            return np.array([r.sweep_value for r in self.rows], dtype=float)
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def any_aborted(self) -> bool:
        return any(r.aborted for r in self.rows)

    def to_dict(self) -> dict:
        return {"sweep": self.sweep, "trials": self.trials, "master_seed": self.master_seed,
                "rows": [asdict(r) for r in self.rows]}


def _crb_totals(scenario: Scenario, c_scale: float = 1e9) -> tuple:
    try:
        rep = crb(model_from_scenario(scenario, c_scale=c_scale))
    except CrbError:
        return float("nan"), float("nan")
    return rep.total("xi"), rep.total("psi")


def _apply_sweep(scenario: Scenario, sweep: str, value) -> Scenario:
    if sweep == "num_samples":
        return scenario.with_(sampling=replace(scenario.sampling, num_samples=int(value)))
    if sweep == "snr_db":
        return scenario.with_(snr_db=float(value), noise_power=None)
    raise ValueError(f"unknown sweep {sweep!r}; use 'num_samples' or 'snr_db'")


def monte_carlo(scenario: Scenario, sweep: str, values, trials: int = 100,
                options: PipelineOptions | None = None, master_seed: int = 0,
                jobs: int = 1, with_crb: bool = True, oracle: bool = False) -> MetricsTable:
    """MSE(xi), MSE(psi), MSE(theta) and NMSE(omega) over a parameter sweep.

    Every sweep point reuses the same per-trial seeds. Failed trials are
    dropped from the averages; more than 5% failures abort the point (its
    metrics become NaN and ``aborted`` is set). ``oracle`` replaces the
    sampled tensor with the noiseless analytic one.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if options is None:
        options = PipelineOptions(num_sources=scenario.num_sources)
    table = MetricsTable(sweep, trials=trials, master_seed=master_seed)
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for value in values:
            sc = _apply_sweep(scenario, sweep, value)
            args = [(sc, options, t, master_seed, oracle) for t in range(trials)]
            results = list(pool.map(_run_trial_args, args) if pool else map(_run_trial_args, args))
            ok = [r for r in results if r is not None]
            failed = trials - len(ok)
            aborted = failed > FAILURE_LIMIT * trials or not ok
            if aborted:
                means = [float("nan")] * 4
            else:
                means = [float(np.mean([getattr(r, f) for r in ok]))
                         for f in ("se_xi", "se_psi", "se_theta", "nse_omega")]
            cx, cp = _crb_totals(sc) if with_crb else (float("nan"), float("nan"))
            table.rows.append(MetricsRow(float(value), *means, cx, cp, len(ok), failed, aborted))
    finally:
        if pool:
            pool.shutdown()
    return table
