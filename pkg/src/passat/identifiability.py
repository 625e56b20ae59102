"""Kruskal-rank based uniqueness checks for the correlation-tensor CP model."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario, steering_matrix
from .simulate import source_lag_profiles

MAX_KRANK_COLUMNS = 8


@dataclass(frozen=True)
class IdentifiabilityReport:
    krank_A: int
    krank_R: int
    kruskal_lhs: int
    kruskal_rhs: int
    satisfied: bool
    omega_condition_violations: list = field(default_factory=list)
    single_component: bool = False

    def format(self) -> str:
        lines = [
            f"krank_A: {self.krank_A}",
            f"krank_R: {self.krank_R}",
            f"kruskal_lhs: {self.kruskal_lhs}",
            f"kruskal_rhs: {self.kruskal_rhs}",
            f"kruskal_satisfied: {str(self.satisfied).lower()}",
            f"single_component: {str(self.single_component).lower()}",
            "omega_condition_violations: "
            + (", ".join(f"({i},{j})" for i, j in self.omega_condition_violations) or "none"),
        ]
        return "\n".join(lines)


def _full_column_rank(M: np.ndarray, tol: float) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s[0] > 0 and s[-1] > tol * s[0]


def k_rank(M: np.ndarray, tol: float = 1e-8) -> int:
    """Largest k such that every k columns of ``M`` are linearly independent.

    A column subset counts as independent when its smallest singular value
    exceeds ``tol`` times its largest one.
    """
    M = np.asarray(M)
    if M.size == 0:
        raise ValueError("empty matrix")
    rows, cols = M.shape
    if cols > MAX_KRANK_COLUMNS:
        raise ValueError(f"exhaustive k-rank limited to {MAX_KRANK_COLUMNS} columns, got {cols}")
    if np.any(np.linalg.norm(M, axis=0) == 0):
        return 0
    k = 1
    # Every subset of a dependent set is checked at a smaller size first, so
    # the search stops at the first size with a rank-deficient subset.
    for size in range(2, min(rows, cols) + 1):
        if not all(_full_column_rank(M[:, list(c)], tol)
                   for c in itertools.combinations(range(cols), size)):
            break
        k = size
    return k


def omega_condition_check(sources, fs: float, rtol: float = 1e-9) -> list:
    """Pairs whose carrier difference is a multiple of the sampling rate."""
    bad = []
    for i, j in itertools.combinations(range(len(sources)), 2):
        diff = abs(sources[i].carrier_freq_hz - sources[j].carrier_freq_hz)
        cycles = diff / fs
        if abs(cycles - round(cycles)) <= rtol * max(1.0, cycles):
            bad.append((i, j))
    return bad


def kruskal_check(R: np.ndarray, A: np.ndarray, tol: float = 1e-8,
                  omega_violations=None) -> IdentifiabilityReport:
    """Evaluate ``k_R + 2 k_A >= 2K + 2`` for factors (R, A, conj(A))."""
    R = np.asarray(R)
    A = np.asarray(A)
    if R.shape[1] != A.shape[1]:
        raise ValueError("R and A need the same number of columns")
    K = A.shape[1]
    kR = k_rank(R, tol)
    kA = k_rank(A, tol)
    lhs = kR + 2 * kA
    rhs = 2 * K + 2
    return IdentifiabilityReport(kA, kR, lhs, rhs, lhs >= rhs,
                                 list(omega_violations or []), single_component=K == 1)


def scenario_identifiability(scenario: Scenario, max_lag: int | None = None,
                             tol: float = 1e-8) -> IdentifiabilityReport:
    """Kruskal check on the true factors of a scenario."""
    R = source_lag_profiles(scenario, max_lag)
    A = steering_matrix(scenario)
    viol = omega_condition_check(scenario.sources, scenario.sampling.sample_rate_hz)
    return kruskal_check(R, A, tol, viol)


def vandermonde(phases, rows: int) -> np.ndarray:
    """``exp(-j n phi_k)`` for ``n = 0..rows-1``."""
    n = np.arange(rows)[:, None]
    return np.exp(-1j * n * np.asarray(phases)[None, :])


def is_degenerate_pair(src_i, src_j, fs: float) -> bool:
    """Identical baseband spectra and aliased carriers (omega condition fails)."""
    same_spectrum = (math.isclose(src_i.bandwidth_hz, src_j.bandwidth_hz)
                     and math.isclose(src_i.power, src_j.power))
    return same_spectrum and bool(omega_condition_check([src_i, src_j], fs))
