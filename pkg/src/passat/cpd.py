"""CP decomposition of third-order complex tensors by alternating least squares.

Unfoldings follow the usual convention where the mode-n unfolding places the
mode-n fibers as columns, with the remaining indices ordered first-fastest.
With that convention ``X_(1) = R (B kr A)^T``, ``X_(2) = A (B kr R)^T`` and
``X_(3) = B (A kr R)^T`` for ``X = sum_k r_k o a_k o b_k``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

RIDGE_FLOOR = 1e-12
PRUNE_FRACTION = 0.05
FIT_FLOOR = 1e-14
REGULARIZED_MAX_ITER = 5000


class DetectionError(RuntimeError):
    """Rank detection removed every component."""


@dataclass(frozen=True)
class FactorSet:
    R_hat: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    fit_history: tuple = field(default_factory=tuple)
    converged: bool = False
    restarts: int = 1
    condition: float = 1.0

    def __post_init__(self):
        k = {self.R_hat.shape[1], self.A_hat.shape[1], self.B_hat.shape[1]}
        if len(k) != 1:
            raise ValueError("factor matrices need equal column counts")

    @property
    def rank(self) -> int:
        return self.A_hat.shape[1]

    def reconstruct(self) -> np.ndarray:
        return cp_reconstruct(self.R_hat, self.A_hat, self.B_hat)

    def subset(self, columns) -> "FactorSet":
        cols = list(columns)
        return replace(self, R_hat=self.R_hat[:, cols], A_hat=self.A_hat[:, cols],
                       B_hat=self.B_hat[:, cols])

    @property
    def component_norms(self) -> np.ndarray:
        return (np.linalg.norm(self.R_hat, axis=0) * np.linalg.norm(self.A_hat, axis=0)
                * np.linalg.norm(self.B_hat, axis=0))


def _as_array(tensor) -> np.ndarray:
    return np.asarray(getattr(tensor, "tensor", tensor))


def unfold(tensor, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (modes numbered 1, 2, 3)."""
    X = _as_array(tensor)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    return np.moveaxis(X, mode - 1, 0).reshape(X.shape[mode - 1], -1, order="F")


def refold(matrix: np.ndarray, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    shape = tuple(shape)
    moved = (shape[mode - 1],) + tuple(s for i, s in enumerate(shape) if i != mode - 1)
    return np.moveaxis(np.reshape(matrix, moved, order="F"), 0, mode - 1)


def khatri_rao(M1: np.ndarray, M2: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row ``i * J + j`` holds ``M1[i] * M2[j]``."""
    M1 = np.asarray(M1)
    M2 = np.asarray(M2)
    if M1.shape[1] != M2.shape[1]:
        raise ValueError(f"column counts differ: {M1.shape[1]} vs {M2.shape[1]}")
    I, K = M1.shape
    J = M2.shape[0]
    return (M1[:, None, :] * M2[None, :, :]).reshape(I * J, K)


def cp_reconstruct(R, A, B) -> np.ndarray:
    return np.einsum("lk,mk,nk->lmn", R, A, B)


def fit_residual(tensor, factors: FactorSet) -> float:
    """``||T - sum_k r_k o a_k o b_k||_F / ||T||_F``."""
    X = _as_array(tensor)
    recon = factors.reconstruct()
    if recon.shape != X.shape:
        raise ValueError(f"shape mismatch {recon.shape} vs {X.shape}")
    norm = np.linalg.norm(X)
    err = np.linalg.norm(X - recon)
    if norm == 0:
        return 0.0 if err == 0 else float("inf")
    return float(err / norm)


def _solve(gram: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    G = gram + ridge * np.eye(gram.shape[0])
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def _update(Xn: np.ndarray, F1: np.ndarray, F2: np.ndarray, mu: float):
    """Least-squares factor for ``Xn ~ M (F1 kr F2)^T`` (optionally ridged)."""
    Z = khatri_rao(F1, F2)
    gram = (F1.conj().T @ F1) * (F2.conj().T @ F2)
    ridge = mu if mu > 0 else RIDGE_FLOOR * max(np.trace(gram).real, np.finfo(float).tiny)
    M = _solve(gram, (Xn @ Z.conj()).T, ridge).T
    return M, np.linalg.cond(gram + ridge * np.eye(gram.shape[0]))


def _balance(R, A, B):
    nr, na, nb = (np.linalg.norm(F, axis=0) for F in (R, A, B))
    ok = (nr > 0) & (na > 0) & (nb > 0)
    g = np.cbrt(np.where(ok, nr * na * nb, 1.0))
    R = R * np.where(ok, g / np.where(ok, nr, 1.0), 1.0)
    A = A * np.where(ok, g / np.where(ok, na, 1.0), 1.0)
    B = B * np.where(ok, g / np.where(ok, nb, 1.0), 1.0)
    return R, A, B


def _random_factor(rng, rows, K):
    return (rng.standard_normal((rows, K)) + 1j * rng.standard_normal((rows, K))) / np.sqrt(2)


def _hosvd_factor(X, mode, K, rng):
    U = np.linalg.svd(unfold(X, mode), full_matrices=False)[0]
    if U.shape[1] >= K:
        return U[:, :K]
    return np.hstack([U, _random_factor(rng, U.shape[0], K - U.shape[1])])


def _als_run(X, A, B, mu, tol, max_iter):
    X1, X2, X3 = unfold(X, 1), unfold(X, 2), unfold(X, 3)
    norm = np.linalg.norm(X)
    history = []
    converged = False
    cond = 1.0
    R = None
    for _ in range(max_iter):
        R, c1 = _update(X1, B, A, mu)
        A, c2 = _update(X2, B, R, mu)
        B, c3 = _update(X3, A, R, mu)
        R, A, B = _balance(R, A, B)
        cond = max(c1, c2, c3)
        err = np.linalg.norm(X - cp_reconstruct(R, A, B)) ** 2
        if mu > 0:
            err += mu * sum(np.linalg.norm(F) ** 2 for F in (R, A, B))
        f = np.sqrt(err) / norm
        history.append(float(f))
        if f < FIT_FLOOR:
            converged = True
            break
        if len(history) > 1 and abs(history[-2] - f) <= tol * history[-2]:
            converged = True
            break
    return FactorSet(R, A, B, tuple(history), converged, condition=float(cond))


def cp_als(tensor, K: int, init: str = "random", tol: float = 1e-10,
           max_iter: int = 500, restarts: int = 5, seed=0) -> FactorSet:
    """Fixed-rank CP decomposition; the best of ``restarts`` runs is returned.

    ``init="hosvd"`` seeds the first run with leading singular vectors of the
    unfoldings; the remaining runs always start from complex Gaussian factors.
    """
    X = _as_array(tensor)
    if K < 1:
        raise ValueError("K must be at least 1")
    if init not in ("random", "hosvd"):
        raise ValueError(f"unknown init {init!r}")
    if not np.all(np.isfinite(X)):
        raise ValueError("tensor has non-finite entries")
    if np.linalg.norm(X) == 0:
        I, N1, N2 = X.shape
        z = FactorSet(np.zeros((I, K), complex), np.zeros((N1, K), complex),
                      np.zeros((N2, K), complex), (0.0,), True, restarts)
        return z
    rng = np.random.default_rng(seed)
    best = None
    for run in range(max(1, restarts)):
        if run == 0 and init == "hosvd":
            A0, B0 = _hosvd_factor(X, 2, K, rng), _hosvd_factor(X, 3, K, rng)
        else:
            A0, B0 = _random_factor(rng, X.shape[1], K), _random_factor(rng, X.shape[2], K)
        fs = _als_run(X, A0, B0, 0.0, tol, max_iter)
        if best is None or fs.fit_history[-1] < best.fit_history[-1]:
            best = fs
    if best.condition > 1e12:
        warnings.warn(f"ill-conditioned Khatri-Rao system (cond={best.condition:.2e})",
                      RuntimeWarning, stacklevel=2)
    return replace(best, restarts=max(1, restarts))


def cp_als_regularized(tensor, K_over: int, mu: float | None = None, tol: float = 1e-10,
                       max_iter: int = REGULARIZED_MAX_ITER, restarts: int = 1, seed=0,
                       prune_fraction: float = PRUNE_FRACTION):
    """Rank-detecting CP with a Frobenius penalty on all three factors.

    Components whose norm product falls below ``prune_fraction`` of the
    largest one are removed after convergence. Returns ``(factors, K_hat)``.
    The penalty merges split components only slowly, so the default
    iteration budget is larger than for :func:`cp_als`.
    ``fit_history`` tracks the penalised objective, normalised by ``||T||``.
    """
    X = _as_array(tensor)
    norm = np.linalg.norm(X)
    if norm == 0 or not np.isfinite(norm):
        raise DetectionError("all components negligible (zero tensor)")
    if mu is None:
        mu = 1e-3 * norm
    if mu <= 0:
        raise ValueError("mu must be positive")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        A0 = _random_factor(rng, X.shape[1], K_over)
        B0 = _random_factor(rng, X.shape[2], K_over)
        fs = _als_run(X, A0, B0, mu, tol, max_iter)
        if best is None or fs.fit_history[-1] < best.fit_history[-1]:
            best = fs
    w = best.component_norms
    if w.max() <= 1e-12 * norm:
        raise DetectionError("all components negligible")
    keep = np.flatnonzero(w >= prune_fraction * w.max())
    keep = keep[np.argsort(-w[keep])]
    pruned = replace(best.subset(keep), restarts=max(1, restarts))
    return pruned, len(keep)


def congruence(estimate: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-column ``|<x_hat, x>| / (||x_hat|| ||x||)`` after optimal matching.

    Returned in the column order of ``truth``.
    """
    E = estimate / np.linalg.norm(estimate, axis=0, keepdims=True)
    T = truth / np.linalg.norm(truth, axis=0, keepdims=True)
    C = np.abs(T.conj().T @ E)
    rows, cols = linear_sum_assignment(-C)
    return C[rows, cols]


def factor_congruence(factors: FactorSet, R, A, B) -> np.ndarray:
    """Joint congruence (product over the three modes) after a shared matching."""
    def normed(M):
        return M / np.linalg.norm(M, axis=0, keepdims=True)
    C = np.ones((A.shape[1], factors.rank))
    for est, tru in ((factors.R_hat, R), (factors.A_hat, A), (factors.B_hat, B)):
        C = C * np.abs(normed(tru).conj().T @ normed(est))
    rows, cols = linear_sum_assignment(-C)
    return C[rows, cols]
