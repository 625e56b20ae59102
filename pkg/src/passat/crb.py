"""Cramér–Rao bounds for the sub-Nyquist array model.

The data vector stacks the ``N_s`` samples of each antenna (antenna-major), so
its covariance is ``sum_k (a_k a_k^H) kron P_k + sigma2 I`` with Hermitian
Toeplitz source autocorrelation matrices ``P_k``. Unknowns are

    alpha = [xi_1..xi_K, psi_1..psi_K, p_1, ..., p_K, sigma2]

with ``xi_k = omega_k tau_k``, ``psi_k = omega_k / c`` and
``p_k = [p0, Re p1..pL, Im p1..pL]``. The Fisher information follows the
Slepian-Bangs formula for zero-mean circular Gaussian data.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, signal

from .scenario import Scenario, tau_of_theta

DEFAULT_C_SCALE = 1e9
DEFAULT_MEMORY_CAP = 4096
PINV_CONDITION = 1e12


class CrbError(RuntimeError):
    pass


@dataclass(frozen=True)
class CrbModel:
    xi: np.ndarray
    psi: np.ndarray
    lags: np.ndarray
    sigma2: float
    num_samples: int
    delays: np.ndarray
    c_scale: float = DEFAULT_C_SCALE
    memory_cap: int = DEFAULT_MEMORY_CAP

    def __post_init__(self):
        for name in ("xi", "psi", "delays"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        lags = np.asarray(self.lags, dtype=complex)
        if lags.ndim != 2:
            lags = lags.reshape(len(self.xi), -1)
        object.__setattr__(self, "lags", lags)

    @property
    def num_sources(self) -> int:
        return len(self.xi)

    @property
    def num_antennas(self) -> int:
        return len(self.delays)

    @property
    def max_lag(self) -> int:
        return self.lags.shape[1] - 1

    @property
    def num_params(self) -> int:
        K, L = self.num_sources, self.max_lag
        return 2 * K + K * (2 * L + 1) + 1

    @property
    def steering(self) -> np.ndarray:
        n = np.arange(self.num_antennas)[:, None]
        phase = n * self.xi[None, :] + self.c_scale * self.delays[:, None] * self.psi[None, :]
        return np.exp(-1j * phase)

    def param_names(self) -> list:
        K, L = self.num_sources, self.max_lag
        names = [f"xi[{k}]" for k in range(K)] + [f"psi[{k}]" for k in range(K)]
        for k in range(K):
            names.append(f"p0[{k}]")
            names += [f"re_p{l}[{k}]" for l in range(1, L + 1)]
            names += [f"im_p{l}[{k}]" for l in range(1, L + 1)]
        return names + ["sigma2"]

    def param_vector(self) -> np.ndarray:
        parts = [self.xi, self.psi]
        for k in range(self.num_sources):
            p = self.lags[k]
            parts += [[p[0].real], p[1:].real, p[1:].imag]
        parts.append([self.sigma2])
        return np.concatenate([np.asarray(x, dtype=float) for x in parts])

    def with_params(self, alpha) -> "CrbModel":
        alpha = np.asarray(alpha, dtype=float)
        K, L = self.num_sources, self.max_lag
        xi, psi = alpha[:K], alpha[K:2 * K]
        lags = np.empty((K, L + 1), dtype=complex)
        pos = 2 * K
        for k in range(K):
            lags[k, 0] = alpha[pos]
            lags[k, 1:] = alpha[pos + 1:pos + 1 + L] + 1j * alpha[pos + 1 + L:pos + 1 + 2 * L]
            pos += 2 * L + 1
        return replace(self, xi=xi, psi=psi, lags=lags, sigma2=float(alpha[pos]))

    def toeplitz(self, k: int) -> np.ndarray:
        """``P_k`` with ``P[i, j] = p_{i-j}`` below the diagonal."""
        M = self.num_samples
        col = np.zeros(M, dtype=complex)
        use = min(M, self.max_lag + 1)
        col[:use] = self.lags[k, :use]
        col[0] = col[0].real
        return linalg.toeplitz(col, col.conj())

    def shift_weights(self) -> np.ndarray:
        """(2L+1) x (2L+1) map from one source's p-parameters to shifts -L..L.

        Shift ``b`` is the matrix with ones where ``row - col = b``.
        """
        L = self.max_lag
        W = np.zeros((2 * L + 1, 2 * L + 1), dtype=complex)
        W[0, L] = 1.0
        for l in range(1, L + 1):
            W[l, L + l] = 1.0
            W[l, L - l] = 1.0
            W[L + l, L + l] = 1j
            W[L + l, L - l] = -1j
        return W


@dataclass(frozen=True)
class CrbReport:
    fim: np.ndarray
    crb_diag: np.ndarray
    condition_number: float
    names: list
    pseudo_inverse: bool = False

    def value(self, name: str) -> float:
        return float(self.crb_diag[self.names.index(name)])

    def total(self, prefix: str) -> float:
        """Sum of the bounds whose names start with ``prefix + '['``."""
        return float(sum(v for n, v in zip(self.names, self.crb_diag)
                         if n.startswith(prefix + "[")))


def default_crb_lag(num_samples: int) -> int:
    """All lags an ``N_s x N_s`` Toeplitz matrix can hold."""
    return num_samples - 1


def model_from_scenario(scenario: Scenario, num_samples: int | None = None,
                        max_lag: int | None = None, c_scale: float = DEFAULT_C_SCALE,
                        memory_cap: int = DEFAULT_MEMORY_CAP) -> CrbModel:
    """Evaluate the parameters at the scenario truth.

    Toeplitz lags come from the ideal flat-spectrum model,
    ``p_l = p sinc(B l T_s) exp(j omega l T_s)``.
    """
    ns = scenario.sampling.num_samples if num_samples is None else num_samples
    L = default_crb_lag(ns) if max_lag is None else max_lag
    fs = scenario.sampling.sample_rate_hz
    xi, psi, lags = [], [], []
    l = np.arange(L + 1)
    for src in scenario.sources:
        tau = tau_of_theta(src.doa_rad, scenario.array)
        xi.append(src.omega * tau)
        psi.append(src.omega / c_scale)
        step = np.mod(src.carrier_freq_hz / fs, 1.0)
        lags.append(src.power * np.sinc(src.bandwidth_hz * l / fs)
                    * np.exp(2j * np.pi * np.mod(l * step, 1.0)))
    lags = np.array(lags, dtype=complex).reshape(len(xi), L + 1)
    return CrbModel(np.array(xi), np.array(psi), lags, scenario.sigma2, ns,
                    scenario.array.delays, c_scale, memory_cap)


def _check_size(model: CrbModel):
    size = model.num_antennas * model.num_samples
    if size > model.memory_cap:
        raise CrbError(f"N*Ns = {size} exceeds memory cap {model.memory_cap}")


def assemble_Rx(model: CrbModel) -> np.ndarray:
    """``sum_k (a_k a_k^H) kron P_k + sigma2 I``."""
    _check_size(model)
    N, M = model.num_antennas, model.num_samples
    Rx = model.sigma2 * np.eye(N * M, dtype=complex)
    A = model.steering
    for k in range(model.num_sources):
        Rx += np.kron(np.outer(A[:, k], A[:, k].conj()), model.toeplitz(k))
    return Rx


def _shift(M: int, b: int) -> np.ndarray:
    return np.eye(M, k=-b)


def _steering_derivatives(model: CrbModel):
    A = model.steering
    n = np.arange(model.num_antennas)[:, None]
    dxi = -1j * n * A
    dpsi = -1j * model.c_scale * model.delays[:, None] * A
    return A, dxi, dpsi


def partial_derivatives(model: CrbModel) -> list:
    """Dense ``dRx/dalpha_i`` in parameter-layout order."""
    _check_size(model)
    N, M, K, L = model.num_antennas, model.num_samples, model.num_sources, model.max_lag
    A, dxi, dpsi = _steering_derivatives(model)
    out = []
    for dA in (dxi, dpsi):
        for k in range(K):
            d = np.outer(dA[:, k], A[:, k].conj())
            out.append(np.kron(d + d.conj().T, model.toeplitz(k)))
    W = model.shift_weights()
    shifts = [_shift(M, b) for b in range(-L, L + 1)]
    for k in range(K):
        aa = np.outer(A[:, k], A[:, k].conj())
        for row in W:
            Q = sum(w * S for w, S in zip(row, shifts) if w != 0)
            out.append(np.kron(aa, Q))
    out.append(np.eye(N * M, dtype=complex))
    return out


def _real_part(F: np.ndarray, what: str) -> np.ndarray:
    scale = max(np.abs(F).max(), np.finfo(float).tiny)
    if np.abs(F.imag).max() > 1e-10 * scale:
        raise CrbError(f"{what}: imaginary residue {np.abs(F.imag).max():.3e}")
    return F.real


def fim_from_derivatives(Rx: np.ndarray, derivatives) -> np.ndarray:
    """Slepian-Bangs ``tr(Rx^-1 D_i Rx^-1 D_j)`` from explicit derivatives."""
    Rinv = _inverse(Rx)
    X = [Rinv @ D for D in derivatives]
    n = len(X)
    F = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            F[i, j] = np.sum(X[i] * X[j].T)
            F[j, i] = F[i, j]
    F = _real_part(F, "FIM")
    return 0.5 * (F + F.T)


def _inverse(Rx: np.ndarray) -> np.ndarray:
    potrf, potri = linalg.lapack.get_lapack_funcs(("potrf", "potri"), (Rx,))
    c, info = potrf(Rx, lower=True)
    if info != 0:
        raise CrbError("Rx is singular or not positive definite")
    inv, info = potri(c, lower=True)
    if info != 0:
        raise CrbError("Rx inversion failed")
    low = np.tril(inv)
    return low + np.tril(inv, -1).conj().T


def _fim_structured(model: CrbModel) -> np.ndarray:
    N, M, K, L = model.num_antennas, model.num_samples, model.num_sources, model.max_lag
    Rinv = _inverse(assemble_Rx(model))
    R4 = Rinv.reshape(N, M, N, M)
    A, dxi, dpsi = _steering_derivatives(model)
    V = np.hstack([A, dxi, dpsi])
    # E[p, :, n, :] = (v_p^H kron I) Rinv (e_n kron I)
    nv = V.shape[1]
    E = (V.conj().T @ R4.reshape(N, -1)).reshape(nv, M, N, M)
    G = (E.transpose(0, 1, 3, 2) @ V).transpose(0, 3, 1, 2)

    def G2(z, y):
        # (z^H kron I) Rinv^2 (y kron I)
        return sum(E[z, :, n, :] @ E[y, :, n, :].conj().T for n in range(N))
    P = [model.toeplitz(k) for k in range(K)]
    W = model.shift_weights()
    nb = 2 * L + 1

    geo = []  # (source, [(u, v), ...]) for xi then psi params
    for off in (K, 2 * K):
        for k in range(K):
            geo.append((k, [(off + k, k), (k, off + k)]))
    ng = len(geo)
    n = ng + K * nb + 1
    F = np.zeros((n, n), dtype=complex)

    cache = {}

    def GP(v, y, q):
        if (v, y, q) not in cache:
            cache[v, y, q] = G[v, y] @ P[q]
        return cache[v, y, q]

    for i, (k, terms_i) in enumerate(geo):
        for j in range(i, ng):
            q, terms_j = geo[j]
            val = 0.0
            for u, v in terms_i:
                for y, z in terms_j:
                    val += np.sum(GP(v, y, q) * GP(z, u, k).T)
            F[i, j] = F[j, i] = val

    offsets = np.arange(-L, L + 1)
    for i, (k, terms_i) in enumerate(geo):
        for q in range(K):
            t = np.zeros(nb, dtype=complex)
            for u, v in terms_i:
                Mx = GP(q, u, k) @ G[v, q]
                t += np.array([np.trace(Mx, offset=b) for b in offsets])
            block = W @ t
            cols = slice(ng + q * nb, ng + (q + 1) * nb)
            F[i, cols] = block
            F[cols, i] = block

    for k in range(K):
        for q in range(k, K):
            H = G[q, k].T
            C = signal.correlate(H, G[k, q].conj(), mode="full", method="fft")
            # C[s + M - 1, t + M - 1] = sum_ij G[k,q][i,j] H[i+s, j+t]; need (a, -b)
            sub = C[M - 1 + offsets[:, None], M - 1 - offsets[None, :]]
            block = W @ sub @ W.T
            rk = slice(ng + k * nb, ng + (k + 1) * nb)
            rq = slice(ng + q * nb, ng + (q + 1) * nb)
            F[rk, rq] = block
            F[rq, rk] = block.T

    s = n - 1
    for i, (k, terms_i) in enumerate(geo):
        F[s, i] = F[i, s] = sum(np.sum(G2(v, u) * P[k].T) for u, v in terms_i)
    for q in range(K):
        Gq = G2(q, q)
        t = np.array([np.trace(Gq, offset=b) for b in offsets])
        cols = slice(ng + q * nb, ng + (q + 1) * nb)
        F[s, cols] = W @ t
        F[cols, s] = W @ t
    F[s, s] = np.sum(np.abs(Rinv) ** 2)

    F = _real_part(F, "FIM")
    return 0.5 * (F + F.T)


def fim(model: CrbModel, method: str = "auto") -> np.ndarray:
    """Fisher information matrix in :meth:`CrbModel.param_names` order.

    ``method="dense"`` forms every derivative explicitly; ``"structured"``
    exploits the Kronecker/Toeplitz structure and is the one that scales.
    """
    if method == "auto":
        method = "dense" if model.num_antennas * model.num_samples <= 64 else "structured"
    if method == "dense":
        return fim_from_derivatives(assemble_Rx(model), partial_derivatives(model))
    if method == "structured":
        return _fim_structured(model)
    raise ValueError(f"unknown method {method!r}")


def crb(model: CrbModel, method: str = "auto") -> CrbReport:
    """Diagonal of the inverse FIM; pseudo-inverse when badly conditioned."""
    F = fim(model, method)
    # Column scaling makes the condition number reflect identifiability
    # rather than the spread of parameter units.
    d = np.sqrt(np.clip(np.diag(F), np.finfo(float).tiny, None))
    Fs = F / np.outer(d, d)
    cond = float(np.linalg.cond(Fs))
    pinv = not math.isfinite(cond) or cond > PINV_CONDITION
    if pinv:
        warnings.warn(f"FIM numerically singular (cond={cond:.2e}); using pseudo-inverse",
                      RuntimeWarning, stacklevel=2)
        inv = np.linalg.pinv(Fs, hermitian=True)
    else:
        inv = linalg.inv(Fs, check_finite=False)
    inv = inv / np.outer(d, d)
    diag = np.diag(inv).copy()
    diag[(diag < 0) & (diag > -1e-10 * np.abs(diag).max())] = 0.0
    return CrbReport(F, diag, cond, model.param_names(), pinv)
