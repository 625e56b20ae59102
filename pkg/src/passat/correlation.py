"""Lagged cross-correlation tensor estimation and lag-0 noise removal."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .simulate import SampleMatrix


@dataclass(frozen=True)
class CorrelationTensor:
    """Slices ``tensor[L + l] = R_x(l)`` for ``l = -L..L``."""
    lags: int
    tensor: np.ndarray
    num_samples_used: int
    estimator: str = "biased"
    sample_rate_hz: float | None = None

    @property
    def num_antennas(self) -> int:
        return self.tensor.shape[1]

    def slice(self, lag: int) -> np.ndarray:
        return self.tensor[self.lags + lag]

    @classmethod
    def from_array(cls, tensor, num_samples_used=0, sample_rate_hz=None):
        tensor = np.asarray(tensor, dtype=complex)
        return cls((tensor.shape[0] - 1) // 2, tensor, num_samples_used,
                   sample_rate_hz=sample_rate_hz)


def default_max_lag(fs: float, bandwidths_hz, num_samples: int) -> int:
    """Smallest L with ``L T_s >= 4 / B_min``, capped at ``N_s / 100``."""
    bmin = min(bandwidths_hz)
    want = math.ceil(4.0 * fs / bmin)
    cap = max(1, num_samples // 100)
    return max(1, min(want, cap))


def estimate_correlation_tensor(x: SampleMatrix | np.ndarray, L: int) -> CorrelationTensor:
    """Biased estimate ``(1/N_s) sum_t x_m(t+l) x_n(t)^*`` for ``l = -L..L``.

    For this estimator the negative lags are exactly the conjugate transposes
    of the positive ones, so they are filled in rather than recomputed.
    """
    fs = None
    if isinstance(x, SampleMatrix):
        fs = x.sample_rate_hz
        x = x.data
    x = np.asarray(x)
    N, ns = x.shape
    if L < 0 or ns <= 2 * L:
        raise ValueError(f"max lag {L} too large for {ns} samples")
    T = np.empty((2 * L + 1, N, N), dtype=complex)
    for lag in range(L + 1):
        S = x[:, lag:] @ x[:, :ns - lag].conj().T / ns
        T[L + lag] = S
        T[L - lag] = S.conj().T
    T[L] = 0.5 * (T[L] + T[L].conj().T)
    return CorrelationTensor(L, T, ns, sample_rate_hz=fs)


def estimate_noise_power(lag0_slice: np.ndarray, K: int) -> float:
    """Mean of the ``N - K`` smallest eigenvalues of the lag-0 slice."""
    lag0_slice = np.asarray(lag0_slice)
    N = lag0_slice.shape[0]
    if not 0 <= K < N:
        raise ValueError(f"need 0 <= K < N, got K={K}, N={N}")
    herm = 0.5 * (lag0_slice + lag0_slice.conj().T)
    ev = np.linalg.eigvalsh(herm)
    return max(float(np.mean(ev[:N - K])), 0.0)


def denoise_zero_lag(tensor: CorrelationTensor, sigma2: float) -> CorrelationTensor:
    """Subtract ``sigma2`` from the lag-0 diagonal."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    T = tensor.tensor.copy()
    idx = np.arange(tensor.num_antennas)
    T[tensor.lags, idx, idx] -= sigma2
    return replace(tensor, tensor=T)
