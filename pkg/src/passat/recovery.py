"""Physical parameters from CP factors: carriers, DoAs and power spectra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import trapezoid

from .cpd import FactorSet
from .scenario import ArrayConfig, IdentifiabilityError, delay_condition_indices

TWO_PI = 2.0 * math.pi
SPREAD_LIMIT = 0.01
TAU_SLACK = 1e-6


class RecoveryError(ValueError):
    pass


@dataclass(frozen=True)
class CarrierEstimate:
    omega: float
    per_index: dict
    spread: float
    flags: frozenset = frozenset()


@dataclass(frozen=True)
class DoaEstimate:
    theta: float
    tau: float
    per_index: np.ndarray
    flags: frozenset = frozenset()


@dataclass(frozen=True)
class Spectrum:
    omega: np.ndarray
    power: np.ndarray

    @property
    def freq_hz(self) -> np.ndarray:
        return self.omega / TWO_PI

    def integral_hz(self) -> float:
        """Power integrated over frequency in Hz (equals ``r(0)`` unclipped)."""
        return float(trapezoid(self.power, self.freq_hz))


@dataclass(frozen=True)
class SourceEstimate:
    omega_hat: float
    theta_hat: float
    tau_hat: float
    spectrum: Spectrum | None
    power_hat: float = float("nan")
    flags: frozenset = frozenset()

    @property
    def f_hat(self) -> float:
        return self.omega_hat / TWO_PI

    @property
    def xi_hat(self) -> float:
        return self.omega_hat * self.tau_hat

    @property
    def ok(self) -> bool:
        return not any(f.startswith("failed") for f in self.flags)


@dataclass(frozen=True)
class EstimateReport:
    sources: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def K_used(self) -> int:
        return len(self.sources)

    def good(self) -> list:
        return [s for s in self.sources if s.ok]


def normalize_factors(factors: FactorSet) -> FactorSet:
    """Scale columns of A and B to norm sqrt(N); R absorbs the compensation."""
    A, B, R = factors.A_hat, factors.B_hat, factors.R_hat
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    if np.any(na == 0) or np.any(nb == 0):
        raise RecoveryError("factor set has a zero column")
    sa = na / np.sqrt(A.shape[0])
    sb = nb / np.sqrt(B.shape[0])
    return replace(factors, A_hat=A / sa, B_hat=B / sb, R_hat=R * (sa * sb))


def _phases(a_hat) -> tuple:
    eta = np.mod(-np.angle(a_hat), TWO_PI)
    beta1 = np.mod(np.diff(eta), TWO_PI)
    beta2 = np.mod(np.diff(beta1), TWO_PI)
    return eta, beta1, beta2


def recover_carrier(a_hat: np.ndarray, array: ArrayConfig, indices=None) -> CarrierEstimate:
    """Carrier frequency from the two-stage phase difference of a steering column.

    ``indices`` optionally restricts the zero-based second-difference indices
    that are used. Multiple estimates are combined by averaging unit phasors
    at the scale of the largest usable second difference.
    """
    a_hat = np.asarray(a_hat)
    usable = delay_condition_indices(array)
    if indices is not None:
        wanted = set(indices)
        usable = [u for u in usable if u.index in wanted]
    if not usable:
        raise IdentifiabilityError("no usable second difference of the delays")
    _, _, beta2 = _phases(a_hat)
    per = {}
    for u in usable:
        b = beta2[u.index]
        if u.sign > 0:
            per[u.index] = b / u.d2
        elif b != 0.0:
            per[u.index] = (TWO_PI - b) / (-u.d2)
    if not per:
        raise RecoveryError("second differences carry no carrier information")
    scale = max(abs(u.d2) for u in usable)
    vals = np.array(list(per.values()))
    mean = np.mean(np.exp(1j * vals * scale))
    omega = np.mod(np.angle(mean), TWO_PI) / scale
    if omega == 0.0:
        omega = TWO_PI / scale
    spread = float(np.max(np.abs(vals - omega)) / omega)
    flags = set()
    if spread > SPREAD_LIMIT:
        flags.add("carrier_spread")
    if any(u.boundary for u in usable):
        flags.add("a4_boundary")
    return CarrierEstimate(float(omega), per, spread, frozenset(flags))


def recover_doa(a_hat: np.ndarray, omega_hat: float, array: ArrayConfig,
                strict: bool = False) -> DoaEstimate:
    """Inter-sensor delay and arrival angle given the carrier estimate.

    For each first difference both branches ``m / omega`` and
    ``(m - 2 pi) / omega`` are tried against ``|tau| <= d / C``. When both fit
    the smaller ``|tau|`` is kept and ``ambiguous`` is flagged; when neither
    fits (noise pushing an end-fire source out of range) the smaller branch is
    kept and ``tau_out_of_range`` is flagged, or RecoveryError is raised if
    ``strict``.
    """
    if not omega_hat > 0:
        raise RecoveryError("omega_hat must be positive")
    _, beta1, _ = _phases(np.asarray(a_hat))
    ddelta = np.diff(array.delays)
    m = np.mod(beta1 - ddelta * omega_hat, TWO_PI)
    bound = array.max_delay_s * (1.0 + TAU_SLACK)
    flags = set()
    taus = np.empty(len(m))
    for i, mi in enumerate(m):
        cands = [mi / omega_hat, (mi - TWO_PI) / omega_hat]
        alive = [t for t in cands if abs(t) <= bound]
        if len(alive) == 2:
            flags.add("ambiguous")
        elif not alive:
            if strict:
                raise RecoveryError(f"no admissible delay for first difference {i}")
            flags.add("tau_out_of_range")
            alive = cands
        taus[i] = min(alive, key=abs)
    tau = float(np.mean(taus))
    ratio = tau / array.max_delay_s
    theta = float(np.arccos(np.clip(ratio, -1.0, 1.0)))
    return DoaEstimate(theta, tau, taus, frozenset(flags))


def recover_spectrum(r_hat: np.ndarray, omega_hat: float, fs: float,
                     grid_size: int = 1024) -> Spectrum:
    """Band-pass power spectrum from a lag profile ``r(-L..L)``.

    The profile is rotated so ``r(0)`` is real positive and made Hermitian;
    its DTFT times ``T_s`` is clipped at zero on
    ``[omega_hat - pi f_s, omega_hat + pi f_s]``. With this scaling the
    spectrum is a density per Hz: integrating over frequency in Hz gives
    ``r(0)``, and over angular frequency gives ``2 pi r(0)``.
    """
    r = np.asarray(r_hat, dtype=complex)
    L = (len(r) - 1) // 2
    r0 = r[L]
    if abs(r0) > 0:
        r = r * (np.conj(r0) / abs(r0))
    r = 0.5 * (r + np.conj(r[::-1]))
    omega = np.linspace(omega_hat - math.pi * fs, omega_hat + math.pi * fs, grid_size)
    cycles = np.mod(omega / (TWO_PI * fs), 1.0)
    lags = np.arange(-L, L + 1)
    S = np.exp(-2j * np.pi * np.outer(cycles, lags)) @ r
    return Spectrum(omega, np.maximum(S.real, 0.0) / fs)


def _combine_columns(a_col, b_col, array, use):
    car = recover_carrier(a_col, array)
    doa = recover_doa(a_col, car.omega, array)
    if use == "A":
        return car, doa
    car_b = recover_carrier(np.conj(b_col), array)
    omega = 0.5 * (car.omega + car_b.omega)
    doa_a = recover_doa(a_col, omega, array)
    doa_b = recover_doa(np.conj(b_col), omega, array)
    tau = 0.5 * (doa_a.tau + doa_b.tau)
    theta = float(np.arccos(np.clip(tau / array.max_delay_s, -1.0, 1.0)))
    car = replace(car, omega=float(omega), flags=car.flags | car_b.flags)
    doa = DoaEstimate(theta, tau, np.concatenate([doa_a.per_index, doa_b.per_index]),
                      doa_a.flags | doa_b.flags)
    return car, doa


def recover_all(factors: FactorSet, array: ArrayConfig, fs: float,
                grid_size: int = 1024, use: str = "A") -> EstimateReport:
    """Per-column carrier, DoA and spectrum; failures are isolated per column.

    ``use="AB"`` averages the estimates from ``A_hat`` and ``conj(B_hat)``.
    """
    if use not in ("A", "AB"):
        raise ValueError(f"use must be 'A' or 'AB', got {use!r}")
    records = []
    for k in range(factors.rank):
        col = factors.subset([k])
        try:
            col = normalize_factors(col)
            car, doa = _combine_columns(col.A_hat[:, 0], col.B_hat[:, 0], array, use)
            r = col.R_hat[:, 0]
            spec = recover_spectrum(r, car.omega, fs, grid_size)
            L = (len(r) - 1) // 2
            records.append(SourceEstimate(car.omega, doa.theta, doa.tau, spec,
                                          float(abs(r[L])), car.flags | doa.flags))
        except (RecoveryError, IdentifiabilityError) as exc:
            nan = float("nan")
            records.append(SourceEstimate(nan, nan, nan, None, nan,
                                          frozenset({f"failed: {exc}"})))
    diagnostics = {
        "fit_residual": factors.fit_history[-1] if factors.fit_history else float("nan"),
        "restarts": factors.restarts,
        "condition": factors.condition,
        "converged": factors.converged,
    }
    return EstimateReport(tuple(records), diagnostics)
