"""Scenario description: sources, array geometry, delay lines and sampling.

Also holds the closed-form array response (inter-sensor delay and steering
vector) and the checks of the modelling assumptions that the estimator relies
on.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8

# |D2| * f_nyq is compared against 1 with this slack; the reference delay
# pattern lands exactly on the boundary.
BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class SourceSpec:
    carrier_freq_hz: float
    bandwidth_hz: float
    doa_rad: float
    power: float = 1.0

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.carrier_freq_hz


@dataclass(frozen=True)
class ArrayConfig:
    num_antennas: int
    spacing_m: float
    delays_s: tuple
    f_nyq_hz: float
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        delays = tuple(float(d) for d in self.delays_s)
        object.__setattr__(self, "delays_s", delays)
        if len(delays) != self.num_antennas:
            raise ValueError(
                f"expected {self.num_antennas} delays, got {len(delays)}")
        if self.num_antennas < 2:
            raise ValueError("an array needs at least two antennas")

    @property
    def delays(self) -> np.ndarray:
        return np.asarray(self.delays_s, dtype=float)

    @property
    def max_delay_s(self) -> float:
        """Largest inter-sensor propagation delay, d / C."""
        return self.spacing_m / self.speed_of_light


@dataclass(frozen=True)
class SamplingConfig:
    sample_rate_hz: float
    num_samples: int
    max_lag: int = 8

    @property
    def period(self) -> float:
        return 1.0 / self.sample_rate_hz


@dataclass(frozen=True)
class Scenario:
    sources: tuple
    array: ArrayConfig
    sampling: SamplingConfig
    snr_db: float = 10.0
    rng_seed: int = 0
    noise_power: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    @property
    def sigma2(self) -> float:
        """Noise variance; from ``snr_db`` unless ``noise_power`` is set.

        SNR is the ratio of the total source power to the per-antenna noise
        variance.
        """
        if self.noise_power is not None:
            return float(self.noise_power)
        total = sum(s.power for s in self.sources)
        return total / 10.0 ** (self.snr_db / 10.0)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str
    warning: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    @property
    def warnings(self) -> list:
        return [c.warning for c in self.checks if c.warning]

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            line = f"{c.name}: {status}  {c.detail}"
            if c.warning:
                line += f"  [warning: {c.warning}]"
            lines.append(line)
        return "\n".join(lines)


@dataclass(frozen=True)
class DelayIndex:
    """A usable second difference of the delay line.

    ``index`` is zero-based: it refers to ``D2 = delays[index + 2] -
    2 * delays[index + 1] + delays[index]``.
    """
    index: int
    d2: float
    sign: int
    boundary: bool


class IdentifiabilityError(ValueError):
    """Raised when the delay pattern cannot resolve the carrier frequency."""


def tau_of_theta(theta: float, array: ArrayConfig) -> float:
    """Propagation delay between adjacent sensors for arrival angle ``theta``."""
    if not 0.0 <= theta < math.pi:
        raise ValueError(f"theta={theta} outside [0, pi)")
    return array.spacing_m * math.cos(theta) / array.speed_of_light


def steering_vector(array: ArrayConfig, theta: float, omega: float) -> np.ndarray:
    """Array response ``exp(-j ((n-1) tau omega + Delta_n omega))``.

    Phases are reduced modulo one cycle per element before exponentiation.
    """
    if not 0.0 <= theta < math.pi:
        raise ValueError(f"theta={theta} outside [0, pi)")
    if omega <= 0:
        raise ValueError("omega must be positive")
    tau = tau_of_theta(theta, array)
    return _response(array, tau, omega)


def _response(array: ArrayConfig, tau: float, omega: float) -> np.ndarray:
    n = np.arange(array.num_antennas)
    cycles = (omega / (2.0 * math.pi)) * (n * tau + array.delays)
    return np.exp(-2j * np.pi * np.mod(cycles, 1.0))


def steering_matrix(scenario: Scenario) -> np.ndarray:
    """N x K matrix whose columns are the source steering vectors."""
    cols = [steering_vector(scenario.array, s.doa_rad, s.omega)
            for s in scenario.sources]
    if not cols:
        return np.zeros((scenario.array.num_antennas, 0), dtype=complex)
    return np.stack(cols, axis=1)


def second_differences(delays) -> np.ndarray:
    d = np.asarray(delays, dtype=float)
    return d[2:] - 2.0 * d[1:-1] + d[:-2]


def delay_condition_indices(array: ArrayConfig) -> list[DelayIndex]:
    """Second differences usable for carrier recovery.

    An index qualifies when ``0 < |D2| f_nyq <= 1``; equality is accepted and
    marked as ``boundary``. Negative second differences are kept with their
    sign.
    """
    if array.num_antennas < 3:
        raise IdentifiabilityError("need at least three antennas")
    out = []
    for i, d2 in enumerate(second_differences(array.delays)):
        scaled = abs(d2) * array.f_nyq_hz
        if scaled <= 1e-12 or scaled > 1.0 + BOUNDARY_RTOL:
            continue
        out.append(DelayIndex(index=i, d2=float(d2), sign=1 if d2 > 0 else -1,
                              boundary=abs(scaled - 1.0) <= BOUNDARY_RTOL))
    return out


def validate_scenario(scenario: Scenario) -> ValidationReport:
    """Check the six modelling assumptions; never raises."""
    arr = scenario.array
    fs = scenario.sampling.sample_rate_hz
    srcs = scenario.sources
    K, N = len(srcs), arr.num_antennas
    checks = []

    bad = [i for i, s in enumerate(srcs)
           if not (s.bandwidth_hz > 0 and s.power > 0
                   and 0.0 <= s.doa_rad < math.pi)]
    ok = not bad and K < N
    detail = f"K={K}, N={N}"
    if bad:
        detail += f"; malformed sources {bad}"
    if K >= N:
        detail += "; need K < N"
    checks.append(AssumptionCheck("A1", ok, detail))

    dupes = []
    for i in range(K):
        for j in range(i + 1, K):
            if (math.isclose(srcs[i].doa_rad, srcs[j].doa_rad, rel_tol=0, abs_tol=1e-12)
                    and math.isclose(srcs[i].carrier_freq_hz, srcs[j].carrier_freq_hz,
                                     rel_tol=1e-12)):
                dupes.append((i, j))
    checks.append(AssumptionCheck(
        "A2", not dupes,
        "all (theta, omega) pairs distinct" if not dupes
        else f"identical (theta, omega) for pairs {dupes}"))

    out_of_band = [i for i, s in enumerate(srcs)
                   if not (s.carrier_freq_hz - s.bandwidth_hz / 2 >= 0
                           and 0 < s.carrier_freq_hz <= arr.f_nyq_hz
                           and s.carrier_freq_hz + s.bandwidth_hz / 2 <= arr.f_nyq_hz)]
    checks.append(AssumptionCheck(
        "A3", not out_of_band,
        f"f_nyq={arr.f_nyq_hz:g} Hz" + (f"; out-of-band sources {out_of_band}"
                                         if out_of_band else "")))

    if N < 3:
        checks.append(AssumptionCheck("A4", False, "need N >= 3 for second differences"))
    else:
        usable = delay_condition_indices(arr)
        d2 = second_differences(arr.delays) * arr.f_nyq_hz
        detail = "D2*f_nyq = [" + ", ".join(f"{v:.3g}" for v in d2) + "]"
        warning = None
        if usable and all(u.boundary for u in usable):
            warning = "usable second differences sit on |D2| f_nyq = 1"
        elif any(u.boundary for u in usable):
            warning = "some usable second differences sit on |D2| f_nyq = 1"
        checks.append(AssumptionCheck("A4", bool(usable), detail, warning))

    bmax = max((s.bandwidth_hz for s in srcs), default=0.0)
    checks.append(AssumptionCheck(
        "A5", fs >= bmax, f"f_s={fs:g} Hz, max B={bmax:g} Hz"))

    limit = arr.speed_of_light / arr.f_nyq_hz
    checks.append(AssumptionCheck(
        "A6", arr.spacing_m < limit,
        f"d={arr.spacing_m:.6g} m, C/f_nyq={limit:.6g} m"))
    return ValidationReport(tuple(checks))


def uniform_delays(num_antennas: int, step_s: float) -> tuple:
    return tuple(i * step_s for i in range(num_antennas))


def sources_from(carriers_hz: Sequence[float], bandwidths_hz: Sequence[float],
                 doas_rad: Sequence[float], powers: Sequence[float] | None = None) -> tuple:
    if powers is None:
        powers = [1.0] * len(carriers_hz)
    return tuple(SourceSpec(float(f), float(b), float(t), float(p))
                 for f, b, t, p in zip(carriers_hz, bandwidths_hz, doas_rad, powers))
