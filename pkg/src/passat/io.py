"""File formats: binary sample/tensor/factor/FIM containers, TOML configs, CSVs.

Binary containers are little-endian and start with an 8-byte magic string.

=========  ==================================================================
magic      layout after the magic
=========  ==================================================================
PASSAT01   u32 N, u64 Ns, f64 fs, then N x Ns complex64 (antenna-major)
PASSATR1   u32 L, u32 N, then 2L+1 slices (lag -L..L) of N x N complex64
PASSATF1   u32 rows of R, u32 N, u32 K, then R, A, B as complex128
PASSATC1   u32 P, then the P x P FIM as float64
=========  ==================================================================
"""
from __future__ import annotations

import csv
import math
import struct
import sys
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .correlation import CorrelationTensor
from .cpd import FactorSet
from .scenario import ArrayConfig, SamplingConfig, Scenario, SourceSpec
from .simulate import SampleMatrix

SAMPLES_MAGIC = b"PASSAT01"
TENSOR_MAGIC = b"PASSATR1"
FACTORS_MAGIC = b"PASSATF1"
FIM_MAGIC = b"PASSATC1"

_SAMPLES_HEADER = struct.Struct("<8sIQd")
_TENSOR_HEADER = struct.Struct("<8sII")
_FACTORS_HEADER = struct.Struct("<8sIII")
_FIM_HEADER = struct.Struct("<8sI")

SAMPLES_HEADER_BYTES = _SAMPLES_HEADER.size


class FormatError(OSError):
    """A file is truncated, has the wrong magic or malformed content."""


class ConfigError(ValueError):
    """A configuration document is missing keys or has bad values."""


def _read_header(raw: bytes, header: struct.Struct, magic: bytes, path):
    if len(raw) < header.size:
        raise FormatError(f"{path}: file too short for header")
    fields = header.unpack_from(raw)
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    return fields[1:]


def _payload(raw: bytes, offset: int, dtype, count: int, path) -> np.ndarray:
    need = offset + count * np.dtype(dtype).itemsize
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset)


def write_samples(path, samples: SampleMatrix) -> None:
    data = np.ascontiguousarray(samples.data, dtype="<c8")
    N, ns = data.shape
    with open(path, "wb") as fh:
        fh.write(_SAMPLES_HEADER.pack(SAMPLES_MAGIC, N, ns, float(samples.sample_rate_hz)))
        fh.write(data.tobytes())


def read_samples(path) -> SampleMatrix:
    raw = Path(path).read_bytes()
    N, ns, fs = _read_header(raw, _SAMPLES_HEADER, SAMPLES_MAGIC, path)
    data = _payload(raw, _SAMPLES_HEADER.size, "<c8", N * ns, path).reshape(N, ns)
    return SampleMatrix(data.astype(complex), fs)


def write_tensor(path, tensor: CorrelationTensor) -> None:
    T = np.ascontiguousarray(tensor.tensor, dtype="<c8")
    with open(path, "wb") as fh:
        fh.write(_TENSOR_HEADER.pack(TENSOR_MAGIC, tensor.lags, T.shape[1]))
        fh.write(T.tobytes())


def read_tensor(path) -> CorrelationTensor:
    raw = Path(path).read_bytes()
    L, N = _read_header(raw, _TENSOR_HEADER, TENSOR_MAGIC, path)
    T = _payload(raw, _TENSOR_HEADER.size, "<c8", (2 * L + 1) * N * N, path)
    return CorrelationTensor(L, T.reshape(2 * L + 1, N, N).astype(complex), 0)


def write_factors(path, factors: FactorSet) -> None:
    I, K = factors.R_hat.shape
    N = factors.A_hat.shape[0]
    with open(path, "wb") as fh:
        fh.write(_FACTORS_HEADER.pack(FACTORS_MAGIC, I, N, K))
        for M in (factors.R_hat, factors.A_hat, factors.B_hat):
            fh.write(np.ascontiguousarray(M, dtype="<c16").tobytes())


def read_factors(path) -> FactorSet:
    raw = Path(path).read_bytes()
    I, N, K = _read_header(raw, _FACTORS_HEADER, FACTORS_MAGIC, path)
    flat = _payload(raw, _FACTORS_HEADER.size, "<c16", (I + 2 * N) * K, path)
    R = flat[:I * K].reshape(I, K)
    A = flat[I * K:(I + N) * K].reshape(N, K)
    B = flat[(I + N) * K:].reshape(N, K)
    return FactorSet(R.copy(), A.copy(), B.copy())


def write_fim(path, fim: np.ndarray) -> None:
    F = np.ascontiguousarray(fim, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_FIM_HEADER.pack(FIM_MAGIC, F.shape[0]))
        fh.write(F.tobytes())


def read_fim(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (P,) = _read_header(raw, _FIM_HEADER, FIM_MAGIC, path)
    return _payload(raw, _FIM_HEADER.size, "<f8", P * P, path).reshape(P, P).copy()


# Configuration documents

SCENARIO_KEYS = ("fnyq_hz", "spacing_m", "num_antennas", "delays_ns", "fs_hz",
                 "num_samples", "max_lag", "snr_db", "seed")
SOURCE_KEYS = ("carrier_hz", "bandwidth_hz", "doa_rad", "power")


def _require(doc: dict, key: str, where: str = "config"):
    if key not in doc:
        raise ConfigError(f"{where}: missing key {key!r}")
    return doc[key]


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from the flat key-value document."""
    try:
        N = int(_require(doc, "num_antennas"))
        delays = [float(d) * 1e-9 for d in _require(doc, "delays_ns")]
        array = ArrayConfig(N, float(_require(doc, "spacing_m")), tuple(delays),
                            float(_require(doc, "fnyq_hz")))
        sampling = SamplingConfig(float(_require(doc, "fs_hz")),
                                  int(_require(doc, "num_samples")),
                                  int(doc.get("max_lag", 8)))
        sources = []
        for i, block in enumerate(doc.get("source", [])):
            where = f"source {i}"
            sources.append(SourceSpec(float(_require(block, "carrier_hz", where)),
                                      float(_require(block, "bandwidth_hz", where)),
                                      float(_require(block, "doa_rad", where)),
                                      float(block.get("power", 1.0))))
        noise = doc.get("noise_power")
        return Scenario(tuple(sources), array, sampling,
                        snr_db=float(doc.get("snr_db", 10.0)),
                        rng_seed=int(doc.get("seed", 0)),
                        noise_power=None if noise is None else float(noise))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    arr, smp = scenario.array, scenario.sampling
    doc = {
        "fnyq_hz": arr.f_nyq_hz,
        "spacing_m": arr.spacing_m,
        "num_antennas": arr.num_antennas,
        "delays_ns": [d * 1e9 for d in arr.delays_s],
        "fs_hz": smp.sample_rate_hz,
        "num_samples": smp.num_samples,
        "max_lag": smp.max_lag,
        "snr_db": scenario.snr_db,
        "seed": scenario.rng_seed,
    }
    if scenario.noise_power is not None:
        doc["noise_power"] = scenario.noise_power
    doc["source"] = [{"carrier_hz": s.carrier_freq_hz, "bandwidth_hz": s.bandwidth_hz,
                      "doa_rad": s.doa_rad, "power": s.power} for s in scenario.sources]
    return doc


def load_config(path) -> dict:
    """Parse a TOML document; I/O failures surface as OSError."""
    text = Path(path).read_text()
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_config(path))


def dumps_scenario(scenario: Scenario, extra: dict | None = None) -> str:
    doc = scenario_to_dict(scenario)
    if extra:
        doc.update(extra)
    return tomli_w.dumps(doc)


def save_scenario(path, scenario: Scenario, extra: dict | None = None) -> None:
    Path(path).write_text(dumps_scenario(scenario, extra))


# CSV output

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_estimates(out_dir, report) -> list:
    """``estimates.csv`` plus one ``spectrum_<k>.csv`` per source; returns paths."""
    out = Path(out_dir)
    rows = []
    paths = [out / "estimates.csv"]
    for k, src in enumerate(report.sources):
        rows.append([k, src.f_hat, src.theta_hat, src.tau_hat, ";".join(sorted(src.flags))])
        if src.spectrum is not None:
            p = out / f"spectrum_{k}.csv"
            write_csv(p, ["omega_rad_s", "power"],
                      zip(src.spectrum.omega, src.spectrum.power))
            paths.append(p)
    write_csv(paths[0], ["source_id", "f_hat_hz", "theta_hat_rad", "tau_hat_s", "flags"], rows)
    return paths


def write_crb(path, report) -> None:
    write_csv(path, ["param_name", "crb_value"], zip(report.names, report.crb_diag))
