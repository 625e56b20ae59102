"""Command-line front end.

Subcommands ``simulate``, ``estimate``, ``montecarlo``, ``crb`` and ``check``
share the global options ``--config``, ``--seed``, ``--out`` and ``--jobs``.
Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .correlation import default_max_lag, estimate_correlation_tensor
from .cpd import DetectionError
from .crb import CrbError, crb, model_from_scenario
from .identifiability import is_degenerate_pair, scenario_identifiability
from .pipeline import PipelineOptions, estimate_from_tensor, estimate_scenario, monte_carlo
from .recovery import RecoveryError
from .scenario import IdentifiabilityError, Scenario, validate_scenario
from .simulate import ScenarioError, synthesize_array_samples
from .svgplot import metrics_panels, render

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

DEFAULT_TRIALS = 100


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default,
                        help="scenario/experiment TOML document")
    parser.add_argument("--seed", type=int, default=default, help="master seed (u64)")
    parser.add_argument("--out", type=Path, default=argparse.SUPPRESS if suppress else Path("."),
                        help="output directory")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="parallel Monte-Carlo workers")


def _pipeline_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--K", dest="num_sources", default=None,
                        help="number of sources or 'auto' (default: config, else auto)")
    parser.add_argument("--max-lag", type=int, default=None, help="correlation lags L")
    parser.add_argument("--mu", type=float, default=None, help="rank-detection penalty")
    parser.add_argument("--k-over", type=int, default=None, help="rank-detection over-fit rank")
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--max-iter", type=int, default=None,
                        help="ALS sweeps of the fixed-rank fit")
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--no-denoise", action="store_true", help="keep the lag-0 noise floor")
    parser.add_argument("--use", choices=("A", "AB"), default=None,
                        help="steering factor(s) used for recovery")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="passat", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write array snapshots and the ground truth")
    _global_options(p, suppress=True)

    p = sub.add_parser("estimate", help="estimate carriers, DoAs and spectra")
    _global_options(p, suppress=True)
    p.add_argument("samples", nargs="?", type=Path, help="sample file (PASSAT01)")
    p.add_argument("--from-oracle", action="store_true",
                   help="use the noiseless analytic tensor of the config scenario")
    p.add_argument("--dump-tensor", action="store_true", help="also write tensor.bin")
    p.add_argument("--dump-factors", action="store_true", help="also write factors.bin")
    _pipeline_options(p)

    p = sub.add_parser("montecarlo", help="MSE/NMSE sweep against the CRB")
    _global_options(p, suppress=True)
    p.add_argument("--sweep", choices=("num_samples", "snr_db"), default=None)
    p.add_argument("--values", type=float, nargs="+", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--no-crb", action="store_true")
    p.add_argument("--from-oracle", action="store_true",
                   help="estimate from the noiseless analytic tensor in every trial")
    _pipeline_options(p)

    p = sub.add_parser("crb", help="Cramér-Rao bounds at the scenario truth")
    _global_options(p, suppress=True)
    p.add_argument("--max-lag", type=int, default=None, help="Toeplitz lags in the model")
    p.add_argument("--c-scale", type=float, default=1e9)
    p.add_argument("--dump-fim", action="store_true", help="also write fim.bin")

    p = sub.add_parser("check", help="assumption and identifiability report")
    _global_options(p, suppress=True)
    return parser


def _load(args) -> tuple:
    if args.config is None:
        raise CliError("--config is required", EXIT_VALIDATION)
    doc = io.load_config(args.config)
    scenario = io.scenario_from_dict(doc)
    if args.seed is not None:
        scenario = scenario.with_(rng_seed=args.seed)
    return doc, scenario


def _options(args, doc: dict, scenario: Scenario | None) -> PipelineOptions:
    cfg = dict(doc.get("pipeline", {}))
    K = args.num_sources if args.num_sources is not None else cfg.get("K")
    if K is None:
        K = "auto"
    if isinstance(K, str) and K.lower() == "auto":
        K = None
    else:
        K = int(K)
    pick = {
        "max_lag": args.max_lag if args.max_lag is not None else cfg.get("L"),
        "mu": args.mu if args.mu is not None else cfg.get("mu"),
        "k_over": args.k_over if args.k_over is not None else cfg.get("k_over"),
        "tol": args.tol if args.tol is not None else cfg.get("tol"),
        "max_iter": args.max_iter if args.max_iter is not None else cfg.get("max_iter"),
        "restarts": args.restarts if args.restarts is not None else cfg.get("restarts"),
        "use": args.use or cfg.get("use"),
    }
    kwargs = {k: v for k, v in pick.items() if v is not None}
    denoise = cfg.get("denoise", True) and not args.no_denoise
    return PipelineOptions(num_sources=K, denoise=bool(denoise), **kwargs)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    doc, scenario = _load(args)
    samples = synthesize_array_samples(scenario)
    out = _out_dir(args)
    io.write_samples(out / "samples.bin", samples)
    io.save_scenario(out / "truth.toml", scenario, {"digest": samples.scenario_digest})
    print(f"wrote {out / 'samples.bin'} ({samples.num_antennas} x {samples.num_samples})")
    return EXIT_OK


def cmd_estimate(args) -> int:
    doc, scenario = _load(args)
    options = _options(args, doc, scenario)
    seed = scenario.rng_seed
    tensor = None
    if args.from_oracle:
        report, factors = estimate_scenario(scenario, options, seed=seed, oracle=True)
    else:
        samples = io.read_samples(args.samples or Path(args.out) / "samples.bin")
        if samples.num_antennas != scenario.array.num_antennas:
            raise CliError(f"sample file has {samples.num_antennas} antennas, config "
                           f"{scenario.array.num_antennas}", EXIT_VALIDATION)
        fs = samples.sample_rate_hz
        bws = [s.bandwidth_hz for s in scenario.sources] or [fs]
        L = options.max_lag or default_max_lag(fs, bws, samples.num_samples)
        tensor = estimate_correlation_tensor(samples, L)
        report, factors = estimate_from_tensor(tensor, scenario.array, fs, options, seed)
    out = _out_dir(args)
    io.write_estimates(out, report)
    diag = {k: (v.item() if isinstance(v, np.generic) else v)
            for k, v in report.diagnostics.items()}
    diag["K_used"] = report.K_used
    (out / "diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True) + "\n")
    if tensor is not None and args.dump_tensor:
        io.write_tensor(out / "tensor.bin", tensor)
    if args.dump_factors:
        io.write_factors(out / "factors.bin", factors)
    for k, s in enumerate(report.sources):
        print(f"source {k}: f={s.f_hat / 1e6:.4f} MHz theta={s.theta_hat:.4f} rad "
              f"flags={','.join(sorted(s.flags)) or '-'}")
    if not report.good():
        raise CliError("no source could be recovered", EXIT_NUMERICAL)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    doc, scenario = _load(args)
    cfg = dict(doc.get("montecarlo", {}))
    options = _options(args, doc, scenario)
    if options.num_sources is None:
        options = replace(options, num_sources=scenario.num_sources)
    sweep = args.sweep or cfg.get("sweep", "num_samples")
    values = args.values or cfg.get("values") or [scenario.sampling.num_samples]
    trials = args.trials or int(cfg.get("trials", DEFAULT_TRIALS))
    if trials < 1:
        raise CliError("trials must be at least 1", EXIT_VALIDATION)
    master = args.seed if args.seed is not None else scenario.rng_seed
    report = validate_scenario(scenario)
    if not report.passed:
        raise ScenarioError(report)
    table = monte_carlo(scenario, sweep, values, trials, options, master, args.jobs,
                        with_crb=not args.no_crb and not cfg.get("no_crb", False),
                        oracle=args.from_oracle or bool(cfg.get("oracle", False)))
    out = _out_dir(args)
    io.write_csv(out / "metrics.csv", table.header, table.as_rows())
    (out / "metrics.svg").write_text(render(metrics_panels(table)))
    meta = table.to_dict()
    meta["note"] = f"{trials} trials per point"
    (out / "metrics.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for row in table.as_rows():
        print(" ".join(f"{h}={v:.4g}" if isinstance(v, float) else f"{h}={v}"
                       for h, v in zip(table.header, row)))
    if table.any_aborted:
        raise CliError("more than 5% of the trials failed at some sweep point", EXIT_NUMERICAL)
    return EXIT_OK


def cmd_crb(args) -> int:
    doc, scenario = _load(args)
    model = model_from_scenario(scenario, max_lag=args.max_lag, c_scale=args.c_scale)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        report = crb(model)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = _out_dir(args)
    io.write_crb(out / "crb.csv", report)
    if args.dump_fim:
        io.write_fim(out / "fim.bin", report.fim)
    print(f"sum CRB(xi)={report.total('xi'):.6g} sum CRB(psi)={report.total('psi'):.6g} "
          f"cond={report.condition_number:.3g}")
    return EXIT_OK


def cmd_check(args) -> int:
    doc, scenario = _load(args)
    report = validate_scenario(scenario)
    print(report.format())
    ok = report.passed
    if scenario.num_sources and scenario.num_sources <= 8:
        ident = scenario_identifiability(scenario)
        print(ident.format())
        # An aliased carrier spacing only hurts sources with identical spectra.
        fs = scenario.sampling.sample_rate_hz
        src = scenario.sources
        degenerate = [(i, j) for i, j in ident.omega_condition_violations
                      if is_degenerate_pair(src[i], src[j], fs)]
        print("degenerate_pairs: "
              + (", ".join(f"({i},{j})" for i, j in degenerate) or "none"))
        ok = ok and ident.satisfied and not degenerate
    print(f"overall: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "montecarlo": cmd_montecarlo,
    "crb": cmd_crb,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except (io.ConfigError, IdentifiabilityError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except io.FormatError as exc:
        print(f"bad file: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CrbError as exc:
        print(f"CRB: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DetectionError, RecoveryError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
