"""Command-line interface: ``rska <subcommand> ...``.

Exit codes: 0 success, 1 usage error (a JSON diagnostic on stderr),
2 numerical failure (non-convergence, divergence, failed verification).
"""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import checks, harness, theory
from .core import spectral_norm
from .exceptions import (
    DimensionMismatch,
    FormatError,
    InvalidEta,
    InvalidSparsity,
    IoError,
    NoConvergence,
    OutOfRange,
    RSKAError,
    TooLarge,
    ZeroRhs,
    ZeroRow,
    ZeroVector,
)
from .problems import add_sphere_noise, default_eta, generate_gaussian, load_problem, save_problem
from .sampling import VARIANTS, build_variant
from .solvers import METHODS, SolverConfig, run
from .validation import parse_grid

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

USAGE_ERRORS = (
    DimensionMismatch,
    FormatError,
    InvalidEta,
    InvalidSparsity,
    IoError,
    TooLarge,
    ZeroRhs,
    ZeroRow,
    ZeroVector,
    ValueError,
    FileNotFoundError,
)
NUMERICAL_ERRORS = (NoConvergence, OutOfRange, ArithmeticError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _diagnose(kind, exc):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "column"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    print(json.dumps(payload), file=sys.stderr)


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for trials")
    p.add_argument("--out", default=None, help="output path (file or directory, per subcommand)")


def _problem_args(p, required_size=False):
    p.add_argument("--problem", help="saved problem (matrix file with a .json sidecar)")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int, default=10, help="number of nonzeros in the ground truth")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--noise-rel", type=float, help="noise radius as a fraction of ||b||")
    noise.add_argument("--noise-abs", type=float, help="absolute noise radius")


def _load_or_generate(args):
    if args.problem:
        problem = load_problem(args.problem)
    else:
        if args.m is None or args.n is None:
            raise UsageError("either --problem or both --m and --n are required")
        problem = generate_gaussian(args.m, args.n, min(args.s, args.n), args.seed)
    if args.noise_rel is not None:
        problem = add_sphere_noise(problem, args.noise_rel * float(np.linalg.norm(problem.b)), args.seed)
    elif args.noise_abs is not None:
        problem = add_sphere_noise(problem, args.noise_abs, args.seed)
    return problem


def _schema_error():
    from jsonschema import ValidationError

    return ValidationError


def build_parser():
    parser = _Parser(prog="rska", description="Randomized sparse Kaczmarz with averaging.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a seeded Gaussian problem")
    _common(p)
    _problem_args(p)
    p.add_argument("--format", choices=("mtx", "csv"), default="mtx")

    p = sub.add_parser("solve", help="run one method on one problem and write its trace CSV")
    _common(p)
    _problem_args(p)
    p.add_argument("--method", choices=METHODS, default="RSKA")
    p.add_argument("--variant", choices=VARIANTS, default="v2")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--eta", type=int, default=None, help="batch size (default 1 + min(m,n)//10)")
    p.add_argument("--alpha", type=float, default=None, help="uniform relaxation override")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=0.0, help="stop at this relative residual")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="omit the wall_ns column")

    p = sub.add_parser("experiment", help="run an experiment config")
    _common(p)
    p.add_argument("--config", required=True, help="JSON config path or a built-in name such as fig1")
    p.add_argument("--trials", type=int)
    p.add_argument("--max-iters", type=int)

    p = sub.add_parser("sweep", help="final-iterate table over a parameter grid")
    _common(p)
    p.add_argument("--config", required=True, help="base JSON config path or built-in name")
    p.add_argument("--parameter", choices=harness.SWEEP_PARAMETERS)
    p.add_argument("--grid", help="comma separated values")
    p.add_argument("--trials", type=int)
    p.add_argument("--max-iters", type=int)

    p = sub.add_parser("rate", help="theory certificates as JSON")
    _common(p)
    _problem_args(p)
    p.add_argument("--eta", type=int, default=None)
    p.add_argument("--lam", type=float, default=1.0)
    regime = p.add_mutually_exclusive_group()
    regime.add_argument("--uniform", action="store_true", help="uniform weights at alpha* (default)")
    regime.add_argument("--variant", choices=VARIANTS, help="certify this weight scheme instead")
    p.add_argument("--alpha", type=float, default=None, help="certify this relaxation instead of alpha*")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--max-cols", type=int, default=16, help="column-subset enumeration limit for gamma")

    p = sub.add_parser("verify", help="run the invariant and oracle checks")
    _common(p)
    p.add_argument("--quick", action="store_true")
    return parser


def _load_spec(args):
    path = args.config if os.path.exists(args.config) else harness.builtin_config(args.config)
    spec = harness.ExperimentSpec.from_json(path)
    overrides = {"seed": args.seed} if args.seed else {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if overrides:
        from dataclasses import replace

        spec = replace(spec, **overrides)
    return spec


def cmd_generate(args):
    if not args.out:
        raise UsageError("generate needs --out")
    problem = _load_or_generate(args)
    save_problem(problem, args.out, fmt=args.format)
    print(json.dumps({"matrix": args.out, "sidecar": args.out + ".json", **problem.metadata()}))
    return EXIT_OK


def cmd_solve(args):
    problem = _load_or_generate(args)
    eta = args.eta
    if eta is None:
        eta = default_eta(problem.m, problem.n) if args.method == "RSKA" else 1
    config = SolverConfig(
        method=args.method,
        lam=args.lam,
        eta=eta,
        variant=args.variant,
        alpha=args.alpha,
        max_iters=args.max_iters,
        residual_tol=args.tol,
        seed=args.seed,
        record_every=args.record_every,
    )
    trace = run(config, problem)
    text = trace.to_csv(args.out, include_timing=not args.no_timing)
    if args.out is None:
        sys.stdout.write(text)
    summary = {"status": trace.status, "iterations": trace.n_iter, "rel_residual": trace.rel_residual[-1]}
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_NUMERICAL if trace.status == "Diverged" else EXIT_OK


def cmd_experiment(args):
    spec = _load_spec(args)
    out = args.out or f"{spec.name}_out"
    result = harness.run_config(spec, threads=args.threads, out_dir=out)
    summary = {"out": out, "name": spec.name}
    if isinstance(result, harness.ExperimentResult):
        # Diverged runs are an experimental outcome (e.g. alpha past its bound), not a tool failure.
        summary["statuses"] = {k: sorted(set(v)) for k, v in result.statuses.items()}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_sweep(args):
    spec = _load_spec(args)
    parameter = args.parameter or (spec.sweep or {}).get("parameter")
    if parameter is None:
        raise UsageError("sweep needs --parameter (or a config with a sweep block)")
    if args.grid is not None:
        grid = parse_grid(args.grid, int if parameter == "eta" else float)
    elif spec.sweep and spec.sweep.get("parameter") == parameter:
        grid = spec.sweep["grid"]
    else:
        raise UsageError("sweep needs --grid")
    out = args.out or f"{spec.name}_sweep.csv"
    harness.sweep(parameter, grid, spec, threads=args.threads, out_path=out)
    print(json.dumps({"out": out, "parameter": parameter, "grid": list(grid)}))
    return EXIT_OK


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def rate_record(problem, eta, lam, variant=None, alpha=None, epsilon=None, max_cols=16):
    A = problem.A
    smax = spectral_norm(A.values)
    gamma = None
    if problem.xhat is not None and np.any(problem.xhat):
        gamma = theory.gamma_bound(A.values, problem.xhat, lam, max_cols=max_cols)
    if variant is None:
        cert = theory.certify(A, eta, lam=lam, alpha=alpha, gamma=gamma)
        weights = cert.alpha
    else:
        scheme = build_variant(A, variant, eta, 0)
        weights = scheme.weights if not scheme.uniform_weights else scheme.alpha
        cert = theory.certify(
            A,
            eta,
            lam=lam,
            weights=None if scheme.uniform_weights else scheme.weights,
            alpha=scheme.alpha if alpha is None else alpha,
            gamma=gamma,
        )
    noisy = {"a": None, "c": None, "epsilon": None, "horizon": None}
    if gamma is not None:
        delta = problem.noise_level or 0.0
        try:
            nc = theory.noisy_rate(cert.alpha, eta, weights, A, gamma, epsilon=epsilon, delta=delta, smax=smax)
            noisy = {"a": nc.a, "c": nc.c, "epsilon": nc.epsilon, "horizon": nc.horizon, "delta": delta}
        except OutOfRange as exc:
            noisy["error"] = str(exc)
    guide = theory.batch_guidance(A, eta, smax=smax)
    record = {
        "alpha_star": cert.alpha_star,
        "L_star": cert.L_star,
        "alpha": cert.alpha,
        "L": cert.L,
        "q": cert.q,
        "gamma": cert.gamma,
        "eta": int(eta),
        "regime": cert.regime,
        "extrapolated": cert.extrapolated,
        "sigma_T": {"lower": cert.sigma_T_lower, "upper": cert.sigma_T_upper},
        "noisy": noisy,
        "guidance": {
            "H_eta": guide["H_eta"],
            "speedup_cap": guide["speedup_cap"],
            "eta_cap": guide["recommended_eta_cap"],
        },
        "problem": problem.metadata(),
        "tolerances": {"spectral_norm_rel": 1e-12, "subgradient_inf": 1e-9},
    }
    return record


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float):
        return _finite(obj)
    return obj


def cmd_rate(args):
    problem = _load_or_generate(args)
    eta = args.eta if args.eta is not None else default_eta(problem.m, problem.n)
    record = _clean(
        rate_record(problem, eta, args.lam, variant=args.variant, alpha=args.alpha, epsilon=args.epsilon, max_cols=args.max_cols)
    )
    text = json.dumps(record, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_verify(args):
    results = checks.run_all(quick=args.quick)
    for r in results:
        print(r.line())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([r.__dict__ for r in results], fh, indent=2)
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "rate": cmd_rate,
    "verify": cmd_verify,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _diagnose("usage", exc)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _diagnose("usage", exc)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        _diagnose("numerical", exc)
        return EXIT_NUMERICAL
    except (USAGE_ERRORS + (_schema_error(),)) as exc:
        _diagnose("usage", exc)
        return EXIT_USAGE
    except RSKAError as exc:
        _diagnose("numerical", exc)
        return EXIT_NUMERICAL


def main():
    sys.exit(cli_main())
