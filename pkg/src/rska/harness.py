"""Multi-trial experiments, parameter sweeps and their CSV outputs.

Trials run on a thread pool, but every trial owns its RNG streams
(problem seed ``problem.seed + t``, solver seed ``seed + t``) and results are
joined in trial order, so outputs do not depend on the number of workers.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from .problems import add_sphere_noise, default_eta, generate_gaussian, load_problem
from .solvers import SolverConfig, run

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e3
AGGREGATE_COLUMNS = (
    "method",
    "k",
    "row_accesses",
    "rel_residual_mean",
    "rel_residual_std",
    "rel_error_mean",
    "rel_error_std",
)
RAW_COLUMNS = ("method", "trial", "k", "row_accesses", "rel_residual", "rel_error")
SWEEP_COLUMNS = (
    "parameter",
    "value",
    "budget",
    "method",
    "trials",
    "final_rel_residual_mean",
    "final_rel_residual_std",
    "final_rel_error_mean",
    "final_rel_error_std",
    "iters_to_tol_mean",
    "converged_trials",
    "diverged_trials",
)


@dataclass
class MethodSpec:
    method: str
    variant: str = "v1"
    lam: float = 1.0
    eta: int = None
    alpha: float = None
    label: str = None

    def __post_init__(self):
        if self.method in ("RK", "RSK"):
            self.eta = 1
        if self.method == "RK":
            self.lam = 0.0
        if self.label is None:
            self.label = f"RSKA-{self.variant}" if self.method == "RSKA" else self.method


@dataclass
class ExperimentSpec:
    """One comparison of several methods over independent trials.

    ``problem`` holds ``m``, ``n``, ``s``, ``seed`` and optionally
    ``noise_rel`` (radius relative to ``||b||``) or ``noise_abs``, or a
    ``path`` to a saved problem.  With ``fresh_problem_per_trial`` trial ``t``
    draws its own instance with seed ``problem.seed + t``.
    """

    problem: dict
    methods: list
    trials: int = 1
    max_iters: int = 1000
    record_every: int = 1
    residual_tol: float = 0.0
    seed: int = 0
    tol: float = 1e-6
    fresh_problem_per_trial: bool = True
    name: str = "experiment"
    sweep: dict = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods]
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"method labels must be unique, got {labels}")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data.pop("$schema", None)
        data.pop("description", None)
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        validate_config(data)
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        return d


@dataclass
class AggregateSeries:
    """Mean and standard deviation over trials on a shared iteration grid."""

    label: str
    k: np.ndarray
    row_accesses: np.ndarray
    rel_residual_mean: np.ndarray
    rel_residual_std: np.ndarray
    rel_error_mean: np.ndarray
    rel_error_std: np.ndarray


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    aggregates: dict
    traces: dict
    statuses: dict = field(default_factory=dict)

    def first_k_below(self, label, tol):
        """First grid iteration at which the mean relative residual is ``<= tol`` (``None`` if never)."""
        agg = self.aggregates[label]
        hit = np.flatnonzero(agg.rel_residual_mean <= tol)
        return int(agg.k[hit[0]]) if hit.size else None


def validate_config(data):
    import jsonschema

    schema = json.loads(resources.files("rska.configs").joinpath("experiment.schema.json").read_text())
    jsonschema.validate(data, schema)


def builtin_config(name):
    """Path to a shipped config such as ``"fig1"``."""
    res = resources.files("rska.configs").joinpath(f"{name}.json")
    if not res.is_file():
        raise FileNotFoundError(f"no built-in config named {name!r}")
    return os.fspath(res)


def builtin_config_names():
    return sorted(
        p.name[:-5]
        for p in resources.files("rska.configs").iterdir()
        if p.name.startswith("fig") and p.name.endswith(".json")
    )


def make_problem(pspec, trial=0, fresh=True):
    if "path" in pspec:
        problem = load_problem(pspec["path"])
    else:
        seed = int(pspec.get("seed", 0)) + (trial if fresh else 0)
        problem = generate_gaussian(int(pspec["m"]), int(pspec["n"]), int(pspec["s"]), seed)
    noise_seed = int(pspec.get("seed", 0)) + trial
    if pspec.get("noise_rel") is not None:
        problem = add_sphere_noise(problem, float(pspec["noise_rel"]) * float(np.linalg.norm(problem.b)), noise_seed)
    elif pspec.get("noise_abs") is not None:
        problem = add_sphere_noise(problem, float(pspec["noise_abs"]), noise_seed)
    return problem


def solver_config(mspec, spec, trial, problem, max_iters=None):
    eta = mspec.eta if mspec.eta is not None else default_eta(problem.m, problem.n)
    return SolverConfig(
        method=mspec.method,
        lam=mspec.lam,
        eta=eta,
        variant=mspec.variant,
        alpha=mspec.alpha,
        max_iters=spec.max_iters if max_iters is None else max_iters,
        residual_tol=spec.residual_tol,
        seed=spec.seed + trial,
        record_every=spec.record_every,
        divergence_factor=DIVERGENCE_FACTOR,
    )


def _grid(max_iters, record_every):
    k = list(range(0, max_iters + 1, record_every))
    if k[-1] != max_iters:
        k.append(max_iters)
    return np.asarray(k, dtype=np.int64)


def _on_grid(trace, grid):
    # Early-stopped traces hold their last value for the rest of the grid.
    arrs = trace.as_arrays()
    pos = np.searchsorted(arrs["k"], grid, side="right") - 1
    return arrs["rel_residual"][pos], arrs["rel_error"][pos]


def aggregate(label, traces, grid, rows_per_iter):
    res = np.empty((len(traces), grid.size))
    err = np.empty_like(res)
    for i, tr in enumerate(traces):
        res[i], err[i] = _on_grid(tr, grid)
    return AggregateSeries(
        label=label,
        k=grid,
        row_accesses=grid * rows_per_iter,
        rel_residual_mean=res.mean(axis=0),
        rel_residual_std=res.std(axis=0),
        rel_error_mean=err.mean(axis=0),
        rel_error_std=err.std(axis=0),
    )


def _run_task(args):
    config, problem = args
    return run(config, problem)


def run_experiment(spec, threads=1, out_dir=None, max_iters=None):
    """Run every method of ``spec`` for ``spec.trials`` trials and aggregate.

    With ``out_dir`` the raw traces, aggregates and metadata are written as
    ``raw.csv``, ``aggregate.csv`` and ``metadata.json``; wall-clock times go
    to ``timing.csv`` since they are the only nondeterministic output.
    """
    budget = spec.max_iters if max_iters is None else max_iters
    problems = [make_problem(spec.problem, t, spec.fresh_problem_per_trial) for t in range(spec.trials)]
    tasks = []
    for mspec in spec.methods:
        for t, problem in enumerate(problems):
            tasks.append((solver_config(mspec, spec, t, problem, budget), problem))

    results = [None] * len(tasks)
    error = None
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(_run_task, task) for task in tasks]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except Exception as exc:  # flushed below, then re-raised
                error = error or exc

    grid = _grid(budget, spec.record_every)
    aggregates, traces, statuses = {}, {}, {}
    for j, mspec in enumerate(spec.methods):
        chunk = results[j * spec.trials : (j + 1) * spec.trials]
        traces[mspec.label] = chunk
        done = [tr for tr in chunk if tr is not None]
        statuses[mspec.label] = [tr.status if tr is not None else "Failed" for tr in chunk]
        if done:
            rows = tasks[j * spec.trials][0].rows_per_iteration(problems[0].m)
            aggregates[mspec.label] = aggregate(mspec.label, done, grid, rows)
    result = ExperimentResult(spec, aggregates, traces, statuses)
    if out_dir is not None:
        write_experiment(result, out_dir, status="failed" if error else "complete", error=error)
    if error is not None:
        raise error
    return result


def _fmt(v):
    return repr(float(v))


def write_experiment(result, out_dir, status="complete", error=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for label, agg in result.aggregates.items():
            for i in range(agg.k.size):
                w.writerow(
                    [label, int(agg.k[i]), int(agg.row_accesses[i])]
                    + [_fmt(getattr(agg, c)[i]) for c in AGGREGATE_COLUMNS[3:]]
                )
    with open(os.path.join(out_dir, "raw.csv"), "w", newline="") as fh, open(
        os.path.join(out_dir, "timing.csv"), "w", newline=""
    ) as th:
        w = csv.writer(fh, lineterminator="\n")
        tw = csv.writer(th, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        tw.writerow(("method", "trial", "k", "wall_ns"))
        for label, chunk in result.traces.items():
            for t, tr in enumerate(chunk):
                if tr is None:
                    continue
                for i in range(len(tr)):
                    w.writerow([label, t, tr.k[i], tr.row_accesses[i], _fmt(tr.rel_residual[i]), _fmt(tr.rel_error[i])])
                tw.writerow([label, t, tr.k[-1], tr.wall_ns[-1]])
    write_wide(result, os.path.join(out_dir, "aggregate_wide.csv"))
    meta = {
        "status": status,
        "error": None if error is None else f"{type(error).__name__}: {error}",
        "spec": result.spec.to_dict(),
        "statuses": result.statuses,
        "divergence_marker": f"rel_residual > {DIVERGENCE_FACTOR:g} * initial rel_residual",
        "grid_fill": "early-stopped traces repeat their last recorded value",
        "std": "population standard deviation over trials (ddof=0)",
    }
    with open(os.path.join(out_dir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)


def write_wide(result, path):
    """One row per grid iteration, ``<label>_mean`` and ``<label>_std`` residual columns per method."""
    labels = list(result.aggregates)
    if not labels:
        return
    grid = result.aggregates[labels[0]].k
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"{lab}_{stat}" for lab in labels for stat in ("mean", "std")])
        for i in range(grid.size):
            row = [int(grid[i])]
            for lab in labels:
                agg = result.aggregates[lab]
                row += [_fmt(agg.rel_residual_mean[i]), _fmt(agg.rel_residual_std[i])]
            w.writerow(row)


def run_config(spec, threads=1, out_dir=None):
    """Run a config: its sweep if it declares one, otherwise the experiment."""
    if spec.sweep:
        out = None
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            out = os.path.join(out_dir, "sweep.csv")
        return sweep(spec.sweep["parameter"], spec.sweep["grid"], spec, threads=threads, out_path=out)
    return run_experiment(spec, threads=threads, out_dir=out_dir)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# ----------------------------------------------------------------------------
# sweeps

SWEEP_PARAMETERS = ("eta", "alpha", "lambda")


def _apply(spec, parameter, value):
    methods = []
    for m in spec.methods:
        m = replace(m)
        if parameter == "eta" and m.method == "RSKA":
            m.eta = int(value)
        elif parameter == "alpha" and m.method == "RSKA":
            m.alpha = float(value)
        elif parameter == "lambda" and m.method != "RK":
            m.lam = float(value)
        methods.append(m)
    return replace(spec, methods=methods)


def _iters_to_tol(trace, tol):
    arrs = trace.as_arrays()
    hit = np.flatnonzero(arrs["rel_residual"] <= tol)
    return int(arrs["k"][hit[0]]) if hit.size else None


def sweep(parameter, grid, base_spec, threads=1, out_path=None):
    """Final-iterate statistics of every method at each grid value of ``parameter``.

    A run counts as diverged when its relative residual exceeds
    ``DIVERGENCE_FACTOR`` times the initial one.  For ``lambda`` each value is
    run twice, with ``max_iters`` and with ``(1 + lambda) * max_iters``.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMETERS}")
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    rows = []
    for value in grid:
        spec = _apply(base_spec, parameter, value)
        budgets = [("fixed", spec.max_iters)]
        if parameter == "lambda":
            budgets.append(("scaled", int(round((1 + float(value)) * spec.max_iters))))
        for budget_name, budget in budgets:
            result = run_experiment(spec, threads=threads, max_iters=budget)
            for label, chunk in result.traces.items():
                final_res = np.array([tr.rel_residual[-1] for tr in chunk])
                final_err = np.array([tr.rel_error[-1] for tr in chunk])
                iters = [_iters_to_tol(tr, spec.tol) for tr in chunk]
                hit = [i for i in iters if i is not None]
                diverged = sum(
                    tr.status == "Diverged" or tr.rel_residual[-1] > DIVERGENCE_FACTOR * tr.rel_residual[0]
                    for tr in chunk
                )
                rows.append(
                    {
                        "parameter": parameter,
                        "value": value,
                        "budget": int(budget),
                        "budget_kind": budget_name,
                        "method": label,
                        "trials": len(chunk),
                        "final_rel_residual_mean": float(final_res.mean()),
                        "final_rel_residual_std": float(final_res.std()),
                        "final_rel_error_mean": float(final_err.mean()),
                        "final_rel_error_std": float(final_err.std()),
                        "iters_to_tol_mean": float(np.mean(hit)) if len(hit) == len(iters) else math.nan,
                        "converged_trials": len(hit),
                        "diverged_trials": int(diverged),
                    }
                )
    if out_path is not None:
        write_sweep(rows, out_path)
    return rows


def write_sweep(rows, out_path):
    cols = SWEEP_COLUMNS[:3] + ("budget_kind",) + SWEEP_COLUMNS[3:]
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
