"""Command-line surface: dataset generation, single fits, benchmarks, traces.

Exit codes: 0 on success, 2 for usage errors (argparse), 1 for runtime
failures.  Every output file embeds the fully resolved configuration that
produced it, and no output carries timestamps, so identical flags give
identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import SuccessCriterion, emit_trace_table, run_benchmark, trial_seed
from .data_io import (
    PRNG_ID,
    SCHEMA_VERSION,
    GeneratorSpec,
    fit_result_from_dict,
    generator_spec_to_dict,
    read_csv,
    read_result_json,
    sample_gmm,
    three_cluster_spec,
    write_csv,
    write_result_json,
)
from .estimators import (
    DEFAULT_BETA_INIT,
    DEFAULT_CUTOFF,
    DEFAULT_GAMMA_INIT,
    DEFAULT_MAX_ITERS,
    DEFAULT_RATE,
    DEFAULT_REL_TOL,
    FitConfig,
    Schedule,
    fit,
    random_init,
)
from .model import GmmParams
from .plots import plot_dataset, plot_success_ratios, plot_traces

ALGO_CHOICES = ("em", "dsaem", "dqaem")


def _parse_means(text: str) -> np.ndarray:
    """Parse semicolon-separated mean vectors, e.g. '-3,0;0,0;3,0'."""
    rows = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        rows.append([float(cell) for cell in part.split(",")])
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise ValueError(f"cannot parse means from {text!r}")
    return np.array(rows, dtype=float)


def _default_means(k: int, dim: int) -> np.ndarray:
    """Evenly spaced means along the first axis, 3 units apart, centered at 0."""
    means = np.zeros((k, dim))
    means[:, 0] = 3.0 * (np.arange(k) - (k - 1) / 2.0)
    return means


def _schedule_from_flags(args, algorithm: str) -> Schedule | None:
    if algorithm == "EM":
        return None
    if algorithm == "DSAEM":
        init, target = args.beta_init, 1.0
    else:
        init, target = args.gamma_init, 0.0
    if args.schedule == "constant":
        return Schedule(kind="constant", init=init)
    return Schedule(
        kind="exponential", init=init, rate=args.rate, target=target, cutoff=args.cutoff
    )


def _with_stem_suffix(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def cmd_generate(args) -> int:
    if args.preset == "paper":
        if args.k is not None or args.dim is not None or args.means is not None:
            raise ValueError("--preset paper fixes --k, --dim, and --means")
        spec = three_cluster_spec(n_points=args.n, seed=args.seed)
    else:
        means = None if args.means is None else _parse_means(args.means)
        k = args.k if args.k is not None else (3 if means is None else means.shape[0])
        dim = args.dim if args.dim is not None else (2 if means is None else means.shape[1])
        if means is None:
            means = _default_means(k, dim)
        if means.shape != (k, dim):
            raise ValueError(f"means shape {means.shape} does not match K={k}, D={dim}")
        params = GmmParams(
            weights=np.full(k, 1.0 / k),
            means=means,
            covariances=np.tile(np.eye(dim), (k, 1, 1)),
        )
        spec = GeneratorSpec(true_params=params, n_points=args.n, seed=args.seed)

    data = sample_gmm(spec)
    out = Path(args.output)
    write_csv(data, out)
    sidecar = _with_stem_suffix(out, ".spec.json")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "generator_spec",
        "prng": PRNG_ID,
        "preset": args.preset,
        "csv": out.name,
        "generator": generator_spec_to_dict(spec),
    }
    write_result_json(_PlainDoc(doc), sidecar)
    if args.plot is not None:
        plot_dataset(data, args.plot)
    print(f"wrote {data.n} points ({data.dim}-D, {spec.true_params.n_components} components) "
          f"to {out} (spec: {sidecar})")
    return 0


class _PlainDoc:
    """Adapter so write_result_json can emit a prebuilt document."""

    def __init__(self, doc: dict):
        self._doc = doc

    def to_dict(self) -> dict:
        return self._doc


def cmd_fit(args) -> int:
    data = read_csv(args.data)
    algorithm = args.algo.upper()
    schedule = _schedule_from_flags(args, algorithm)
    config = FitConfig(
        algorithm=algorithm,
        schedule=schedule,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        seed=args.seed,
    )
    init = random_init(data, args.k, args.seed)
    result = fit(data, config, init)
    write_result_json(result, args.output)
    if args.plot is not None:
        plot_traces([result], args.plot)
    last = result.trace[-1]
    print(
        f"{algorithm}: objective {last.objective:.6f}, "
        f"log-likelihood {result.final_log_likelihood:.6f}, "
        f"iterations {result.iterations_used}, converged {result.converged}"
    )
    print(f"wrote {args.output}")
    return 0


def cmd_bench(args) -> int:
    algorithms = [name.strip().lower() for name in args.algos.split(",") if name.strip()]
    for name in algorithms:
        if name not in ALGO_CHOICES:
            raise ValueError(f"unknown algorithm {name!r}, expected one of {ALGO_CHOICES}")
    if not algorithms:
        raise ValueError("need at least one algorithm in --algos")
    spec = three_cluster_spec(n_points=args.n, seed=args.data_seed)
    schedules = {name.upper(): _schedule_from_flags(args, name.upper()) for name in algorithms}
    crit = SuccessCriterion(threshold=args.threshold)
    report = run_benchmark(
        spec,
        algorithms,
        args.trials,
        schedules,
        crit,
        master_seed=args.master_seed,
        max_iters=args.max_iters,
        rel_tol=args.rel_tol,
        jobs=args.jobs,
    )
    out = Path(args.output)
    write_result_json(report, out)

    # Representative per-iteration traces: re-run trial 0's paired fits.
    data = sample_gmm(spec)
    init = random_init(data, spec.true_params.n_components, trial_seed(args.master_seed, 0))
    trace_results = []
    for name in report.algorithms:
        config = FitConfig(
            algorithm=name,
            schedule=schedules[name],
            max_iters=args.max_iters,
            rel_tol=args.rel_tol,
            seed=trial_seed(args.master_seed, 0),
        )
        trace_results.append(fit(data, config, init))
    trace_out = (
        Path(args.trace_out) if args.trace_out is not None else _with_stem_suffix(out, "_trace.csv")
    )
    emit_trace_table(trace_results, trace_out)

    if not args.no_figures:
        plot_traces(
            trace_results,
            _with_stem_suffix(out, "_traces.png"),
            title="objective vs iteration (trial 0)",
        )
        plot_success_ratios(report, _with_stem_suffix(out, "_success.png"))
        plot_dataset(data, _with_stem_suffix(out, "_dataset.png"), title="benchmark dataset")

    print(
        f"dataset: {spec.n_points} points (seed {spec.seed}); "
        f"{report.n_trials} trials (master seed {report.master_seed})"
    )
    print("success ratios:")
    for name in report.algorithms:
        count = report.success_counts[name]
        print(f"  {name:6s} {100.0 * report.success_ratios[name]:5.1f} %  ({count}/{report.n_trials})")
    if report.contingency is not None:
        ratios = report.contingency["ratios"]
        print("EM vs DQAEM contingency (fraction of trials):")
        print("              DQAEM success   DQAEM fail")
        print(
            f"  EM success   {100.0 * ratios['em_success_dqaem_success']:10.1f} % "
            f"{100.0 * ratios['em_success_dqaem_fail']:10.1f} %"
        )
        print(
            f"  EM fail      {100.0 * ratios['em_fail_dqaem_success']:10.1f} % "
            f"{100.0 * ratios['em_fail_dqaem_fail']:10.1f} %"
        )
    print(f"wrote {out} and {trace_out}")
    return 0


def cmd_trace(args) -> int:
    results = [fit_result_from_dict(read_result_json(path)) for path in args.results]
    emit_trace_table(results, args.output)
    if not args.no_figures:
        figure = Path(args.plot) if args.plot is not None else Path(args.output).with_suffix(".png")
        plot_traces(results, figure)
        print(f"wrote {args.output} and {figure}")
    else:
        print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annealem",
        description=(
            "Gaussian-mixture fitting by EM and its deterministic annealing variants "
            "(tempered and quantum), with a paired-trial success benchmark."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample a synthetic mixture dataset to CSV")
    gen.add_argument("--preset", choices=("paper",), default=None,
                     help="named configuration: 'paper' = three unit clusters at (-3,0),(0,0),(3,0)")
    gen.add_argument("--n", type=int, default=600, help="number of points (default 600)")
    gen.add_argument("--k", type=int, default=None, help="number of components (default 3)")
    gen.add_argument("--dim", type=int, default=None, help="data dimension (default 2)")
    gen.add_argument("--means", type=str, default=None,
                     help="component means as 'x,y;x,y;...' (default: spaced 3 apart on axis 1)")
    gen.add_argument("--seed", type=int, default=1, help="sampling seed (default 1)")
    gen.add_argument("-o", "--output", required=True, help="output CSV path")
    gen.add_argument("--plot", default=None, help="also render a scatter figure to this path")
    gen.set_defaults(func=cmd_generate)

    fit_p = sub.add_parser("fit", help="run one EM/DSAEM/DQAEM fit on a CSV dataset")
    fit_p.add_argument("--data", required=True, help="input dataset CSV")
    fit_p.add_argument("--algo", required=True, choices=ALGO_CHOICES, help="algorithm to run")
    fit_p.add_argument("--k", type=int, default=3, help="number of components (default 3)")
    fit_p.add_argument("--seed", type=int, default=0, help="initialization seed (default 0)")
    fit_p.add_argument("--schedule", choices=("exponential", "constant"), default="exponential",
                       help="annealing schedule shape (default exponential)")
    fit_p.add_argument("--gamma-init", type=float, default=DEFAULT_GAMMA_INIT,
                       help=f"starting quantum coupling strength (default {DEFAULT_GAMMA_INIT})")
    fit_p.add_argument("--beta-init", type=float, default=DEFAULT_BETA_INIT,
                       help=f"starting inverse temperature (default {DEFAULT_BETA_INIT})")
    fit_p.add_argument("--rate", type=float, default=DEFAULT_RATE,
                       help=f"per-iteration schedule rate (default {DEFAULT_RATE})")
    fit_p.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF,
                       help=f"snap-to-target distance (default {DEFAULT_CUTOFF})")
    fit_p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS,
                       help=f"iteration cap (default {DEFAULT_MAX_ITERS})")
    fit_p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL,
                       help=f"relative convergence tolerance (default {DEFAULT_REL_TOL})")
    fit_p.add_argument("-o", "--output", required=True, help="output result JSON path")
    fit_p.add_argument("--plot", default=None, help="also render the trace figure to this path")
    fit_p.set_defaults(func=cmd_fit)

    bench = sub.add_parser("bench", help="paired-trial success benchmark over many inits")
    bench.add_argument("--preset", choices=("paper",), default="paper",
                       help="dataset preset (default 'paper')")
    bench.add_argument("--trials", type=int, default=1000, help="number of trials (default 1000)")
    bench.add_argument("--master-seed", type=int, default=0,
                       help="seed fanned out to per-trial init seeds (default 0)")
    bench.add_argument("--data-seed", type=int, default=13,
                       help="seed of the one shared dataset (default 13)")
    bench.add_argument("--n", type=int, default=600, help="dataset size (default 600)")
    bench.add_argument("--algos", default="em,dsaem,dqaem",
                       help="comma-separated algorithms (default em,dsaem,dqaem)")
    bench.add_argument("--threshold", type=float, default=0.3,
                       help="success threshold c in |mu err|^2 <= c trace(Sigma) (default 0.3)")
    bench.add_argument("--schedule", choices=("exponential", "constant"), default="exponential",
                       help="annealing schedule shape (default exponential)")
    bench.add_argument("--gamma-init", type=float, default=DEFAULT_GAMMA_INIT)
    bench.add_argument("--beta-init", type=float, default=DEFAULT_BETA_INIT)
    bench.add_argument("--rate", type=float, default=DEFAULT_RATE)
    bench.add_argument("--cutoff", type=float, default=DEFAULT_CUTOFF)
    bench.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    bench.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    bench.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    bench.add_argument("-o", "--output", default="bench_report.json",
                       help="report JSON path (default bench_report.json)")
    bench.add_argument("--trace-out", default=None,
                       help="trial-0 trace CSV path (default: <report stem>_trace.csv)")
    bench.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    bench.set_defaults(func=cmd_bench)

    trace = sub.add_parser("trace", help="tabulate fit-result JSONs as one trace CSV")
    trace.add_argument("--results", nargs="+", required=True, help="fit result JSON paths")
    trace.add_argument("-o", "--output", required=True, help="output CSV path")
    trace.add_argument("--plot", default=None,
                       help="trace figure path (default: output CSV with .png)")
    trace.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    trace.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
