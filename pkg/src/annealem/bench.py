"""Paired-trial benchmark engine.

One dataset is sampled once; every trial draws a fresh random initialization
from a per-trial seed and runs each requested algorithm from that identical
init.  Success means every estimated mean lands within the criterion radius of
its matched true mean.  Aggregation (success ratios and the EM-vs-DQAEM
contingency table) reduces in trial-index order, so reports are deterministic
regardless of worker count.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .data_io import (
    PRNG_ID,
    SCHEMA_VERSION,
    GeneratorSpec,
    generator_spec_to_dict,
    params_to_dict,
    sample_gmm,
    schedule_to_dict,
)
from .estimators import (
    DEFAULT_MAX_ITERS,
    DEFAULT_REL_TOL,
    FitConfig,
    FitResult,
    Schedule,
    default_schedule,
    fit,
    random_init,
)
from .model import Dataset, GmmParams

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SuccessCriterion:
    """Success iff every matched mean satisfies |mu_hat - mu|^2 <= threshold * trace(Sigma_true)."""

    threshold: float = 0.3

    def __post_init__(self) -> None:
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")


def splitmix64(x: int) -> int:
    """One step of the splitmix64 mixer; maps any 64-bit state to a well-mixed 64-bit value."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trial_seed(master_seed: int, index: int) -> int:
    """Per-trial init seed fanned out from the master seed."""
    if master_seed < 0 or index < 0:
        raise ValueError("master_seed and index must be >= 0")
    return splitmix64((master_seed + index) & _MASK64)


def match_components(estimated: GmmParams, truth: GmmParams) -> tuple[int, ...]:
    """Best relabeling of estimated components against the truth.

    Returns the permutation p minimizing sum_k |mu_est[p[k]] - mu_true[k]|^2,
    brute-forced over all K! orders (0-based indices; K <= 6).
    """
    k = truth.n_components
    if estimated.n_components != k:
        raise ValueError(
            f"component count mismatch: estimated {estimated.n_components}, truth {k}"
        )
    if k > 6:
        raise ValueError(f"brute-force matching supports K <= 6, got K={k}")
    distances = np.sum(
        (estimated.means[:, None, :] - truth.means[None, :, :]) ** 2, axis=2
    )
    best_perm = None
    best_cost = np.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(distances[perm[j], j] for j in range(k))
        if cost < best_cost:
            best_cost = cost
            best_perm = perm
    return best_perm


def is_success(estimated: GmmParams, truth: GmmParams, crit: SuccessCriterion) -> bool:
    """Apply the success criterion after matching components to the truth."""
    if estimated.dim != truth.dim:
        raise ValueError(f"dimension mismatch: estimated {estimated.dim}, truth {truth.dim}")
    perm = match_components(estimated, truth)
    for j in range(truth.n_components):
        err = estimated.means[perm[j]] - truth.means[j]
        bound = crit.threshold * float(np.trace(truth.covariances[j]))
        if float(err @ err) > bound:
            return False
    return True


@dataclass(frozen=True)
class AlgorithmOutcome:
    """Per-algorithm summary of one trial."""

    algorithm: str
    success: bool
    final_log_likelihood: float
    final_params: GmmParams | None
    iterations_used: int
    converged: bool
    events: tuple[str, ...]
    error: str | None = None


@dataclass(frozen=True)
class TrialRecord:
    """All algorithm outcomes for one shared-initialization trial."""

    trial_id: int
    init_seed: int
    outcomes: dict[str, AlgorithmOutcome]


@dataclass(frozen=True)
class BenchReport:
    """Aggregate of a full benchmark run, serializable via to_dict."""

    generator: GeneratorSpec
    algorithms: tuple[str, ...]
    n_trials: int
    master_seed: int
    criterion: SuccessCriterion
    schedules: dict[str, Schedule | None]
    max_iters: int
    rel_tol: float
    trials: tuple[TrialRecord, ...]
    success_counts: dict[str, int]
    success_ratios: dict[str, float]
    contingency: dict | None

    def to_dict(self) -> dict:
        trials = []
        for trial in self.trials:
            outcomes = {}
            for name in self.algorithms:
                outcome = trial.outcomes[name]
                outcomes[name] = {
                    "success": outcome.success,
                    "final_log_likelihood": outcome.final_log_likelihood,
                    "final_params": (
                        None
                        if outcome.final_params is None
                        else params_to_dict(outcome.final_params)
                    ),
                    "iterations_used": outcome.iterations_used,
                    "converged": outcome.converged,
                    "events": list(outcome.events),
                    "error": outcome.error,
                }
            trials.append(
                {
                    "trial_id": trial.trial_id,
                    "init_seed": trial.init_seed,
                    "algorithms": outcomes,
                }
            )
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "bench_report",
            "prng": PRNG_ID,
            "generator": generator_spec_to_dict(self.generator),
            "algorithms": list(self.algorithms),
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "criterion": {"threshold": self.criterion.threshold},
            "schedules": {
                name: schedule_to_dict(self.schedules[name]) for name in self.algorithms
            },
            "max_iters": self.max_iters,
            "rel_tol": self.rel_tol,
            "success_counts": dict(self.success_counts),
            "success_ratios": dict(self.success_ratios),
            "contingency": self.contingency,
            "trials": trials,
        }


def _run_trial(
    trial_id: int,
    *,
    data: Dataset,
    truth: GmmParams,
    algorithms: tuple[str, ...],
    schedules: dict[str, Schedule | None],
    crit: SuccessCriterion,
    master_seed: int,
    max_iters: int,
    rel_tol: float,
    init_params: GmmParams | None,
) -> TrialRecord:
    seed = trial_seed(master_seed, trial_id)
    init = init_params if init_params is not None else random_init(data, truth.n_components, seed)
    outcomes: dict[str, AlgorithmOutcome] = {}
    for name in algorithms:
        config = FitConfig(
            algorithm=name,
            schedule=schedules.get(name),
            max_iters=max_iters,
            rel_tol=rel_tol,
            seed=seed,
        )
        try:
            result = fit(data, config, init)
        except Exception as exc:  # record the failure, keep the benchmark running
            outcomes[name] = AlgorithmOutcome(
                algorithm=name,
                success=False,
                final_log_likelihood=float("nan"),
                final_params=None,
                iterations_used=0,
                converged=False,
                events=(),
                error=f"{type(exc).__name__}: {exc}",
            )
            continue
        if np.isfinite(result.final_log_likelihood):
            success = is_success(result.final_params, truth, crit)
            error = None
        else:
            success = False
            error = "non-finite objective"
        outcomes[name] = AlgorithmOutcome(
            algorithm=name,
            success=success,
            final_log_likelihood=result.final_log_likelihood,
            final_params=result.final_params,
            iterations_used=result.iterations_used,
            converged=result.converged,
            events=result.events,
            error=error,
        )
    return TrialRecord(trial_id=trial_id, init_seed=seed, outcomes=outcomes)


def run_benchmark(
    spec: GeneratorSpec,
    algorithms,
    n_trials: int,
    schedules: dict[str, Schedule | None] | None = None,
    crit: SuccessCriterion | None = None,
    *,
    master_seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    rel_tol: float = DEFAULT_REL_TOL,
    jobs: int = 1,
    init_params: GmmParams | None = None,
) -> BenchReport:
    """Run the paired-trial experiment and aggregate success statistics.

    The dataset is sampled once from `spec`; each trial fits every algorithm
    from one shared random initialization (or `init_params` when given, which
    makes all trials start identically).  Trials may execute in a process
    pool (`jobs` > 1); aggregation order is fixed by trial index either way.
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    algorithms = tuple(str(name).upper() for name in algorithms)
    if not algorithms:
        raise ValueError("need at least one algorithm")
    if schedules is None:
        schedules = {}
    schedules = {
        name: schedules[name] if name in schedules else default_schedule(name)
        for name in algorithms
    }
    crit = SuccessCriterion() if crit is None else crit

    data = sample_gmm(spec)
    truth = spec.true_params
    runner = partial(
        _run_trial,
        data=data,
        truth=truth,
        algorithms=algorithms,
        schedules=schedules,
        crit=crit,
        master_seed=master_seed,
        max_iters=max_iters,
        rel_tol=rel_tol,
        init_params=init_params,
    )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = tuple(pool.map(runner, range(n_trials), chunksize=8))
    else:
        trials = tuple(runner(i) for i in range(n_trials))

    success_counts = {
        name: sum(1 for trial in trials if trial.outcomes[name].success) for name in algorithms
    }
    success_ratios = {name: success_counts[name] / n_trials for name in algorithms}

    contingency = None
    if "EM" in algorithms and "DQAEM" in algorithms:
        counts = {"em_success_dqaem_success": 0, "em_success_dqaem_fail": 0,
                  "em_fail_dqaem_success": 0, "em_fail_dqaem_fail": 0}
        for trial in trials:
            em = "success" if trial.outcomes["EM"].success else "fail"
            dq = "success" if trial.outcomes["DQAEM"].success else "fail"
            counts[f"em_{em}_dqaem_{dq}"] += 1
        contingency = {
            "counts": counts,
            "ratios": {key: value / n_trials for key, value in counts.items()},
        }

    return BenchReport(
        generator=spec,
        algorithms=algorithms,
        n_trials=n_trials,
        master_seed=master_seed,
        criterion=crit,
        schedules=schedules,
        max_iters=max_iters,
        rel_tol=rel_tol,
        trials=trials,
        success_counts=success_counts,
        success_ratios=success_ratios,
        contingency=contingency,
    )


def emit_trace_table(results, path) -> None:
    """Write per-iteration traces of one or more fits as a flat CSV.

    Columns: iteration, algorithm, objective, log_likelihood; one row per
    iteration per fit, fits in the given order.
    """
    results = list(results)
    if not results:
        raise ValueError("no fit results to tabulate")
    for result in results:
        if not isinstance(result, FitResult):
            raise TypeError(f"expected FitResult, got {type(result).__name__}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("iteration,algorithm,objective,log_likelihood\n")
            for result in results:
                for row in result.trace:
                    handle.write(
                        f"{row.iteration},{result.algorithm},"
                        f"{row.objective:.17g},{row.log_likelihood:.17g}\n"
                    )
    except OSError as exc:
        raise OSError(f"cannot write trace CSV {path}: {exc}") from exc
