"""Fit drivers for the three algorithms: shared M step, annealing schedules,
convergence control, and per-iteration trace recording.

One iteration is E step -> trace row -> convergence test -> M step, with the
annealing schedule advancing once per iteration.  Convergence is only tested
once the annealing parameter sits at its terminal value (a constant schedule
is terminal from the start), after which the run continues as plain EM on the
algorithm's own objective until the relative change drops below rel_tol.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg import log_sum_exp
from .model import (
    EPSILON_COV,
    WEIGHT_FLOOR,
    Dataset,
    GmmParams,
    InvalidParameterError,
    hamiltonian_diags,
    log_likelihood,
)
from .posteriors import (
    _maybe_validate,
    _quantum_from_h,
    _tempered_from_h,
    _check_coupling,
    uniform_coupling,
)

ALGORITHMS = ("EM", "DSAEM", "DQAEM")

DEFAULT_MAX_ITERS = 500
DEFAULT_REL_TOL = 1e-8
DEFAULT_RATE = 0.95
DEFAULT_CUTOFF = 1e-3
DEFAULT_GAMMA_INIT = 1.0
DEFAULT_BETA_INIT = 0.7

# A component whose effective count drops below this fraction of N is
# considered starved and gets re-seeded instead of updated.
DEGENERATE_FRACTION = 1e-8


@dataclass(frozen=True)
class Schedule:
    """Annealing parameter as a function of the iteration index.

    Exponential schedules decay toward `target` as
    target + (init - target) * rate**t and snap exactly to the target once
    within `cutoff` of it, so the terminal value is reached at a finite
    iteration.  Constant schedules hold `init` forever and count as terminal
    from the first iteration.
    """

    kind: str
    init: float
    rate: float = 1.0
    target: float = 0.0
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "exponential"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not np.isfinite(self.init) or not np.isfinite(self.target):
            raise ValueError("schedule init and target must be finite")
        if self.kind == "exponential":
            if not 0.0 < self.rate <= 1.0:
                raise ValueError(f"rate must be in (0, 1], got {self.rate}")
            if not self.cutoff > 0.0:
                raise ValueError(f"cutoff must be > 0, got {self.cutoff}")

    def value(self, t: int) -> float:
        """Annealing value at iteration t (t >= 0)."""
        if t < 0:
            raise ValueError(f"iteration index must be >= 0, got {t}")
        if self.kind == "constant":
            return self.init
        v = self.target + (self.init - self.target) * self.rate**t
        if abs(v - self.target) < self.cutoff:
            return self.target
        return v

    def terminal_at(self, t: int) -> bool:
        """Whether the schedule has reached its terminal value at iteration t."""
        if self.kind == "constant":
            return True
        return self.value(t) == self.target


def make_schedule(
    kind: str, init: float, rate: float, floor_or_target: float, cutoff: float = DEFAULT_CUTOFF
) -> Schedule:
    """Build a schedule; `floor_or_target` is the terminal value it anneals to."""
    return Schedule(kind=kind, init=init, rate=rate, target=floor_or_target, cutoff=cutoff)


def default_schedule(algorithm: str) -> Schedule | None:
    """The schedule an algorithm uses when the config leaves it unset."""
    if algorithm == "EM":
        return None
    if algorithm == "DSAEM":
        return make_schedule("exponential", DEFAULT_BETA_INIT, DEFAULT_RATE, 1.0)
    if algorithm == "DQAEM":
        return make_schedule("exponential", DEFAULT_GAMMA_INIT, DEFAULT_RATE, 0.0)
    raise ValueError(f"unknown algorithm {algorithm!r}")


@dataclass(frozen=True)
class FitConfig:
    """Everything a fit needs besides the data and the initial parameters."""

    algorithm: str
    schedule: Schedule | None = None
    max_iters: int = DEFAULT_MAX_ITERS
    rel_tol: float = DEFAULT_REL_TOL
    seed: int = 0
    coupling: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", str(self.algorithm).upper())
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        if not self.rel_tol > 0.0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")


@dataclass(frozen=True)
class TraceRow:
    """One iteration: annealing value (None for EM), objective, log-likelihood."""

    iteration: int
    anneal: float | None
    objective: float
    log_likelihood: float


@dataclass(frozen=True)
class FitResult:
    """Outcome of one fit: final parameters plus the per-iteration record."""

    algorithm: str
    final_params: GmmParams
    final_log_likelihood: float
    converged: bool
    iterations_used: int
    trace: tuple[TraceRow, ...]
    events: tuple[str, ...]
    config: FitConfig


def random_init(data: Dataset, k: int, seed: int) -> GmmParams:
    """Initial parameters: means uniform in the data's bounding box, diagonal
    covariances from the per-axis data variance, uniform weights."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    rng = np.random.default_rng(seed)
    lo = data.points.min(axis=0)
    hi = data.points.max(axis=0)
    means = lo + (hi - lo) * rng.random((k, data.dim))
    variances = np.maximum(data.points.var(axis=0), EPSILON_COV)
    covariances = np.tile(np.diag(variances), (k, 1, 1))
    weights = np.full(k, 1.0 / k)
    return GmmParams(weights, means, covariances)


def _m_step_with_events(data: Dataset, resp: np.ndarray) -> tuple[GmmParams, list[str]]:
    resp = np.asarray(resp, dtype=float)
    n, d = data.points.shape
    if resp.ndim != 2 or resp.shape[0] != n:
        raise ValueError(f"responsibilities must be ({n}, K), got {resp.shape}")
    k = resp.shape[1]
    points = data.points

    counts = resp.sum(axis=0)
    degenerate = counts < DEGENERATE_FRACTION * n
    weights = counts / n
    means = np.empty((k, d))
    covariances = np.empty((k, d, d))
    events: list[str] = []

    for j in range(k):
        if degenerate[j]:
            continue
        mu = resp[:, j] @ points / counts[j]
        diff = points - mu
        scatter = (diff * resp[:, j, None]).T @ diff / counts[j]
        scatter = 0.5 * (scatter + scatter.T)
        means[j] = mu
        covariances[j] = scatter + EPSILON_COV * np.eye(d)

    if degenerate.any():
        # Re-seed each starved component at the point the mixture explains
        # worst (smallest maximum responsibility), with the global covariance.
        worst = int(np.argmin(resp.max(axis=1)))
        centered = points - points.mean(axis=0)
        global_cov = centered.T @ centered / n
        global_cov = 0.5 * (global_cov + global_cov.T) + EPSILON_COV * np.eye(d)
        for j in np.nonzero(degenerate)[0]:
            means[j] = points[worst]
            covariances[j] = global_cov
            weights[j] = 1.0 / k
            events.append(
                f"component {j} degenerate (count {counts[j]:.3g}); "
                f"re-seeded at data point {worst}"
            )

    weights = np.maximum(weights, WEIGHT_FLOOR)
    weights = weights / weights.sum()
    return GmmParams(weights, means, covariances), events


def m_step(data: Dataset, resp: np.ndarray) -> GmmParams:
    """Weighted-moment parameter update from fixed responsibilities.

    pi_k = N_k/N, mu_k = sum_i y_i r[i][k] / N_k, Sigma_k the weighted scatter
    around the new mean plus the epsilon_cov ridge.  Starved components
    (N_k < 1e-8 N) are re-seeded rather than updated.
    """
    params, _ = _m_step_with_events(data, resp)
    return params


def fit(data: Dataset, config: FitConfig, init: GmmParams) -> FitResult:
    """Run one EM/DSAEM/DQAEM fit from `init` and record its trace.

    The trace holds, per iteration, the annealing value, the algorithm's own
    objective (log-likelihood for EM, -F for the annealed variants), and the
    plain log-likelihood.  Deterministic: same inputs give the same result.
    """
    if init.dim != data.dim:
        raise InvalidParameterError(
            f"init dimension {init.dim} does not match data dimension {data.dim}"
        )
    algorithm = config.algorithm
    schedule = config.schedule if config.schedule is not None else default_schedule(algorithm)
    coupling = None
    if algorithm == "DQAEM":
        coupling = (
            uniform_coupling(init.n_components)
            if config.coupling is None
            else _check_coupling(config.coupling, init.n_components)
        )
        if schedule.init < 0.0 or (schedule.kind == "exponential" and schedule.target < 0.0):
            raise ValueError("gamma schedule values must be >= 0")
    if algorithm == "DSAEM":
        if schedule.init <= 0.0 or (schedule.kind == "exponential" and schedule.target <= 0.0):
            raise ValueError("beta schedule values must be > 0")

    params = init
    trace: list[TraceRow] = []
    events: list[str] = []
    converged = False
    prev_objective: float | None = None

    for t in range(config.max_iters):
        h = hamiltonian_diags(data, params)
        if algorithm == "EM":
            resp, log_z = _tempered_from_h(h, 1.0)
            objective = float(np.sum(log_z))
            loglik = objective
            anneal = None
            terminal = True
        elif algorithm == "DSAEM":
            beta = schedule.value(t)
            resp, log_z = _tempered_from_h(h, beta)
            objective = float(np.sum(log_z) / beta)
            loglik = objective if beta == 1.0 else float(np.sum(log_sum_exp(-h, axis=1)))
            anneal = beta
            terminal = schedule.terminal_at(t)
        else:
            gamma = schedule.value(t)
            resp, log_z = _quantum_from_h(h, gamma, coupling)
            objective = float(np.sum(log_z))
            loglik = objective if gamma == 0.0 else float(np.sum(log_sum_exp(-h, axis=1)))
            anneal = gamma
            terminal = schedule.terminal_at(t)

        _maybe_validate(resp)
        trace.append(TraceRow(t, anneal, objective, loglik))

        if (
            terminal
            and prev_objective is not None
            and abs(objective - prev_objective) < config.rel_tol * (1.0 + abs(objective))
        ):
            converged = True
            break
        prev_objective = objective if terminal else None

        params, step_events = _m_step_with_events(data, resp)
        events.extend(f"iteration {t}: {ev}" for ev in step_events)

    resolved = replace(config, schedule=schedule, coupling=coupling)
    return FitResult(
        algorithm=algorithm,
        final_params=params,
        final_log_likelihood=log_likelihood(data, params),
        converged=converged,
        iterations_used=len(trace),
        trace=tuple(trace),
        events=tuple(events),
        config=resolved,
    )
