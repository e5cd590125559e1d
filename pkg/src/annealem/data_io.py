"""Dataset synthesis, CSV exchange, and JSON persistence of fit results.

All serialized floats use 17 significant digits (CSV) or repr round-tripping
(JSON), so written artifacts reload bit-exactly.  Nothing here records wall
time or hostnames: identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .estimators import FitConfig, FitResult, Schedule, TraceRow
from .model import Dataset, GmmParams

SCHEMA_VERSION = "1"

# Seedable generator identity recorded in every output; numpy's default_rng is
# PCG64 with ziggurat standard normals.
PRNG_ID = "numpy.random.PCG64"


class CsvFormatError(ValueError):
    """A dataset CSV file is malformed; the message names the offending line."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic mixture dataset: parameters, size, and seed."""

    true_params: GmmParams
    n_points: int
    seed: int

    def __post_init__(self) -> None:
        if int(self.n_points) < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "seed", int(self.seed))


def three_cluster_spec(n_points: int = 600, seed: int = 1) -> GeneratorSpec:
    """The benchmark dataset recipe: three equal-weight unit-covariance
    2-D clusters centered at (-3, 0), (0, 0), and (3, 0)."""
    params = GmmParams(
        weights=np.full(3, 1.0 / 3.0),
        means=np.array([[-3.0, 0.0], [0.0, 0.0], [3.0, 0.0]]),
        covariances=np.tile(np.eye(2), (3, 1, 1)),
    )
    return GeneratorSpec(true_params=params, n_points=n_points, seed=seed)


def sample_gmm(spec: GeneratorSpec) -> Dataset:
    """Draw a dataset from the mixture: labels first (one categorical block),
    then one (N, D) standard-normal block mapped through each component's
    Cholesky factor.  Deterministic given the spec seed."""
    rng = np.random.default_rng(spec.seed)
    params = spec.true_params
    labels = rng.choice(params.n_components, size=spec.n_points, p=params.weights)
    normals = rng.standard_normal((spec.n_points, params.dim))
    factors = np.linalg.cholesky(params.covariances)
    points = params.means[labels] + np.einsum("nij,nj->ni", factors[labels], normals)
    return Dataset(points=points, true_labels=labels, true_params=params)


def write_csv(data: Dataset, path) -> None:
    """Write points (and labels when present) as UTF-8 CSV, header x1..xD[,label]."""
    columns = [f"x{j + 1}" for j in range(data.dim)]
    if data.true_labels is not None:
        columns.append("label")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(",".join(columns) + "\n")
            for i in range(data.n):
                cells = [f"{v:.17g}" for v in data.points[i]]
                if data.true_labels is not None:
                    cells.append(str(int(data.true_labels[i])))
                handle.write(",".join(cells) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset CSV {path}: {exc}") from exc


def read_csv(path) -> Dataset:
    """Read a dataset CSV written by write_csv; errors name the bad line."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().split("\n")
    except OSError as exc:
        raise OSError(f"cannot read dataset CSV {path}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CsvFormatError("line 1: empty file")

    header = lines[0].split(",")
    has_label = header[-1] == "label"
    coord_names = header[:-1] if has_label else header
    expected = [f"x{j + 1}" for j in range(len(coord_names))]
    if not coord_names or coord_names != expected:
        raise CsvFormatError(f"line 1: expected header x1,...,xD[,label], got {lines[0]!r}")
    dim = len(coord_names)

    points = []
    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + (1 if has_label else 0):
            raise CsvFormatError(
                f"line {lineno}: expected {dim + (1 if has_label else 0)} cells, got {len(cells)}"
            )
        row = []
        for name, cell in zip(expected, cells):
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(f"line {lineno}: non-numeric cell {cell!r} in column {name}")
            if not np.isfinite(value):
                raise CsvFormatError(f"line {lineno}: non-finite value {cell!r} in column {name}")
            row.append(value)
        points.append(row)
        if has_label:
            try:
                labels.append(int(cells[-1]))
            except ValueError:
                raise CsvFormatError(f"line {lineno}: non-integer label {cells[-1]!r}")
    if not points:
        raise CsvFormatError("line 2: no data rows")
    return Dataset(
        points=np.array(points, dtype=float),
        true_labels=np.array(labels, dtype=int) if has_label else None,
    )


def params_to_dict(params: GmmParams) -> dict:
    return {
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "covariances": params.covariances.tolist(),
    }


def params_from_dict(doc: dict) -> GmmParams:
    return GmmParams(
        weights=np.array(doc["weights"], dtype=float),
        means=np.array(doc["means"], dtype=float),
        covariances=np.array(doc["covariances"], dtype=float),
    )


def schedule_to_dict(schedule: Schedule | None) -> dict | None:
    if schedule is None:
        return None
    return {
        "kind": schedule.kind,
        "init": schedule.init,
        "rate": schedule.rate,
        "target": schedule.target,
        "cutoff": schedule.cutoff,
    }


def schedule_from_dict(doc: dict | None) -> Schedule | None:
    if doc is None:
        return None
    return Schedule(
        kind=doc["kind"],
        init=doc["init"],
        rate=doc["rate"],
        target=doc["target"],
        cutoff=doc["cutoff"],
    )


def generator_spec_to_dict(spec: GeneratorSpec) -> dict:
    return {
        "n_points": spec.n_points,
        "seed": spec.seed,
        "true_params": params_to_dict(spec.true_params),
    }


def _anneal_key(algorithm: str) -> str | None:
    return {"DQAEM": "gamma", "DSAEM": "beta"}.get(algorithm)


def fit_result_to_dict(result: FitResult) -> dict:
    """Self-describing document for one fit: config, seed, trace, final state."""
    anneal_key = _anneal_key(result.algorithm)
    trace = []
    for row in result.trace:
        entry: dict = {"iteration": row.iteration}
        if anneal_key is not None:
            entry[anneal_key] = row.anneal
        entry["objective"] = row.objective
        entry["log_likelihood"] = row.log_likelihood
        trace.append(entry)
    config = result.config
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "fit_result",
        "algorithm": result.algorithm,
        "seed": config.seed,
        "prng": PRNG_ID,
        "config": {
            "algorithm": config.algorithm,
            "max_iters": config.max_iters,
            "rel_tol": config.rel_tol,
            "seed": config.seed,
            "schedule": schedule_to_dict(config.schedule),
            "coupling": None if config.coupling is None else np.asarray(config.coupling).tolist(),
        },
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "final_log_likelihood": result.final_log_likelihood,
        "final_params": params_to_dict(result.final_params),
        "trace": trace,
        "events": list(result.events),
    }


def fit_result_from_dict(doc: dict) -> FitResult:
    """Rebuild a FitResult from its JSON document (exact float round-trip)."""
    algorithm = doc["algorithm"]
    anneal_key = _anneal_key(algorithm)
    trace = tuple(
        TraceRow(
            iteration=entry["iteration"],
            anneal=entry[anneal_key] if anneal_key is not None else None,
            objective=entry["objective"],
            log_likelihood=entry["log_likelihood"],
        )
        for entry in doc["trace"]
    )
    cfg = doc["config"]
    config = FitConfig(
        algorithm=cfg["algorithm"],
        schedule=schedule_from_dict(cfg["schedule"]),
        max_iters=cfg["max_iters"],
        rel_tol=cfg["rel_tol"],
        seed=cfg["seed"],
        coupling=None if cfg["coupling"] is None else np.array(cfg["coupling"], dtype=float),
    )
    return FitResult(
        algorithm=algorithm,
        final_params=params_from_dict(doc["final_params"]),
        final_log_likelihood=doc["final_log_likelihood"],
        converged=doc["converged"],
        iterations_used=doc["iterations_used"],
        trace=trace,
        events=tuple(doc["events"]),
        config=config,
    )


def write_result_json(result, path) -> None:
    """Write a FitResult (or any report object exposing to_dict) as JSON."""
    if isinstance(result, FitResult):
        doc = fit_result_to_dict(result)
    elif hasattr(result, "to_dict"):
        doc = result.to_dict()
    else:
        raise TypeError(f"cannot serialize {type(result).__name__}")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(doc, handle, indent=2)
            handle.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write result JSON {path}: {exc}") from exc


def read_result_json(path) -> dict:
    """Load a result document written by write_result_json."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise OSError(f"cannot read result JSON {path}: {exc}") from exc
