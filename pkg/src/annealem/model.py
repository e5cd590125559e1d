"""Gaussian mixture parameters, datasets, log-densities, and per-point energy levels.

The energy ("Hamiltonian") representation drives everything downstream: for a
point y and mixture parameters theta, the K-vector

    h_k = -log(pi_k * g(y; mu_k, Sigma_k))

collects the component negative log joint densities.  Classical E-steps
softmax -h; the annealed E-steps reweight or couple the same vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# Ridge added to every covariance produced by an M step, and the smallest
# eigenvalue estimator-produced covariances are allowed to have.
EPSILON_COV = 1e-6

# Mixture weights produced by an M step are clamped here, then renormalized,
# so that log(pi_k) stays finite.
WEIGHT_FLOOR = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


class InvalidParameterError(ValueError):
    """Mixture parameters or their inputs violate a structural invariant."""


@dataclass(frozen=True)
class GmmParams:
    """Parameters of a K-component Gaussian mixture in D dimensions.

    weights: (K,) positive, summing to 1 within 1e-12.
    means: (K, D).
    covariances: (K, D, D), each symmetric positive definite.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=float)
        means = np.array(self.means, dtype=float)
        covariances = np.array(self.covariances, dtype=float)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)

        if weights.ndim != 1 or means.ndim != 2 or covariances.ndim != 3:
            raise InvalidParameterError(
                "expected weights (K,), means (K, D), covariances (K, D, D); got "
                f"{weights.shape}, {means.shape}, {covariances.shape}"
            )
        k, d = means.shape
        if k < 1 or d < 1:
            raise InvalidParameterError(f"need K >= 1 and D >= 1, got K={k}, D={d}")
        if weights.shape != (k,) or covariances.shape != (k, d, d):
            raise InvalidParameterError(
                f"inconsistent shapes: weights {weights.shape}, means {means.shape}, "
                f"covariances {covariances.shape}"
            )
        if not (np.isfinite(weights).all() and np.isfinite(means).all()
                and np.isfinite(covariances).all()):
            raise InvalidParameterError("parameters must be finite")
        if (weights <= 0.0).any():
            raise InvalidParameterError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(
                f"weights must sum to 1 within 1e-12, got {weights.sum()!r}"
            )
        asym = np.abs(covariances - covariances.transpose(0, 2, 1)).max()
        if asym > 1e-12:
            raise InvalidParameterError(f"covariances must be symmetric, asymmetry {asym:g}")
        try:
            np.linalg.cholesky(covariances)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("covariances must be positive definite") from exc

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def permuted(self, perm: tuple[int, ...]) -> "GmmParams":
        """Relabel components: component k of the result is component perm[k] of self."""
        idx = list(perm)
        if sorted(idx) != list(range(self.n_components)):
            raise InvalidParameterError(f"not a permutation of 0..K-1: {perm}")
        return GmmParams(self.weights[idx], self.means[idx], self.covariances[idx])


@dataclass(frozen=True)
class Dataset:
    """Observed points, optionally with the labels and parameters that generated them."""

    points: np.ndarray
    true_labels: np.ndarray | None = None
    true_params: GmmParams | None = None

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float)
        object.__setattr__(self, "points", points)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidParameterError(f"points must be (N, D) with N, D >= 1, got {points.shape}")
        if not np.isfinite(points).all():
            raise InvalidParameterError("points must be finite")
        if self.true_labels is not None:
            labels = np.array(self.true_labels, dtype=int)
            object.__setattr__(self, "true_labels", labels)
            if labels.shape != (points.shape[0],):
                raise InvalidParameterError(
                    f"true_labels must be ({points.shape[0]},), got {labels.shape}"
                )
        if self.true_params is not None and self.true_params.dim != points.shape[1]:
            raise InvalidParameterError(
                f"true_params dimension {self.true_params.dim} != data dimension {points.shape[1]}"
            )

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _chol_lower(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError("covariance must be positive definite") from exc


def _log_density_batch(points: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Log N(y; mu, sigma) for each row y of points, via one Cholesky factorization."""
    lower = _chol_lower(sigma)
    diff = points - mu
    # z = L^-1 (y - mu), so the quadratic form is |z|^2 and log|Sigma| = 2 sum log L_ii.
    z = solve_triangular(lower, diff.T, lower=True, check_finite=False)
    quad = np.sum(z * z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diagonal(lower)))
    d = points.shape[1]
    return -0.5 * (d * _LOG_2PI + log_det + quad)


def log_gaussian(y: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
    """Log-density of a single point under N(mu, sigma)."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if y.shape != mu.shape or y.ndim != 1 or sigma.shape != (y.size, y.size):
        raise InvalidParameterError(
            f"shape mismatch: y {y.shape}, mu {mu.shape}, sigma {sigma.shape}"
        )
    return float(_log_density_batch(y[None, :], mu, sigma)[0])


def hamiltonian_diags(data: Dataset, params: GmmParams) -> np.ndarray:
    """Energy levels for every point: (N, K) array with entry -log(pi_k g_k(y_i))."""
    if data.dim != params.dim:
        raise InvalidParameterError(
            f"data dimension {data.dim} != parameter dimension {params.dim}"
        )
    n, k = data.n, params.n_components
    out = np.empty((n, k))
    log_w = np.log(params.weights)
    for j in range(k):
        out[:, j] = -log_w[j] - _log_density_batch(
            data.points, params.means[j], params.covariances[j]
        )
    return out


def hamiltonian_diag(y: np.ndarray, params: GmmParams) -> np.ndarray:
    """Energy levels of one point: K-vector h with h_k = -log(pi_k g(y; mu_k, Sigma_k))."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != params.dim:
        raise InvalidParameterError(f"y must be ({params.dim},), got {y.shape}")
    return hamiltonian_diags(Dataset(y[None, :]), params)[0]


def log_likelihood(data: Dataset, params: GmmParams) -> float:
    """Total log-likelihood sum_i log sum_k pi_k g(y_i; mu_k, Sigma_k)."""
    from .linalg import log_sum_exp

    h = hamiltonian_diags(data, params)
    return float(np.sum(log_sum_exp(-h, axis=1)))
