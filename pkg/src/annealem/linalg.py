"""Small dense linear algebra: symmetric eigendecomposition, a Taylor
matrix-exponential reference, and stable log-sum-exp reductions.

The eigendecomposition is the engine of the quantum E step, which exponentiates
K x K symmetric matrices (K is the mixture size, not the sample size, so these
matrices are tiny).  The Taylor exponential exists as an independent check of
that spectral route and is never used by the estimators themselves.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

MAX_DIM = 64
SYMMETRY_TOL = 1e-12


class SpectralDecomp(NamedTuple):
    """Eigenvalues in ascending order and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise ValueError(f"matrix dimension {a.shape[0]} exceeds the supported {MAX_DIM}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    asym = np.abs(a - a.T).max() if a.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric: max asymmetry {asym:g}")
    return a


def sym_eig(a: np.ndarray) -> SpectralDecomp:
    """Decompose a small symmetric matrix into ascending eigenvalues and eigenvectors.

    The sign of each eigenvector is fixed so its first nonzero entry is
    nonnegative, which makes the output deterministic.
    """
    a = _check_symmetric(a)
    eigenvalues, eigenvectors = np.linalg.eigh(a)
    eigenvectors = eigenvectors.copy()
    for j in range(eigenvectors.shape[1]):
        col = eigenvectors[:, j]
        nonzero = np.nonzero(col)[0]
        if nonzero.size and col[nonzero[0]] < 0.0:
            eigenvectors[:, j] = -col
    return SpectralDecomp(eigenvalues, eigenvectors)


def sym_eig_batch(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a stack of symmetric matrices (..., K, K) in one call.

    Eigenvalues come back ascending along the last axis.  No sign convention is
    applied; callers that consume eigenvectors only through squared entries are
    insensitive to it.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim < 2 or stack.shape[-1] != stack.shape[-2]:
        raise ValueError(f"expected a stack of square matrices, got shape {stack.shape}")
    return np.linalg.eigh(stack)


def matexp_taylor_oracle(a: np.ndarray, terms: int = 30) -> np.ndarray:
    """Matrix exponential by scaling, truncated Taylor series, and squaring.

    Reference implementation used to cross-check the spectral route: scale a by
    2**s until the infinity norm is at most 1/2, sum `terms` series terms, then
    square the result s times.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    if terms < 1:
        raise ValueError(f"terms must be >= 1, got {terms}")

    norm = np.abs(a).sum(axis=1).max() if a.size else 0.0
    squarings = 0
    while norm > 0.5:
        norm /= 2.0
        squarings += 1
    scaled = a / (2.0 ** squarings)

    result = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for n in range(1, terms):
        term = term @ scaled / n
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def log_sum_exp(v: np.ndarray, axis: int | None = None):
    """log(sum(exp(v))) computed against overflow by shifting out the maximum.

    Exact for a single element.  Returns a float when axis is None, otherwise
    an array with that axis reduced.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    shift = np.max(v, axis=axis, keepdims=True)
    out = shift + np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
