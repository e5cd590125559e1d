"""E-step kernels and free-energy bookkeeping.

Three posteriors over component assignments share the energy vector h from
module model:

  classical   r_k = softmax(-h)_k                      (plain EM)
  tempered    r_k = softmax(-beta h)_k                 (simulated annealing)
  quantum     r_k = [exp(-A) / Tr exp(-A)]_kk          (quantum annealing)

where A = diag(h) + gamma * sigma_prime mixes the component basis through an
off-diagonal coupling.  The quantum kernel also yields the per-point log
partition functions log Z = log Tr exp(-A) and the free energy
F = -sum_i log Z_i, which the annealed fits drive downhill.

Everything works in log space: densities are never exponentiated before
shifting by the row maximum, so far-away points cannot underflow to zero rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import log_sum_exp, sym_eig_batch
from .model import Dataset, GmmParams, hamiltonian_diags

# Optional runtime validation of every responsibility matrix the kernels
# produce.  Off by default; the acceptance suite switches it on so whole
# benchmark runs are row-sum checked.
_validate_responsibilities = False
_validation_count = 0


def set_responsibility_validation(enabled: bool) -> None:
    """Toggle row-stochasticity checks on every kernel output."""
    global _validate_responsibilities
    _validate_responsibilities = bool(enabled)


def responsibility_validation_count() -> int:
    """How many responsibility matrices have been validated since import."""
    return _validation_count


def check_responsibilities(resp: np.ndarray, tol: float = 1e-10) -> None:
    """Raise if resp is not a row-stochastic matrix within tolerance."""
    resp = np.asarray(resp)
    if resp.ndim != 2:
        raise ValueError(f"responsibilities must be 2-D, got shape {resp.shape}")
    if resp.min() < -1e-12 or resp.max() > 1.0 + 1e-12:
        raise ValueError(
            f"responsibility entries outside [0, 1]: min {resp.min():g}, max {resp.max():g}"
        )
    row_err = np.abs(resp.sum(axis=1) - 1.0).max()
    if row_err > tol:
        raise ValueError(f"responsibility rows must sum to 1 within {tol:g}, max error {row_err:g}")


def _maybe_validate(resp: np.ndarray) -> None:
    global _validation_count
    if _validate_responsibilities:
        check_responsibilities(resp)
        _validation_count += 1


def uniform_coupling(k: int) -> np.ndarray:
    """The default coupling: every off-diagonal entry 1, zero diagonal."""
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    return np.ones((k, k)) - np.eye(k)


def _check_coupling(coupling: np.ndarray, k: int) -> np.ndarray:
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != (k, k):
        raise ValueError(f"coupling must be ({k}, {k}), got {coupling.shape}")
    if not np.isfinite(coupling).all():
        raise ValueError("coupling entries must be finite")
    if np.abs(coupling - coupling.T).max() > 1e-12:
        raise ValueError("coupling must be symmetric")
    if np.diagonal(coupling).any():
        raise ValueError("coupling diagonal must be exactly zero")
    if k > 1 and not coupling.any():
        # An all-zero coupling commutes with every projector and mixes nothing.
        raise ValueError("coupling must have at least one nonzero off-diagonal entry")
    return coupling


@dataclass(frozen=True)
class QuantumEStepResult:
    """Responsibilities plus the per-point log partitions and their free energy."""

    responsibilities: np.ndarray
    log_partition: np.ndarray
    free_energy: float


def _tempered_from_h(h: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Softmax of -beta*h per row; returns (responsibilities, per-row log partition)."""
    neg = -(beta * h)
    log_z = log_sum_exp(neg, axis=1)
    resp = np.exp(neg - log_z[:, None])
    return resp, log_z


def _quantum_from_h(
    h: np.ndarray, gamma: float, coupling: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of exp(-A)/Z per point for A = diag(h) + gamma*coupling.

    At gamma == 0 the matrix is diagonal and the softmax path is exact, so the
    spectral machinery is skipped entirely.
    """
    if gamma == 0.0:
        return _tempered_from_h(h, 1.0)
    n, k = h.shape
    a = np.broadcast_to(gamma * coupling, (n, k, k)).copy()
    idx = np.arange(k)
    a[:, idx, idx] += h
    eigenvalues, eigenvectors = sym_eig_batch(a)
    log_z = log_sum_exp(-eigenvalues, axis=1)
    boltzmann = np.exp(-eigenvalues - log_z[:, None])
    resp = np.einsum("nkj,nj->nk", eigenvectors * eigenvectors, boltzmann)
    return resp, log_z


def _posterior_matrices(
    h: np.ndarray, gamma: float, coupling: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Full K x K posterior matrices exp(-A)/Z per point, with log partitions."""
    n, k = h.shape
    a = np.broadcast_to(gamma * coupling, (n, k, k)).copy()
    idx = np.arange(k)
    a[:, idx, idx] += h
    eigenvalues, eigenvectors = sym_eig_batch(a)
    log_z = log_sum_exp(-eigenvalues, axis=1)
    boltzmann = np.exp(-eigenvalues - log_z[:, None])
    posterior = np.einsum("nkj,nj,nlj->nkl", eigenvectors, boltzmann, eigenvectors)
    return posterior, log_z


def classical_posterior(data: Dataset, params: GmmParams) -> np.ndarray:
    """Posterior component probabilities r[i][k] = softmax(-h(y_i))_k."""
    resp, _ = _tempered_from_h(hamiltonian_diags(data, params), 1.0)
    _maybe_validate(resp)
    return resp


def tempered_posterior(data: Dataset, params: GmmParams, beta: float) -> np.ndarray:
    """Annealed posterior r[i][k] proportional to (pi_k g_k)^beta, beta > 0."""
    if not beta > 0.0:
        raise ValueError(f"beta must be > 0, got {beta}")
    resp, _ = _tempered_from_h(hamiltonian_diags(data, params), beta)
    _maybe_validate(resp)
    return resp


def quantum_estep(
    data: Dataset,
    params: GmmParams,
    gamma: float,
    coupling: np.ndarray | None = None,
) -> QuantumEStepResult:
    """Quantum E step: responsibilities, log partitions, and the free energy.

    Per point, A = diag(h) + gamma*coupling is exponentiated spectrally;
    responsibilities are the diagonal of exp(-A)/Tr exp(-A), and the free
    energy is -sum_i log Tr exp(-A_i).
    """
    if not gamma >= 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    k = params.n_components
    coupling = uniform_coupling(k) if coupling is None else _check_coupling(coupling, k)
    h = hamiltonian_diags(data, params)
    resp, log_z = _quantum_from_h(h, gamma, coupling)
    _maybe_validate(resp)
    return QuantumEStepResult(resp, log_z, float(-np.sum(log_z)))


def q_function(data: Dataset, resp: np.ndarray, params: GmmParams) -> float:
    """Expected complete-data log joint sum_ik r[i][k] log(pi_k g_k(y_i))."""
    resp = np.asarray(resp, dtype=float)
    h = hamiltonian_diags(data, params)
    if resp.shape != h.shape:
        raise ValueError(f"responsibilities shape {resp.shape} does not match {h.shape}")
    return float(-np.einsum("nk,nk->", resp, h))


def u_function(
    data: Dataset,
    params_new: GmmParams,
    params_old: GmmParams,
    gamma: float,
    coupling: np.ndarray | None = None,
) -> float:
    """Annealed analogue of the Q function: sum_i Tr[P_i(params_old) (-A_i(params_new))].

    P_i is the full posterior matrix exp(-A_i)/Z_i at the old parameters; the
    new parameters enter only through A_new = diag(h_new) + gamma*coupling.
    The M step maximizes this over params_new.
    """
    if not gamma >= 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    k = params_old.n_components
    coupling = uniform_coupling(k) if coupling is None else _check_coupling(coupling, k)
    h_old = hamiltonian_diags(data, params_old)
    h_new = hamiltonian_diags(data, params_new)
    posterior, _ = _posterior_matrices(h_old, gamma, coupling)
    idx = np.arange(k)
    diag_terms = np.einsum("nk,nk->", posterior[:, idx, idx], h_new)
    coupling_terms = gamma * np.einsum("nkl,kl->", posterior, coupling)
    return float(-(diag_terms + coupling_terms))


def entropy_term(
    data: Dataset,
    params_a: GmmParams,
    params_b: GmmParams,
    gamma: float,
    coupling: np.ndarray | None = None,
) -> float:
    """Cross entropy sum_i Tr[P_i(params_b) log P_i(params_a)].

    Because P = exp(-A)/Z, the matrix logarithm is exactly
    log P = -A - (log Z) I, so the trace needs no further spectral work beyond
    the posteriors themselves.  Diagnostic only; it feeds the free-energy
    decomposition and monotonicity tests.
    """
    if not gamma >= 0.0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    k = params_a.n_components
    coupling = uniform_coupling(k) if coupling is None else _check_coupling(coupling, k)
    h_a = hamiltonian_diags(data, params_a)
    h_b = hamiltonian_diags(data, params_b)
    _, log_z_a = _posterior_matrices(h_a, gamma, coupling)
    posterior_b, _ = _posterior_matrices(h_b, gamma, coupling)
    idx = np.arange(k)
    diag_b = posterior_b[:, idx, idx]
    trace_b_a = np.einsum("nk,nk->n", diag_b, h_a) + gamma * np.einsum(
        "nkl,kl->n", posterior_b, coupling
    )
    traces_b = diag_b.sum(axis=1)
    return float(-np.sum(trace_b_a + log_z_a * traces_b))
