"""Classical, tempered, and spectral E steps plus the objective-side identities."""

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose, assert_array_equal

from annealem import (
    Dataset,
    GmmParams,
    QuantumEStepResult,
    check_responsibilities,
    classical_posterior,
    entropy_term,
    hamiltonian_diags,
    log_gaussian,
    log_likelihood,
    m_step,
    matexp_taylor_oracle,
    q_function,
    quantum_estep,
    random_init,
    responsibility_validation_count,
    set_responsibility_validation,
    sym_eig,
    tempered_posterior,
    three_cluster_spec,
    u_function,
    uniform_coupling,
)
from annealem.posteriors import _quantum_from_h

THREE = three_cluster_spec().true_params


def small_dataset(seed=0, n=40):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-4.0, 4.0, size=(n, 2)))


def equal_pair_params(mu=(0.0, 0.0)):
    """Two identical components: every point has exactly equal energy levels."""
    return GmmParams([0.5, 0.5], [list(mu), list(mu)], np.tile(np.eye(2), (2, 1, 1)))


def taylor_posteriors(h, gamma, coupling):
    """Independent posterior route: Taylor matrix exponential, then normalize."""
    n, k = h.shape
    resp = np.empty((n, k))
    mats = np.empty((n, k, k))
    log_z = np.empty(n)
    for i in range(n):
        a = np.diag(h[i]) + gamma * coupling
        shift = h[i].min()
        exp_a = matexp_taylor_oracle(-(a - shift * np.eye(k)))
        z = np.trace(exp_a)
        mats[i] = exp_a / z
        resp[i] = np.diag(exp_a) / z
        log_z[i] = np.log(z) - shift
    return resp, log_z, mats


class TestUniformCoupling:
    def test_all_ones_off_diagonal(self):
        assert_array_equal(uniform_coupling(3), np.ones((3, 3)) - np.eye(3))

    def test_single_component_is_all_zero(self):
        assert_array_equal(uniform_coupling(1), np.zeros((1, 1)))


class TestClassicalPosterior:
    def test_single_component_gives_ones(self):
        data = small_dataset()
        params = GmmParams([1.0], [[0.0, 0.0]], [np.eye(2)])
        assert_array_equal(classical_posterior(data, params), np.ones((data.n, 1)))

    def test_equidistant_point_splits_evenly(self):
        params = GmmParams(
            [0.5, 0.5], [[-1.0, 0.0], [1.0, 0.0]], np.tile(np.eye(2), (2, 1, 1))
        )
        resp = classical_posterior(Dataset([[0.0, 2.5]]), params)
        assert_allclose(resp, [[0.5, 0.5]], atol=1e-15)

    def test_matches_direct_bayes_oracle(self):
        resp = classical_posterior(Dataset([[3.0, 0.0]]), THREE)[0]
        # Frozen direct-Bayes oracle values at y = (3, 0).
        assert_allclose(
            resp,
            [1.5062648604108988e-08, 0.010986942465100723, 0.9890130424722506],
            rtol=1e-12,
        )
        dens = np.array(
            [
                THREE.weights[k]
                * np.exp(log_gaussian([3.0, 0.0], THREE.means[k], THREE.covariances[k]))
                for k in range(3)
            ]
        )
        assert_allclose(resp, dens / dens.sum(), rtol=1e-12)

    def test_rows_are_stochastic_under_extreme_separation(self):
        far = GmmParams(
            [0.5, 0.5], [[-200.0, 0.0], [200.0, 0.0]], np.tile(np.eye(2), (2, 1, 1))
        )
        resp = classical_posterior(small_dataset(), far)
        check_responsibilities(resp)
        assert np.isfinite(resp).all()


class TestTemperedPosterior:
    def test_beta_one_equals_classical_exactly(self):
        data = small_dataset(3)
        assert_array_equal(
            tempered_posterior(data, THREE, 1.0), classical_posterior(data, THREE)
        )

    def test_tiny_beta_flattens_to_uniform(self):
        resp = tempered_posterior(small_dataset(4), THREE, 1e-12)
        assert np.abs(resp - 1.0 / 3.0).max() <= 1e-9

    def test_matches_power_oracle(self):
        resp = tempered_posterior(Dataset([[1.0, -0.5]]), THREE, 0.7)[0]
        # Frozen power-law oracle values at y = (1, -0.5), beta = 0.7.
        assert_allclose(
            resp,
            [0.003872177867474759, 0.7379064870127601, 0.25822133511976525],
            rtol=1e-12,
        )
        dens = np.array(
            [
                THREE.weights[k]
                * np.exp(log_gaussian([1.0, -0.5], THREE.means[k], THREE.covariances[k]))
                for k in range(3)
            ]
        )
        powered = dens**0.7
        assert_allclose(resp, powered / powered.sum(), rtol=1e-12)

    def test_rejects_nonpositive_beta(self):
        data = small_dataset()
        for beta in (0.0, -0.5):
            with pytest.raises(ValueError):
                tempered_posterior(data, THREE, beta)


class TestQuantumEStep:
    def test_zero_coupling_strength_reduces_to_classical(self):
        data = small_dataset(5)
        result = quantum_estep(data, THREE, 0.0)
        assert np.abs(result.responsibilities - classical_posterior(data, THREE)).max() <= 1e-12
        assert result.free_energy == pytest.approx(-log_likelihood(data, THREE), rel=1e-10)

    def test_equal_levels_split_evenly_with_closed_form_partition(self):
        params = equal_pair_params((0.4, -0.2))
        data = Dataset([[0.4, -0.2], [3.0, 1.0], [-2.0, 5.0]])
        c = hamiltonian_diags(data, params)[:, 0]
        for gamma in (0.3, 1.0, 2.5):
            result = quantum_estep(data, params, gamma)
            assert_allclose(result.responsibilities, np.full((3, 2), 0.5), atol=1e-12)
            assert_allclose(result.log_partition, -c + np.log(2.0 * np.cosh(gamma)), rtol=1e-12)

    def test_kernel_matches_taylor_oracle_row(self):
        h = np.array([[0.5, 1.0, 2.0]])
        coupling = uniform_coupling(3)
        resp, log_z = _quantum_from_h(h, 1.0, coupling)
        # Frozen Taylor-oracle values for this row.
        assert_allclose(
            resp[0], [0.5057716506960487, 0.3385606141097559, 0.1556677351941954], rtol=1e-10
        )
        assert log_z[0] == pytest.approx(0.6916071583067649, rel=1e-12)
        oracle_resp, oracle_log_z, _ = taylor_posteriors(h, 1.0, coupling)
        assert np.abs(resp - oracle_resp).max() <= 1e-8
        assert np.abs(log_z - oracle_log_z).max() <= 1e-8

    def test_kernel_matches_taylor_oracle_bulk(self):
        rng = np.random.default_rng(77)
        coupling = uniform_coupling(3)
        for _ in range(50):
            h = rng.uniform(-5.0, 5.0, size=(4, 3))
            gamma = rng.uniform(0.0, 2.0)
            resp, log_z = _quantum_from_h(h, gamma, coupling)
            oracle_resp, oracle_log_z, _ = taylor_posteriors(h, gamma, coupling)
            assert np.abs(resp - oracle_resp).max() <= 1e-8
            assert np.abs(log_z - oracle_log_z).max() <= 1e-8

    def test_public_surface_matches_taylor_oracle(self):
        data = small_dataset(10, n=15)
        coupling = uniform_coupling(3)
        result = quantum_estep(data, THREE, 0.8, coupling)
        h = hamiltonian_diags(data, THREE)
        oracle_resp, oracle_log_z, _ = taylor_posteriors(h, 0.8, coupling)
        assert np.abs(result.responsibilities - oracle_resp).max() <= 1e-8
        assert result.free_energy == pytest.approx(-oracle_log_z.sum(), rel=1e-10)

    def test_free_energy_is_negated_partition_sum(self):
        result = quantum_estep(small_dataset(6), THREE, 1.3)
        assert result.free_energy == pytest.approx(-result.log_partition.sum(), rel=1e-12)
        assert isinstance(result, QuantumEStepResult)

    def test_small_gamma_stays_near_classical(self):
        data = small_dataset(11)
        resp = quantum_estep(data, THREE, 1e-8).responsibilities
        assert np.abs(resp - classical_posterior(data, THREE)).max() <= 1e-6

    def test_rows_are_stochastic_across_gamma(self):
        data = small_dataset(12)
        for gamma in (0.0, 0.05, 0.5, 2.0):
            check_responsibilities(quantum_estep(data, THREE, gamma).responsibilities)

    def test_permutation_equivariance(self):
        data = small_dataset(13)
        perm = (2, 0, 1)
        base = quantum_estep(data, THREE, 0.7).responsibilities
        permuted = quantum_estep(data, THREE.permuted(perm), 0.7).responsibilities
        assert np.abs(permuted - base[:, perm]).max() <= 1e-10

    def test_rejects_negative_gamma(self):
        with pytest.raises(ValueError):
            quantum_estep(small_dataset(), THREE, -0.1)

    def test_coupling_validation(self):
        data = small_dataset()
        with pytest.raises(ValueError):
            quantum_estep(data, THREE, 1.0, np.ones((2, 2)))
        asym = uniform_coupling(3)
        asym[0, 1] = 2.0
        with pytest.raises(ValueError):
            quantum_estep(data, THREE, 1.0, asym)
        diag = uniform_coupling(3) + np.eye(3)
        with pytest.raises(ValueError):
            quantum_estep(data, THREE, 1.0, diag)
        with pytest.raises(ValueError):
            quantum_estep(data, THREE, 1.0, np.zeros((3, 3)))

    def test_single_component_allows_zero_coupling(self):
        params = GmmParams([1.0], [[0.0, 0.0]], [np.eye(2)])
        result = quantum_estep(small_dataset(), params, 1.0)
        assert_allclose(result.responsibilities, 1.0, atol=1e-12)


class TestPermutationEquivariance:
    def test_classical_and_tempered(self):
        data = small_dataset(14)
        perm = (1, 2, 0)
        base_c = classical_posterior(data, THREE)
        base_t = tempered_posterior(data, THREE, 0.6)
        assert np.abs(classical_posterior(data, THREE.permuted(perm)) - base_c[:, perm]).max() <= 1e-12
        assert np.abs(tempered_posterior(data, THREE.permuted(perm), 0.6) - base_t[:, perm]).max() <= 1e-12


class TestQFunction:
    def test_single_component_equals_log_likelihood(self):
        data = small_dataset(2)
        params = GmmParams([1.0], [[0.5, 0.5]], [np.eye(2)])
        resp = np.ones((data.n, 1))
        assert q_function(data, resp, params) == pytest.approx(
            log_likelihood(data, params), rel=1e-12
        )

    def test_one_hot_assignment_sums_component_log_joints(self):
        data = Dataset([[-3.0, 0.0], [0.0, 0.0], [3.0, 0.0]])
        resp = np.eye(3)
        expected = sum(
            np.log(THREE.weights[k])
            + log_gaussian(data.points[k], THREE.means[k], THREE.covariances[k])
            for k in range(3)
        )
        assert q_function(data, resp, THREE) == pytest.approx(expected, rel=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(6, 2))
        resp = rng.random((6, 3))
        resp /= resp.sum(axis=1, keepdims=True)
        tiny = GmmParams(
            [0.5, 0.3, 0.2],
            [[-1.0, 0.0], [0.5, 0.5], [2.0, -1.0]],
            [np.eye(2), np.diag([2.0, 0.5]), [[1.0, 0.3], [0.3, 1.0]]],
        )
        data = Dataset(pts)
        value = q_function(data, resp, tiny)
        # Frozen double-loop oracle value for this instance.
        assert value == pytest.approx(-28.863787233048267, rel=1e-12)
        oracle = sum(
            resp[i, k]
            * (np.log(tiny.weights[k]) + log_gaussian(pts[i], tiny.means[k], tiny.covariances[k]))
            for i in range(6)
            for k in range(3)
        )
        assert value == pytest.approx(oracle, rel=1e-10)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            q_function(small_dataset(), np.ones((40, 2)), THREE)


class TestUFunction:
    def test_zero_gamma_matches_q_function_at_same_params(self):
        data = small_dataset(20)
        resp = classical_posterior(data, THREE)
        assert u_function(data, THREE, THREE, 0.0) == pytest.approx(
            q_function(data, resp, THREE), rel=1e-12
        )

    def test_equal_levels_closed_form(self):
        params = equal_pair_params((0.1, 0.9))
        data = Dataset([[0.1, 0.9], [2.0, -1.0], [-3.0, 0.5]])
        c = hamiltonian_diags(data, params)[:, 0]
        for gamma in (0.4, 1.0, 2.0):
            expected = float(np.sum(gamma * np.tanh(gamma) - c))
            assert u_function(data, params, params, gamma) == pytest.approx(expected, rel=1e-10)

    def test_matches_taylor_oracle(self):
        data = small_dataset(21, n=10)
        old = random_init(data, 3, 0)
        new = random_init(data, 3, 1)
        coupling = uniform_coupling(3)
        gamma = 0.9
        h_old = hamiltonian_diags(data, old)
        h_new = hamiltonian_diags(data, new)
        _, _, mats = taylor_posteriors(h_old, gamma, coupling)
        oracle = sum(
            -np.trace(mats[i] @ (np.diag(h_new[i]) + gamma * coupling)) for i in range(data.n)
        )
        assert u_function(data, new, old, gamma, coupling) == pytest.approx(oracle, abs=1e-8)

    def test_m_step_maximizes_over_new_params(self):
        data = small_dataset(22, n=60)
        old = random_init(data, 3, 5)
        gamma = 0.8
        resp = quantum_estep(data, old, gamma).responsibilities
        best = m_step(data, resp)
        u_best = u_function(data, best, old, gamma)
        for trial in range(10):
            contender = random_init(data, 3, 100 + trial)
            assert u_function(data, contender, old, gamma) <= u_best + 1e-9 * (1.0 + abs(u_best))


class TestEntropyTerm:
    def test_single_component_zero_gamma_vanishes(self):
        data = small_dataset(30)
        params = GmmParams([1.0], [[0.0, 0.0]], [np.eye(2)])
        assert entropy_term(data, params, params, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_same_params_equals_spectral_entropy(self):
        data = small_dataset(31, n=12)
        coupling = uniform_coupling(3)
        gamma = 0.7
        h = hamiltonian_diags(data, THREE)
        expected = 0.0
        for i in range(data.n):
            lam, _ = sym_eig(np.diag(h[i]) + gamma * coupling)
            w = np.exp(-(lam - lam.min()))
            p = w / w.sum()
            expected += float(np.sum(p * np.log(p)))
        assert entropy_term(data, THREE, THREE, gamma, coupling) == pytest.approx(
            expected, rel=1e-10
        )

    def test_cross_entropy_matches_matrix_log_oracle(self):
        data = small_dataset(32, n=8)
        a = random_init(data, 3, 2)
        b = random_init(data, 3, 3)
        coupling = uniform_coupling(3)
        gamma = 0.6
        h_a = hamiltonian_diags(data, a)
        h_b = hamiltonian_diags(data, b)
        _, _, mats_a = taylor_posteriors(h_a, gamma, coupling)
        _, _, mats_b = taylor_posteriors(h_b, gamma, coupling)
        oracle = sum(
            np.trace(mats_b[i] @ scipy.linalg.logm(mats_a[i])).real for i in range(data.n)
        )
        assert entropy_term(data, a, b, gamma, coupling) == pytest.approx(oracle, abs=1e-7)

    def test_free_energy_decomposition(self):
        data = small_dataset(33, n=25)
        coupling = uniform_coupling(3)
        for seed, gamma in ((0, 0.3), (1, 0.8), (2, 1.5)):
            params = random_init(data, 3, seed)
            free_energy = quantum_estep(data, params, gamma, coupling).free_energy
            decomposed = -u_function(data, params, params, gamma, coupling) + entropy_term(
                data, params, params, gamma, coupling
            )
            assert free_energy == pytest.approx(decomposed, rel=1e-8)


class TestFixedCouplingMonotonicity:
    def test_free_energy_never_increases_across_update(self):
        spec = three_cluster_spec(n_points=60, seed=2)
        from annealem import sample_gmm

        data = sample_gmm(spec)
        for instance in range(30):
            gamma = (0.2, 0.5, 1.0)[instance % 3]
            params = random_init(data, 3, instance)
            before = quantum_estep(data, params, gamma)
            updated = m_step(data, before.responsibilities)
            after = quantum_estep(data, updated, gamma)
            slack = 1e-9 * (1.0 + abs(before.free_energy))
            assert after.free_energy <= before.free_energy + slack


class TestResponsibilityValidation:
    def test_check_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            check_responsibilities(np.array([[0.6, 0.6]]))
        with pytest.raises(ValueError):
            check_responsibilities(np.array([[1.2, -0.2]]))
        check_responsibilities(np.array([[0.25, 0.75]]))

    def test_validation_flag_counts_kernel_calls(self):
        data = small_dataset(40)
        set_responsibility_validation(True)
        try:
            start = responsibility_validation_count()
            classical_posterior(data, THREE)
            tempered_posterior(data, THREE, 0.5)
            quantum_estep(data, THREE, 0.9)
            assert responsibility_validation_count() == start + 3
        finally:
            set_responsibility_validation(False)
