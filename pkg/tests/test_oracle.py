import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from npasa import DomainError, EvaluationError, InfeasibleError, Polyhedron, minimize_em1_over_eta
from npasa.oracle import (DenseQp, brute_force_qp, em1_in_eta, enumerate_em1_eta,
                          finite_diff_gradient, finite_diff_jacobian)

from helpers import quadratic_problem, random_polyhedron, scalar_problem

INF = np.inf


class TestBruteForceQp:

    def test_projection_onto_line(self):
        poly = Polyhedron([[1.0, 1.0]], [1.0], [1.0], [-INF, -INF], [INF, INF])
        x, mu = brute_force_qp(DenseQp.projection(poly, [2.0, 2.0]))
        assert_allclose(x, [0.5, 0.5])
        assert_allclose(mu, [0.0, 1.5, 0, 0, 0, 0])

    def test_lin_eq_box(self):
        poly = Polyhedron([[1.0, 1.0]], [2.0], [2.0], [0.0, 0.0], [INF, INF])
        x, _ = brute_force_qp(DenseQp(np.eye(2), np.zeros(2), poly))
        assert_allclose(x, [1.0, 1.0])

    def test_interior_minimum(self):
        x, mu = brute_force_qp(DenseQp(2 * np.eye(2), [-1.0, 0.4], Polyhedron.box([-1, -1], [1, 1])))
        assert_allclose(x, [0.5, -0.2])
        assert_array_equal(mu, np.zeros(4))

    def test_redundant_equalities(self):
        A = [[1.0, 1.0], [2.0, 2.0]]
        poly = Polyhedron(A, [1.0, 2.0], [1.0, 2.0], [-INF, -INF], [INF, INF])
        x, _ = brute_force_qp(DenseQp.projection(poly, [0.0, 0.0]))
        assert_allclose(x, [0.5, 0.5])

    def test_limits(self):
        with pytest.raises(DomainError):
            brute_force_qp(DenseQp(np.eye(11), np.zeros(11), Polyhedron.free(11)))
        with pytest.raises(DomainError):
            DenseQp([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0], Polyhedron.free(2))

    def test_infeasible(self):
        poly = Polyhedron([[1.0, 1.0]], [5.0], [5.0], [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(InfeasibleError):
            brute_force_qp(DenseQp.projection(poly, [0.0, 0.0]))


class TestEnumerateEm1:

    def test_scalar_pieces(self):
        p = scalar_problem(1.0, omega=Polyhedron.box([-1.0], [INF]))
        eta, value = enumerate_em1_eta(p, [0.0], np.zeros(0))
        assert_allclose(eta, [0.5, 0.0], atol=1e-12)
        assert value == pytest.approx(0.5)
        assert em1_in_eta(p, [0.0], np.zeros(0), [1.0, 0.0]) == pytest.approx(1.0)

    def test_stationary(self):
        p = scalar_problem(0.0, omega=Polyhedron.box([-1.0], [1.0]))
        eta, value = enumerate_em1_eta(p, [0.0], np.zeros(0))
        assert_array_equal(eta, [0.0, 0.0])
        assert value == 0

    def test_limit(self):
        poly = Polyhedron.box(-np.ones(7), np.ones(7))
        p = quadratic_problem(poly, np.eye(7), np.ones(7))
        with pytest.raises(DomainError):
            enumerate_em1_eta(p, np.zeros(7), np.zeros(0))

    def test_agrees_with_subsolve(self):
        checked = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n, ell = int(rng.integers(1, 3)), int(rng.integers(0, 2))
            poly, z = random_polyhedron(rng, n, int(rng.integers(0, 2)), p_eq=0.0)
            if poly.finite_mask.sum() > 6:
                continue
            p = quadratic_problem(poly, np.eye(n), rng.normal(size=n), ell, rng)
            nu = rng.normal(size=ell)
            _, ref = enumerate_em1_eta(p, z, nu)
            _, value = minimize_em1_over_eta(p, z, nu)
            assert value == pytest.approx(ref, abs=1e-8)
            checked += 1
        assert checked >= 150


class TestFiniteDifferences:

    def test_gradient(self):
        assert_allclose(finite_diff_gradient(lambda x: 0.5 * x @ x, np.array([1.0, 2.0])), [1, 2],
                        atol=1e-7)

    def test_jacobian(self):
        J = finite_diff_jacobian(lambda x: np.array([x @ x - 2.0]), np.array([1.0, 1.0]))
        assert J.shape == (1, 2)
        assert_allclose(J, [[2.0, 2.0]], atol=1e-6)

    @pytest.mark.parametrize("step", [1e-9, 1e-3])
    def test_step_range(self, step):
        with pytest.raises(DomainError):
            finite_diff_gradient(lambda x: x.sum(), np.zeros(1), step)

    def test_nan(self):
        with pytest.raises(EvaluationError):
            finite_diff_gradient(lambda x: np.nan if x[0] < 0 else x[0], np.zeros(1))
