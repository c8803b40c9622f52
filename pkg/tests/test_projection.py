import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from npasa import InfeasibleError, Polyhedron, is_feasible, mu_of_x, project, recover_multipliers
from npasa.oracle import DenseQp, brute_force_qp

from helpers import quadratic_problem, random_polyhedron

INF = np.inf


def licq_at(poly, y, tol=1e-9):
    """True when the active rows of ``[A; I]`` at ``y`` are linearly independent."""
    N = np.vstack([poly.A, np.eye(poly.n)])
    lo = np.concatenate([poly.row_lo, poly.box_lo])
    hi = np.concatenate([poly.row_hi, poly.box_hi])
    v = N @ y
    active = (np.abs(v - lo) <= tol) | (np.abs(v - hi) <= tol)
    W = N[active]
    return W.shape[0] == 0 or np.linalg.matrix_rank(W) == W.shape[0]


class TestProject:

    def test_single_equality_row(self):
        poly = Polyhedron([[1.0, 1.0]], [1.0], [1.0], [-INF, -INF], [INF, INF])
        res = project(poly, [2.0, 2.0])
        assert_allclose(res.y_star, [0.5, 0.5], atol=1e-14)
        assert_allclose(res.pi_star, [-1.5], atol=1e-14)
        assert_allclose(res.gamma1, [0.0])
        assert_allclose(res.gamma2, [1.5])
        assert_array_equal(res.upsilon1, [0, 0])
        assert_array_equal(res.upsilon2, [0, 0])

    def test_box_clamp(self):
        res = project(Polyhedron.box([0.0, 0.0], [1.0, 1.0]), [-0.5, 0.3])
        assert_array_equal(res.y_star, [0.0, 0.3])
        assert res.pi_star.size == 0
        assert_allclose(res.upsilon1, [0.5, 0.0])
        assert_array_equal(res.upsilon2, [0, 0])

    def test_point_inside(self):
        poly = Polyhedron([[1.0, -1.0]], [-1.0], [1.0], [0.0, 0.0], [2.0, 2.0])
        res = project(poly, [0.5, 0.7])
        assert_allclose(res.y_star, [0.5, 0.7])
        assert_array_equal(res.mu_stacked, np.zeros(poly.m))

    def test_empty_polyhedron(self):
        poly = Polyhedron([[1.0, 1.0]], [5.0], [5.0], [0.0, 0.0], [1.0, 1.0])
        with pytest.raises(InfeasibleError):
            project(poly, [0.0, 0.0])

    @given(st.integers(1, 6), st.integers(0, 3), st.integers(0, 2 ** 32 - 1))
    def test_matches_oracle(self, n, m_rows, seed):
        rng = np.random.default_rng(seed)
        poly, _ = random_polyhedron(rng, n, m_rows)
        c = rng.normal(scale=2.0, size=n)
        res = project(poly, c)
        y, mu = brute_force_qp(DenseQp.projection(poly, c))
        assert_allclose(res.y_star, y, atol=1e-8)
        assert res.kkt_residual <= 1e-8
        assert is_feasible(poly, res.y_star, 1e-8)
        assert np.all(res.gamma1 * res.gamma2 == 0)
        if licq_at(poly, y):
            assert_allclose(res.mu_stacked, mu, atol=1e-6)

    @given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 2 ** 32 - 1))
    def test_idempotent_and_nonexpansive(self, n, m_rows, seed):
        rng = np.random.default_rng(seed)
        poly, _ = random_polyhedron(rng, n, m_rows)
        c1, c2 = rng.normal(scale=2.0, size=(2, n))
        y1 = project(poly, c1).y_star
        y2 = project(poly, c2).y_star
        assert_allclose(project(poly, y1).y_star, y1, atol=1e-10)
        assert np.linalg.norm(y1 - y2) <= np.linalg.norm(c1 - c2) + 1e-10


class TestRecoverMultipliers:

    def test_box_example(self):
        poly = Polyhedron.box([0.0], [1.0])
        g1, g2, u1, u2, mu = recover_multipliers(poly, [-0.5], np.zeros(0), [0.0])
        assert g1.size == g2.size == 0
        assert_allclose(u1, [0.5])
        assert_array_equal(u2, [0.0])
        assert_allclose(mu, [0.5, 0.0])

    def test_bound_tie_counts_as_free(self):
        poly = Polyhedron.box([0.0], [1.0])
        *_, mu = recover_multipliers(poly, [1.0], np.zeros(0), [1.0])
        assert_array_equal(mu, [0.0, 0.0])

    def test_infinite_rows_carry_nothing(self):
        poly = Polyhedron([[1.0]], [-INF], [0.0], [-INF], [INF])
        res = project(poly, [2.0])
        assert_allclose(res.y_star, [0.0])
        assert res.gamma1[0] == 0
        assert res.gamma2[0] == pytest.approx(2.0)


class TestMuOfX:

    def test_kkt_point_gives_zero(self, entries):
        p = entries["lin-eq-box"].problem
        mu, res = mu_of_x(p, [1.0, 1.0], [-1.0], 1.0)
        assert_allclose(res.y_star, [1.0, 1.0], atol=1e-14)
        assert_array_equal(mu, np.zeros(4))

    def test_clamped_coordinates(self, entries):
        p = entries["lin-eq-box"].problem
        # grad L = x + nu (1, 1), so c = -nu (1, 1)
        mu, _ = mu_of_x(p, [0.0, 2.0], [-2.0], 0.0)
        assert_array_equal(mu, np.zeros(4))
        mu, _ = mu_of_x(p, [0.0, 2.0], [0.5], 0.0)
        assert_allclose(mu, [0.5, 0.5, 0.0, 0.0])

    def test_single_coordinate_below_box(self):
        poly = Polyhedron.box([0.0, 0.0], [1.0, 1.0])
        p = quadratic_problem(poly, np.eye(2), np.array([0.5, 0.0]))
        # c = x - (x + g) = (-0.5, 0): only the lower bound of x1 is active
        mu, res = mu_of_x(p, [0.2, 0.6], np.zeros(0), 0.0)
        assert_allclose(mu, [0.5, 0.0, 0.0, 0.0])
        assert res.kkt_residual <= 1e-8
