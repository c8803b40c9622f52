import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from npasa import AugmentedLagrangian, Iterate, Polyhedron, SolverConfig, global_step, safeguard_lambda
from npasa.oracle import DenseQp, brute_force_qp, finite_diff_gradient, finite_diff_jacobian
from npasa.projection import project
from npasa.subsolve import pg_measure

from helpers import scalar_problem

NAMES = ["lin-eq-box", "circle-min", "circle-interior", "rosen-circle"]


class TestSafeguard:

    def test_examples(self):
        assert_array_equal(safeguard_lambda([5.0, -0.3], 1.0), [1.0, -0.3])
        assert_array_equal(safeguard_lambda([0.2, -0.3], 1.0), [0.2, -0.3])
        assert_array_equal(safeguard_lambda([-2.0], 1.0), [-1.0])

    def test_bound_must_be_positive(self):
        with pytest.raises(ValueError):
            safeguard_lambda([1.0], 0.0)


class TestAugmentedLagrangian:

    @given(st.sampled_from(NAMES), st.floats(1.0, 1e3), st.integers(0, 2 ** 32 - 1))
    def test_derivatives_match_finite_differences(self, entries, name, q, seed):
        p = entries[name].problem
        rng = np.random.default_rng(seed)
        al = AugmentedLagrangian(p, q, rng.uniform(-2, 2, size=p.ell))
        x = rng.uniform(0.2, 1.8, size=2)
        g = al.gradient(x)
        assert_allclose(finite_diff_gradient(al.value, x), g, rtol=1e-6, atol=1e-6 * (1 + abs(g).max()))
        H = al.hessian(x)
        fd = finite_diff_jacobian(al.gradient, x)
        assert_allclose(fd, H, rtol=1e-6, atol=1e-6 * (1 + abs(H).max()))

    def test_value_formula(self, entries):
        p = entries["lin-eq-box"].problem
        al = AugmentedLagrangian(p, 4.0, [0.5])
        # f = 0.5, h = -1
        assert al.value([1.0, 0.0]) == pytest.approx(0.5 - 0.5 + 4.0)


class TestGlobalStep:

    def test_lin_eq_box_matches_oracle(self, entries):
        p = entries["lin-eq-box"].problem
        q = 4.0
        new = global_step(p, Iterate([2.0, 0.0], [0.0], np.zeros(4)), q, SolverConfig())
        # L_q = 1/2|x|^2 + q (x1 + x2 - 2)^2 is a QP
        H = np.eye(2) + 2 * q * np.ones((2, 2))
        x_ref, _ = brute_force_qp(DenseQp(H, -4 * q * np.ones(2), p.omega))
        assert_allclose(x_ref, [16 / 17, 16 / 17])
        assert_allclose(new.x, x_ref, atol=1e-9)
        assert_allclose(new.lam, 2 * q * p.h(new.x), atol=1e-14)
        assert_allclose(new.lam, [-16 / 17], atol=1e-8)
        assert_array_equal(new.mu, np.zeros(4))

    def test_kkt_point_is_fixed(self, entries):
        for name in NAMES:
            entry = entries[name]
            x, lam, mu = entry.solutions[0]
            new = global_step(entry.problem, Iterate(x, lam, mu), 10.0, SolverConfig())
            assert_allclose(new.x, x, atol=1e-8)
            assert_allclose(new.lam, lam, atol=1e-8)
            assert_allclose(new.mu, mu, atol=1e-8)

    def test_multiplier_update_arithmetic(self):
        # omega pins x to 0.25, so h(x') = 0.25 whatever the objective
        p = scalar_problem(0.0, 1.0, Polyhedron.box([0.25], [0.25]))
        cfg = SolverConfig(lambda_bar=1.0)
        new = global_step(p, Iterate([0.25], [5.0], np.zeros(2)), 4.0, cfg)
        assert_allclose(new.lam, [3.0])

    @pytest.mark.parametrize("name", NAMES)
    def test_output_properties(self, entries, name):
        entry = entries[name]
        p = entry.problem
        cfg = SolverConfig()
        q = 50.0
        it = Iterate(entry.x0, entry.lam0, np.zeros(p.m))
        new, info = global_step(p, it, q, cfg, info=True)
        lam_bar = safeguard_lambda(it.lam, cfg.lambda_bar)
        assert_allclose(new.lam - lam_bar, 2 * q * p.h(new.x), rtol=0, atol=1e-15)
        assert np.all(new.mu >= 0)
        assert np.all(new.mu[~p.omega.finite_mask] == 0)
        al = AugmentedLagrangian(p, q, lam_bar)
        meas, _ = pg_measure(p.omega, new.x, al.gradient(new.x))
        assert meas <= cfg.inner_tol
        assert info.projection_kkt <= 1e-8
        assert project(p.omega, new.x).y_star == pytest.approx(new.x)
