import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from npasa import (DomainError, EvaluationError, Iterate, LogRecord, NlpProblem, Polyhedron, SolverConfig,
                   fit_convergence_order, npasa_solve, read_log, write_log)
from npasa.estimators import e1

from helpers import anisotropic_circle

NAMES = ["lin-eq-box", "circle-min", "circle-interior", "rosen-circle"]


def accepted_steps(log, phase=None):
    return [r for r in log if r.phase > 0 and r.accepted and (phase is None or r.phase == phase)]


class TestFitConvergenceOrder:

    def test_quadratic(self):
        fit = fit_convergence_order([1e-1, 1e-2, 1e-4, 1e-8])
        assert fit.order == pytest.approx(2.0, abs=1e-9)
        assert fit.constant == pytest.approx(1.0)
        assert fit.window == 4

    def test_linear(self):
        fit = fit_convergence_order([1e-1, 5e-2, 2.5e-2])
        assert fit.order == pytest.approx(1.0, abs=1e-12)
        assert fit.constant == pytest.approx(0.5)

    def test_trailing_window(self):
        fit = fit_convergence_order([0.9, 0.8, 1e-1, 1e-2, 1e-4], window=3)
        assert fit.order == pytest.approx(2.0)

    @given(st.floats(1e-3, 0.5), st.floats(1.1, 3.0), st.floats(0.1, 10.0))
    def test_recovers_synthetic_rate(self, e0, order, c):
        errs = [e0]
        for _ in range(3):
            errs.append(c * errs[-1] ** order)
        assert fit_convergence_order(errs).order == pytest.approx(order, rel=1e-6)

    @pytest.mark.parametrize("errors, window", [
        ([1e-1, 1e-2], None), ([1e-1, 1e-2, 1e-4], 2), ([1e-1, 0.0, 1e-4], None),
        ([1e-1, 1e-1, 1e-1], None), ([1e-1, 1e-2], 3),
    ])
    def test_bad_input(self, errors, window):
        with pytest.raises(DomainError):
            fit_convergence_order(errors, window)


class TestLog:

    def test_round_trip(self, entries, tmp_path):
        entry = entries["circle-interior"]
        out = npasa_solve(entry.problem, entry.x0, entry.lam0)
        path = tmp_path / "run.jsonl"
        write_log(out.log, path)
        back = read_log(path)
        assert back == out.log
        for line in path.read_text().splitlines():
            assert set(json.loads(line)) == set(LogRecord.__dataclass_fields__)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = LogRecord(k=0, phase=0, q=1.0, e=1.0, E0=1.0, E1=1.0, Em1=1.0, Ec=0.0)
        path.write_text(rec.to_json() + "\n{not json\n")
        with pytest.raises(ValueError, match="line 2"):
            read_log(path)
        path.write_text('{"k": 1}\n')
        with pytest.raises(ValueError, match="line 1"):
            read_log(path)

    def test_infinite_values_survive(self):
        rec = LogRecord(k=3, phase=1, q=1e300 * 10, e=0.1, E0=None, E1=0.1, Em1=0.01, Ec=0.0)
        assert LogRecord.from_json(rec.to_json()) == rec


class TestSolve:

    def test_lin_eq_box(self, entries):
        entry = entries["lin-eq-box"]
        out = npasa_solve(entry.problem, [2.0, 0.0])
        assert out.status == "Converged"
        assert_allclose(out.iterate.x, [1.0, 1.0], atol=1e-6)
        assert_allclose(out.iterate.lam, [-1.0], atol=1e-6)

    def test_circle_interior_ends_in_phase_two(self, entries):
        entry = entries["circle-interior"]
        out = npasa_solve(entry.problem, entry.x0, entry.lam0)
        assert out.status == "Converged"
        assert out.report.e1 <= 1e-8
        steps = [r for r in out.log if r.phase > 0]
        assert steps[-1].phase == 2
        first_two = next(i for i, r in enumerate(steps) if r.phase == 2)
        assert all(r.phase == 2 for r in steps[first_two:])

    def test_start_at_kkt(self, entries):
        for name in NAMES:
            entry = entries[name]
            x, lam, mu = entry.solutions[0]
            out = npasa_solve(entry.problem, x, lam, mu)
            assert out.status == "Converged"
            assert len(out.log) == 1 and out.log[0].status == "Start"
            assert out.counters["global_steps"] == out.counters["local_steps"] == 0
            assert out.iterate.x is not None and np.array_equal(out.iterate.x, x)

    def test_infeasible_start_is_projected(self, entries):
        entry = entries["lin-eq-box"]
        out = npasa_solve(entry.problem, [-1.0, 3.0])
        assert out.status == "Converged"
        assert any("projected" in ev for ev in out.events)

    def test_wrong_length_start(self, entries):
        with pytest.raises(DomainError):
            npasa_solve(entries["lin-eq-box"].problem, [1.0, 1.0, 1.0])

    def test_outer_cap(self, entries):
        entry = entries["lin-eq-box"]
        out = npasa_solve(entry.problem, entry.x0, config=SolverConfig(max_outer=1))
        assert out.status == "MaxOuterIterations"
        assert len(accepted_steps(out.log)) == 1

    @staticmethod
    def _nan_after(n_calls):
        calls = []

        def h(x):
            calls.append(1)
            return np.array([np.nan if len(calls) > n_calls else x[0] - 1.0])

        return NlpProblem(n=1, ell=1, f_eval=lambda x: float(x @ x), grad_f=lambda x: 2 * x,
                          h_eval=h, jac_h=lambda x: np.array([[1.0]]),
                          omega=Polyhedron.box([-1.0], [1.0]))

    def test_evaluation_failure_mid_run(self):
        out = npasa_solve(self._nan_after(12), [0.6])
        assert out.status == "Failed"
        assert any("EvaluationError" in ev for ev in out.events)

    def test_evaluation_failure_at_start_raises(self):
        with pytest.raises(EvaluationError):
            npasa_solve(self._nan_after(0), [0.6])

    def test_callback_sees_every_record(self, entries):
        seen = []
        entry = entries["circle-min"]
        out = npasa_solve(entry.problem, entry.x0, callback=seen.append)
        assert seen == out.log

    @pytest.mark.parametrize("name", NAMES)
    def test_log_invariants(self, entries, name):
        entry = entries[name]
        cfg = SolverConfig()
        out = npasa_solve(entry.problem, entry.x0, entry.lam0, config=cfg)
        assert out.converged
        es = [r.e for r in out.log]
        assert all(b <= a for a, b in zip(es, es[1:]))
        prev = None
        for rec in out.log:
            if rec.phase == 2 and rec.accepted:
                assert rec.E1 <= cfg.theta * prev.E1
            if rec.accepted:
                prev = rec
        assert out.counters["global_steps"] + out.counters["local_steps"] == len(out.log) - 1


class TestPenaltyGrowth:

    @pytest.mark.parametrize("override, status", [
        ({"alpha": 1.0}, "AlphaFailure"), ({"delta": 1e-300}, "DecreaseFailure")])
    def test_rejections_reenter_phase_one(self, override, status):
        cfg = SolverConfig(max_outer=12, **override)
        out = npasa_solve(anisotropic_circle(), [1.0, 1.0], config=cfg)
        rejected = [i for i, r in enumerate(out.log) if r.phase == 2 and not r.accepted]
        assert rejected
        assert all(out.log[i].status == status for i in rejected)
        assert out.counters["local_failures"] >= 1
        for i in rejected:
            if i + 1 < len(out.log):
                nxt = out.log[i + 1]
                assert nxt.phase == 1
                assert nxt.q >= cfg.phi * out.log[i].q
        qs = [r.q for r in out.log if r.phase == 1]
        assert all(b >= a for a, b in zip(qs, qs[1:]))

    def test_q_first_entry(self, entries):
        entry = entries["lin-eq-box"]
        cfg = SolverConfig()
        out = npasa_solve(entry.problem, entry.x0, config=cfg)
        e0 = e1(entry.problem, entry.x0, np.zeros(1), np.zeros(4))
        first = next(r for r in out.log if r.phase == 1)
        assert first.q == pytest.approx(max(cfg.phi, 1 / e0) * cfg.q0)

    def test_state_is_not_shared(self, entries):
        entry = entries["circle-min"]
        a = npasa_solve(entry.problem, entry.x0)
        b = npasa_solve(entry.problem, entry.x0)
        assert [r.E1 for r in a.log] == [r.E1 for r in b.log]
        assert isinstance(a.iterate, Iterate)
