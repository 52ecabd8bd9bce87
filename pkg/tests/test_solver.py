import numpy as np
import pytest

from phinehari.energy import ProblemSpec, j_value
from phinehari.errors import BranchInfeasibleError, ConfigError
from phinehari.grid import Weight, build_grid
from phinehari.nehari import (
    classify,
    decay_constant,
    field_norm,
    minus_energy_floor,
    project,
    sample_directions,
    thresholds,
)
from phinehari.nfunction import parse_family
from phinehari.solver import (
    SolveOptions,
    lagrange_residual,
    nonnegative_report,
    plus_norm_bounds,
    solve,
    solve_branch,
    sweep_lambda,
)

OPTS = SolveOptions(restarts=2)


def make(family="power:1.5", n=17, q=1.2, lam=0.05, a=1.0, b=1.0, lstar=6.0):
    g = build_grid(2, n)
    return ProblemSpec(parse_family(family), g, Weight.constant(g, a), Weight.constant(g, b), q, lam,
                       lstar_override=lstar)


@pytest.fixture(scope="module")
def small():
    ps = make()
    return ps, solve(ps, OPTS)


class TestOptions:
    @pytest.mark.parametrize("kwargs", [{"restarts": 0}, {"armijo_c": 1.5}, {"step_shrink": 1.0},
                                        {"grad_tol_rel": 0.0}, {"max_outer_iters": -1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SolveOptions(**kwargs)


class TestSmallSolve:
    def test_both_branches_converge(self, small):
        _, res = small
        assert res.ok
        assert res.plus.energy < 0 < res.minus.energy

    def test_points_on_their_branch(self, small):
        ps, res = small
        assert classify(ps, res.plus.point.field) == "plus"
        assert classify(ps, res.minus.point.field) == "minus"

    def test_certificates(self, small):
        ps, res = small
        for r in (res.plus, res.minus):
            cert = lagrange_residual(ps, r.point.field)
            assert cert.residual <= 1e-6 and cert.relative <= 1e-6
            assert cert.residual == pytest.approx(r.certificate.residual)

    def test_certificate_discriminates(self):
        # a projected but non-stationary point fails the scale-free residual
        ps = make()
        u = sample_directions(ps.grid, 1, 3)[0]
        minus = project(ps, u)[-1]
        assert lagrange_residual(ps, minus.field).relative > 1e-3

    def test_off_manifold_rejected(self):
        ps = make()
        u = sample_directions(ps.grid, 1, 3, positive_bias=1.0)[0]
        with pytest.raises(ConfigError):
            lagrange_residual(ps, u)

    def test_traces_descend(self, small):
        _, res = small
        for r in (res.plus, res.minus):
            J = np.array([rec["J"] for rec in r.trace])
            assert [rec["iter"] for rec in r.trace] == list(range(len(J)))
            assert np.all(np.diff(J) <= 1e-12 * (1 + np.abs(J[1:])))
            assert {rec["branch"] for rec in r.trace} == {r.branch}

    def test_fields_nonnegative(self, small):
        ps, res = small
        for r in (res.plus, res.minus):
            field = nonnegative_report(ps, r.point.field)
            assert np.all(field.values >= 0)
            assert j_value(ps, field) == pytest.approx(r.energy, rel=1e-12, abs=1e-20)

    def test_norm_bounds_bracket(self, small):
        ps, res = small
        nb = res.plus.summary()["norm_bounds"]
        assert nb["bracketed"] and 0 < nb["lower"] < nb["norm"] < nb["upper"]
        assert nb["norm"] == pytest.approx(field_norm(ps, res.plus.point.field, "gradient"))
        assert "norm_bounds" not in res.minus.summary()

    def test_norm_bounds_use_larger_constant(self, small):
        ps, res = small
        u = res.plus.point.field
        own = plus_norm_bounds(ps, u, res.plus.energy)["S_q"]
        assert plus_norm_bounds(ps, u, res.plus.energy, S_q=10 * own)["S_q"] == 10 * own
        assert plus_norm_bounds(ps, u, res.plus.energy, S_q=own / 10)["S_q"] == own

    def test_summary_keys(self, small):
        _, res = small
        s = res.minus.summary()
        assert {"branch", "converged", "status", "iterations", "energy", "lagrange_residual"} <= set(s)
        assert len(s["restart_energies"]) == OPTS.restarts


class TestEnergyFloor:
    def test_minus_above_floor(self, small):
        ps, res = small
        th = thresholds(ps, probe_count=8, ascent_steps=100, kind="gradient")
        out = solve(ps, OPTS, thresholds=th)
        floor = out.minus.summary()["energy_floor"]
        assert floor == minus_energy_floor(ps, th.S_ell, th.S_lstar)
        assert 0 < floor <= out.minus.energy

    def test_needs_gradient_constants(self, small):
        ps, res = small
        th = thresholds(ps, probe_count=4, ascent_steps=10, kind="sum")
        assert solve(ps, OPTS, thresholds=th).minus.energy_floor is None

    def test_floor_vanishes_for_large_lambda(self):
        ps = make(n=9, lam=1e3)
        assert minus_energy_floor(ps, 0.15, 2e-3) is None

    def test_floor_decreases_with_lambda(self):
        lo = minus_energy_floor(make(n=9, lam=0.01), 0.15, 2e-3)
        hi = minus_energy_floor(make(n=9, lam=1.0), 0.15, 2e-3)
        assert lo > hi > 0


class TestDeterminism:
    def test_same_seed_same_result(self, small):
        ps, res = small
        again = solve_branch(ps, "minus", OPTS)
        assert again.energy == res.minus.energy
        np.testing.assert_array_equal(again.point.field.values, res.minus.point.field.values)

    def test_threads_do_not_change_result(self, small):
        ps, res = small
        threaded = solve_branch(ps, "plus", SolveOptions(restarts=2, threads=2))
        assert threaded.energy == res.plus.energy
        assert threaded.restart == res.plus.restart

    def test_warm_start(self, small):
        ps, res = small
        warm = solve_branch(ps, "minus", SolveOptions(restarts=1), start=res.minus.point.field)
        assert warm.converged
        assert warm.energy == pytest.approx(res.minus.energy, rel=1e-8)


class TestDegenerate:
    def test_infeasible_branch_raises(self):
        ps = make(a=-1.0, b=-1.0)
        for branch in ("plus", "minus"):
            with pytest.raises(BranchInfeasibleError):
                solve_branch(ps, branch, OPTS)

    def test_solve_reports_infeasible(self):
        res = solve(make(a=-1.0, b=-1.0), OPTS)
        assert not res.ok
        assert (res.plus.status, res.minus.status) == ("infeasible", "infeasible")
        assert res.plus.point is None

    def test_minus_only_problem(self):
        res = solve(make(a=-1.0), OPTS)
        assert res.plus.status == "infeasible"
        assert res.minus.converged and res.minus.energy > 0

    def test_unknown_branch(self):
        with pytest.raises(ConfigError):
            solve_branch(make(), "sideways", OPTS)


class TestNonnegative:
    def test_sign_changing_field(self):
        ps = make(n=9)
        u = sample_directions(ps.grid, 1, 0)[0]
        vals = u.values
        assert np.any(vals > 0) and np.any(vals < 0)
        out = nonnegative_report(ps, u)
        np.testing.assert_array_equal(out.values, np.abs(vals))

    def test_single_signed_field(self):
        ps = make(n=9)
        u = -sample_directions(ps.grid, 1, 0, positive_bias=50.0)[0]
        out = nonnegative_report(ps, u)
        assert j_value(ps, out) == pytest.approx(j_value(ps, u), rel=1e-14)


class TestSweep:
    def test_rows(self):
        ps = make(n=9)
        lams = [0.05, 0.02, 0.01]
        rows = sweep_lambda(ps, lams, SolveOptions(restarts=1), S_ell=0.2, norm_kind="gradient",
                            branches=("plus",))
        assert [r.lam for r in rows] == lams
        norms = [r.norm for r in rows]
        assert norms[0] > norms[1] > norms[2]
        for r in rows:
            assert r.plus.converged and r.minus is None
            assert r.norm == pytest.approx(field_norm(ps.with_lambda(r.lam), r.plus.point.field, "gradient"))
            assert r.bound_rhs == pytest.approx(r.lam * decay_constant(ps, 0.2))
            d = r.to_dict()
            assert d["converged_minus"] is False and d["J_minus"] is None

    def test_rejects_ascending(self):
        with pytest.raises(ConfigError):
            sweep_lambda(make(n=9), [0.01, 0.02, 0.03])

    def test_row_failure_does_not_abort(self):
        ps = make(n=9, a=-1.0, b=-1.0)
        rows = sweep_lambda(ps, [0.03, 0.02, 0.01], SolveOptions(restarts=1))
        assert len(rows) == 3
        assert all(r.error and not r.bound_ok for r in rows)
        assert all(np.isnan(r.norm) for r in rows)
