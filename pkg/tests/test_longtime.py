import math

import numpy as np
import pytest

from conftest import gauss_hermite_expectation
from ergo import expr, longtime, pde
from ergo.gfunc import GFunction
from ergo.model import GDiffusionModel, make_builtin

UNCERTAIN = GFunction(0.25, 1.0)


class TestInvariantValue:
    def test_convex_limit_saturates_upper_variance(self, gou, small_grid):
        # stationary law is the sublinear normal at variance 1/(2 alpha);
        # convex data see the upper endpoint (Gauss-Hermite oracle = 1.0)
        res = longtime.invariant_value(gou, expr.parse("x^2"),
                                       grid=small_grid)
        ref = gauss_hermite_expectation(lambda x: x**2, 1.0)
        assert res.lambda_bar == pytest.approx(ref, abs=1e-2)
        assert res.x_dependence_defect <= 2e-2

    def test_concave_limit_saturates_lower_variance(self, gou, small_grid):
        res = longtime.invariant_value(gou, expr.parse("-x^2"),
                                       grid=small_grid)
        ref = -0.25 * gauss_hermite_expectation(lambda x: x**2, 1.0)
        assert res.lambda_bar == pytest.approx(ref, abs=1e-2)

    def test_rate_estimate_dominates_drift_rate(self, small_grid):
        for alpha in (0.5, 1.0):
            model = make_builtin("g_ou", [alpha], g=UNCERTAIN)
            res = longtime.invariant_value(model, expr.parse("x^2"),
                                           grid=small_grid,
                                           check_dissipativity=False)
            # variance relaxes at 2*alpha, twice the guaranteed rate
            assert res.rate_estimate >= 0.9 * alpha
            assert res.rate_estimate <= 3.0 * alpha

    def test_dirac_limit_is_point_evaluation(self, dirac_model, small_grid):
        res = longtime.invariant_value(dirac_model,
                                       expr.parse("x^4 - 3*x^2"),
                                       grid=small_grid,
                                       check_dissipativity=False)
        assert res.lambda_bar == pytest.approx(0.0, abs=1e-2)

    def test_defect_shrinks_with_horizon(self, gou, small_grid):
        short = longtime.invariant_value(gou, expr.parse("x^2"),
                                         grid=small_grid, fixed_horizon=4.0,
                                         check_dissipativity=False)
        long = longtime.invariant_value(gou, expr.parse("x^2"),
                                        grid=small_grid, fixed_horizon=16.0,
                                        check_dissipativity=False)
        assert long.x_dependence_defect <= short.x_dependence_defect + 1e-12

    def test_cesaro_average_approaches_limit(self, gou, small_grid):
        res = longtime.invariant_value(gou, expr.parse("x^2"),
                                       grid=small_grid, fixed_horizon=128.0,
                                       check_dissipativity=False)
        assert res.cesaro_average() == pytest.approx(res.lambda_bar, abs=2e-2)

    def test_x_ref_independence(self, gou, small_grid):
        vals = [longtime.invariant_value(gou, expr.parse("x^4 - 3*x^2"),
                                         grid=small_grid, x_ref=x,
                                         check_dissipativity=False).lambda_bar
                for x in (-2.0, 0.0, 2.0)]
        assert max(vals) - min(vals) <= 2e-2

    def test_nondissipative_model_warns(self, small_grid):
        model = GDiffusionModel(b=expr.parse("0"), h=expr.parse("0"),
                                sigma=expr.parse("1"), g=UNCERTAIN)
        with pytest.warns(UserWarning):
            # pure diffusion never settles; capped horizon keeps it short
            with pytest.raises(longtime.ConvergenceError):
                longtime.invariant_value(model, expr.parse("x^2"),
                                         grid=pde.Grid1D(nx=101),
                                         t_max=8.0)

    def test_trace_csv(self, gou, small_grid, tmp_path):
        res = longtime.invariant_value(gou, expr.parse("x^2"),
                                       grid=small_grid,
                                       check_dissipativity=False)
        path = tmp_path / "trace.csv"
        res.trace_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,value,defect"
        assert len(lines) == 1 + len(res.trace_times)


class TestErgodicValue:
    def test_quartic_witness_vanishes(self, gou, small_grid):
        res = longtime.ergodic_value(gou, expr.parse("x^4 - 3*x^2"),
                                     grid=small_grid)
        assert res.lambda_ == pytest.approx(0.0, abs=2e-2)
        assert res.method_disagreement <= 3e-2

    def test_constants_pass_through(self, gou, small_grid):
        res = longtime.ergodic_value(gou, expr.parse("3"), grid=small_grid)
        assert res.lambda_time_avg == pytest.approx(3.0, abs=1e-6)
        assert res.lambda_discount == pytest.approx(3.0, abs=1e-3)

    def test_dirac_running_cost(self, dirac_model, small_grid):
        res = longtime.ergodic_value(dirac_model, expr.parse("x^2"),
                                     grid=small_grid)
        assert res.lambda_ == pytest.approx(0.0, abs=1e-2)

    def test_methods_agree_on_dictionary(self, gou, small_grid):
        from ergo.measures import default_dictionary

        for entry in default_dictionary():
            res = longtime.ergodic_value(gou, entry.f, grid=small_grid)
            assert res.method_disagreement <= 3e-2, entry.label

    def test_degenerate_interval_rejected(self, small_grid):
        model = make_builtin("g_ou", [0.5], g=GFunction(0.0, 1.0))
        with pytest.raises(ValueError):
            longtime.ergodic_value(model, expr.parse("x^2"), grid=small_grid)

    def test_ordering_against_invariant(self, gou, small_grid):
        for src in ("x^2", "-x^2", "x^4 - 3*x^2", "abs(x)"):
            f = expr.parse(src)
            bar = longtime.invariant_value(gou, f, grid=small_grid,
                                           check_dissipativity=False)
            erg = longtime.ergodic_value(gou, f, grid=small_grid)
            assert erg.lambda_ <= bar.lambda_bar + 1e-2, src


class TestErgodicResidual:
    def test_quartic_profile(self, gou, small_grid):
        res = longtime.ergodic_residual(gou, "0.5 * x^4", grid=small_grid)
        assert res == pytest.approx(0.0, abs=2e-2)

    def test_square_profile(self, gou, small_grid):
        res = longtime.ergodic_residual(gou, "x^2", grid=small_grid)
        assert res == pytest.approx(0.0, abs=2e-2)

    def test_constant_profile_is_exact_zero(self, gou, small_grid):
        res = longtime.ergodic_residual(gou, "2", grid=small_grid)
        assert res == pytest.approx(0.0, abs=1e-9)

    def test_nonsmooth_profile_rejected(self, gou, small_grid):
        with pytest.raises(expr.SmoothnessError):
            longtime.ergodic_residual(gou, "abs(x)", grid=small_grid)
