import math

import numpy as np
import pytest

from conftest import gauss_hermite_expectation
from ergo import expr, pde
from ergo.gfunc import GFunction
from ergo.model import make_builtin

UNCERTAIN = GFunction(0.25, 1.0)


class TestGNormal:
    def test_convex_saturates_upper_variance(self, small_grid):
        # Gauss-Hermite oracle: convex data feel the upper variance only
        ref = gauss_hermite_expectation(lambda x: x**2, 1.0)
        got = pde.g_normal_expectation(UNCERTAIN, expr.parse("x^2"), 1.0,
                                       grid=small_grid)
        assert ref == pytest.approx(1.0, abs=1e-12)
        assert got == pytest.approx(ref, abs=1e-3)

    def test_concave_saturates_lower_variance(self, small_grid):
        ref = -0.25 * gauss_hermite_expectation(lambda x: x**2, 1.0)
        got = pde.g_normal_expectation(UNCERTAIN, expr.parse("-x^2"), 1.0,
                                       grid=small_grid)
        assert got == pytest.approx(ref, abs=1e-3)

    def test_odd_linear_data_stay_centered(self, small_grid):
        got = pde.g_normal_expectation(UNCERTAIN, expr.parse("x"), 1.0,
                                       grid=small_grid)
        assert abs(got) <= 1e-4

    def test_degenerate_interval_is_classical(self):
        # equal endpoints reduce to the classical heat semigroup
        gf = GFunction(0.49, 0.49)
        for src, fn in (("x^2", lambda x: x**2),
                        ("x^4 - 3*x^2", lambda x: x**4 - 3 * x**2),
                        ("exp(-x)", lambda x: np.exp(-x))):
            ref = gauss_hermite_expectation(fn, 0.49 * 1.3)
            got = pde.g_normal_expectation(gf, expr.parse(src), 1.3)
            assert got == pytest.approx(ref, abs=1e-3), src
        # Gauss-Hermite converges too slowly on kinked integrands; the
        # kinked entry is checked against the exact truncated-moment form
        v = 0.49 * 1.3
        b = 1.0 / math.sqrt(v)
        prob = math.erf(b / math.sqrt(2.0))
        phi = math.exp(-b * b / 2.0) / math.sqrt(2.0 * math.pi)
        ref = prob - v * (prob - 2.0 * b * phi)
        got = pde.g_normal_expectation(gf, expr.parse("max(0, 1 - x^2)"), 1.3)
        assert got == pytest.approx(ref, abs=1e-3)

    def test_zero_variance_returns_point_value(self):
        got = pde.g_normal_expectation(UNCERTAIN, expr.parse("x^2 - 3"), 0.0)
        assert got == -3.0


class TestSolve:
    def test_classical_ou_variance(self, gou_classical):
        # Var X_t = (1 - e^{-2 a t}) s^2 / (2a) = 1 - 1/e at t = 1
        sol = pde.solve(gou_classical, expr.parse("x^2"), 1.0)
        assert sol.evaluate(1.0, 0.0) == pytest.approx(0.6321205588285577,
                                                       abs=1e-3)

    def test_marginal_law_matches_rescaled_normal(self, gou, small_grid):
        # time-t law = sublinear normal at variance (1 - e^{-2at})/(2a)
        f = expr.parse("x^4 - 3*x^2")
        sol = pde.solve(gou, f, 1.0, grid=small_grid)
        var = (1 - math.exp(-1.0))
        ref = pde.g_normal_expectation(UNCERTAIN, f, var, grid=small_grid)
        assert sol.evaluate(1.0, 0.0) == pytest.approx(ref, abs=2e-3)

    def test_constants_are_solutions(self, gou, tiny_grid):
        sol = pde.solve(gou, expr.parse("3"), 1.0, grid=tiny_grid)
        assert float(np.max(np.abs(sol.values - 3.0))) <= 1e-12

    def test_initial_slice_is_exact(self, gou, tiny_grid):
        f = expr.parse("exp(-x) * x^2")
        sol = pde.solve(gou, f, 0.5, grid=tiny_grid)
        assert np.array_equal(sol.values[0], f.eval(tiny_grid.nodes()))

    def test_monotone_in_initial_data(self, gou, tiny_grid):
        rng = np.random.default_rng(3)
        for _ in range(20):
            c = [float(v) for v in rng.uniform(-2, 2, size=3)]
            f = expr.parse(f"{c[0]!r} + {c[1]!r}*x + {c[2]!r}*x^2 + 0.05*x^4")
            bump = expr.parse(f"{float(rng.uniform(0, 2))!r} * "
                              f"max(0, 1 - (x - {float(rng.uniform(-2, 2))!r})^2)")
            uf = pde.solve(gou, f, 0.4, grid=tiny_grid)
            ug = pde.solve(gou, expr.BinOp("+", f, bump), 0.4, grid=tiny_grid)
            assert float(np.max(uf.values - ug.values)) <= 1e-12

    def test_positive_homogeneity(self, gou, tiny_grid):
        f = expr.parse("x^4 - 3*x^2")
        base = pde.solve(gou, f, 0.5, grid=tiny_grid)
        for lam in (0.5, 2.0):
            scaled = pde.solve(gou, expr.BinOp("*", expr.Const(lam), f), 0.5,
                               grid=tiny_grid)
            err = np.max(np.abs(scaled.values - lam * base.values))
            assert err <= 1e-10 * np.max(np.abs(base.values))

    def test_subadditive_in_initial_data(self, gou, tiny_grid):
        pairs = [("x^2", "-x^2"), ("abs(x)", "x^4 - 3*x^2"),
                 ("max(0, 1 - x^2)", "x"), ("exp(-x) * x^2", "-x^2")]
        for a, b in pairs:
            fa, fb = expr.parse(a), expr.parse(b)
            ua = pde.solve(gou, fa, 0.5, grid=tiny_grid).evaluate(0.5, 0.0)
            ub = pde.solve(gou, fb, 0.5, grid=tiny_grid).evaluate(0.5, 0.0)
            uab = pde.solve(gou, expr.BinOp("+", fa, fb), 0.5,
                            grid=tiny_grid).evaluate(0.5, 0.0)
            assert uab <= ua + ub + 5e-3

    def test_grid_convergence_contracts(self, gou):
        # node counts chosen so the dictionary kinks (x = 0, +-1) sit on
        # grid nodes at every refinement level
        for src in ("x^2", "x^4 - 3*x^2", "abs(x)", "max(0, 1 - x^2)"):
            f = expr.parse(src)
            u = [pde.solve(gou, f, 1.0, grid=pde.Grid1D(nx=nx)).evaluate(1.0, 0.0)
                 for nx in (161, 321, 641)]
            d1, d2 = abs(u[1] - u[0]), abs(u[2] - u[1])
            assert d2 <= 0.5 * d1 + 1e-9, src

    def test_domain_doubling_stability(self, gou):
        f = expr.parse("x^4 - 3*x^2")
        narrow = pde.solve(gou, f, 1.0, grid=pde.Grid1D(nx=801))
        wide = pde.solve(gou, f, 1.0,
                         grid=pde.Grid1D(x_min=-16, x_max=16, nx=1601))
        assert abs(narrow.evaluate(1.0, 0.0)
                   - wide.evaluate(1.0, 0.0)) <= 1e-3

    def test_source_term_accumulates_running_cost(self, gou, small_grid):
        # constant source on constant data grows linearly: u = c + s*t
        sol = pde.solve(gou, expr.parse("0"), 2.0, grid=small_grid,
                        source=expr.parse("3"))
        assert sol.evaluate(2.0, 0.0) == pytest.approx(6.0, abs=1e-9)

    def test_discount_damps_constants(self, gou, small_grid):
        # du/dt = -rho u from u0 = 1 gives e^{-rho t}
        sol = pde.solve(gou, expr.parse("1"), 1.0, grid=small_grid,
                        discount=0.5)
        assert sol.evaluate(1.0, 0.0) == pytest.approx(math.exp(-0.5),
                                                       abs=5e-4)

    def test_grid_sampled_initial_data(self, gou, tiny_grid):
        vals = np.cos(tiny_grid.nodes())
        sol = pde.solve(gou, vals, 0.3, grid=tiny_grid)
        assert np.array_equal(sol.values[0], vals)


class TestEvaluateAndStorage:
    def test_grid_node_stored_time_exact(self, gou, tiny_grid):
        f = expr.parse("x^2")
        sol = pde.solve(gou, f, 1.0, grid=tiny_grid, store_times=[0.5, 1.0])
        k = np.searchsorted(sol.times, 0.5)
        x40 = tiny_grid.nodes()[40]
        assert sol.evaluate(float(sol.times[k]), float(x40)) == sol.values[k, 40]

    def test_initial_condition_recovered(self, gou, tiny_grid):
        f = expr.parse("exp(-x)")
        sol = pde.solve(gou, f, 0.5, grid=tiny_grid)
        for x in (-3.0, 0.0, 2.5):
            assert sol.evaluate(0.0, x) == pytest.approx(f.eval(x), abs=1e-4)

    def test_midpoint_is_mean_of_neighbors(self, gou, tiny_grid):
        sol = pde.solve(gou, expr.parse("x"), 0.0, grid=tiny_grid)
        xs = tiny_grid.nodes()
        mid = 0.5 * (xs[10] + xs[11])
        assert sol.evaluate(0.0, float(mid)) == pytest.approx(
            0.5 * (sol.values[0, 10] + sol.values[0, 11]), rel=1e-14)

    def test_out_of_range_queries(self, gou, tiny_grid):
        sol = pde.solve(gou, expr.parse("x"), 0.5, grid=tiny_grid)
        with pytest.raises(pde.OutOfRangeError):
            sol.evaluate(0.1, 100.0)
        with pytest.raises(pde.OutOfRangeError):
            sol.evaluate(2.0, 0.0)

    def test_csv_dump(self, gou, tiny_grid, tmp_path):
        sol = pde.solve(gou, expr.parse("x^2"), 0.2, grid=tiny_grid,
                        store_times=[0.2])
        path = tmp_path / "slices.csv"
        sol.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "t,x,u"
        assert len(rows) == 1 + len(sol.times) * tiny_grid.nx


class TestStepper:
    def test_cfl_rejects_large_dt(self, gou):
        grid = pde.Grid1D(nx=201, dt=1.0)
        with pytest.raises(pde.CflError):
            pde.Stepper(gou, expr.parse("x^2"), grid)

    def test_user_dt_within_bound_accepted(self, gou):
        grid = pde.Grid1D(nx=201, dt=1e-4)
        sol = pde.solve(gou, expr.parse("x^2"), 0.01, grid=grid)
        assert np.isfinite(sol.values).all()

    def test_kernels_agree(self, gou, tiny_grid):
        # the jitted kernel and the numpy fallback march identically
        if not pde._HAVE_NUMBA:
            pytest.skip("numba unavailable")
        f = expr.parse("x^4 - 3*x^2")
        a = pde.Stepper(gou, f, tiny_grid, use_numba=True)
        b = pde.Stepper(gou, f, tiny_grid, use_numba=False)
        a.advance_to(0.3)
        b.advance_to(0.3)
        assert np.array_equal(a.u, b.u)

    def test_cfl_invariant_of_auto_dt(self, gou):
        grid = pde.Grid1D(nx=401)
        st = pde.Stepper(gou, expr.parse("x^2"), grid)
        x = grid.nodes()
        b, h, sig = gou.coefficients_on(x)
        dx = grid.dx
        for c in (gou.g.sigma_lo_sq, gou.g.sigma_hi_sq):
            drift = c * h + b
            bound = st.dt * (c * sig**2 / dx**2 + np.abs(drift) / dx)
            assert float(np.max(bound)) <= 1.0 + 1e-12

    def test_nonfinite_march_reports(self):
        # an explosive anti-dissipative model eventually overflows
        model = make_builtin("g_ou", [-40.0])  # b = +40x
        grid = pde.Grid1D(x_min=-2, x_max=2, nx=51)
        stepper = pde.Stepper(model, expr.parse("exp(x^2)"), grid)
        with pytest.raises(pde.NonFiniteError):
            stepper.advance_to(50.0)
