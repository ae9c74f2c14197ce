import io
import math

import numpy as np
import pytest

from _oracles import INNOVATIONS, benchmark_step, normal_quantile, t3_cdf, t3_quantile
from npcopvar.engine import FunctionForecaster
from npcopvar.errors import DomainError, InvalidInputError, SimulationError
from npcopvar.simulation import (
    InnovationLaw,
    SimModelParams,
    bump,
    innovation_quantile,
    mse_experiment,
    replication_rngs,
    simulate,
    true_cvar,
    write_mse_csv,
)

# frozen oracles: t3 quantile by bisection on the closed-form CDF; long-run
# mean from 2000 chains x 5000 steps after 500 burn-in (seed 123456)
T3_Q95 = 2.35336343480182
LONG_RUN_MEAN = 0.611496942301298
TRUE_CVAR_X1_95 = 1.4483639910391608

PARAMS = SimModelParams()
NORMAL = InnovationLaw("standard_normal")
EXPON = InnovationLaw("standard_exponential")
T3 = InnovationLaw("student_t3")


class TestParams:
    def test_defaults(self):
        p = PARAMS
        assert (p.a, p.b, p.c, p.d, p.omega, p.arch_alpha, p.x0) == (0.4, 0.3, 1.657, 0.1175, 0.007, 0.2, 1.0)

    @pytest.mark.parametrize("kwargs", [{"d": 0.0}, {"omega": 0.0}, {"omega": -1.0}, {"arch_alpha": -0.1}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            SimModelParams(**kwargs)

    def test_unknown_law(self):
        with pytest.raises(InvalidInputError):
            InnovationLaw("cauchy")

    def test_scenario_aliases(self):
        assert InnovationLaw("t3").kind == "student_t3"
        assert InnovationLaw("exponential").kind == "standard_exponential"


class TestInnovationQuantile:
    def test_exponential(self):
        assert innovation_quantile(EXPON, 1 - math.exp(-1)) == pytest.approx(1.0, abs=1e-12)

    def test_normal(self):
        assert innovation_quantile(NORMAL, 0.95) == pytest.approx(1.644854, abs=1e-6)
        assert innovation_quantile(NORMAL, 0.95) == pytest.approx(normal_quantile(0.95), abs=1e-9)

    def test_student_t3(self):
        assert T3_Q95 == pytest.approx(t3_quantile(0.95), abs=1e-12)
        assert innovation_quantile(T3, 0.95) == pytest.approx(2.353363, abs=1e-6)
        assert innovation_quantile(T3, 0.95) == pytest.approx(T3_Q95, abs=1e-8)

    @pytest.mark.parametrize("law", [NORMAL, EXPON, T3])
    def test_inverts_cdf(self, law):
        for p in np.linspace(0.001, 0.999, 37):
            assert abs(float(law.cdf(innovation_quantile(law, p))) - p) <= 1e-8

    def test_t3_cdf_matches_closed_form(self):
        for t in (-5.0, -1.0, 0.0, 0.7, 3.0):
            assert float(T3.cdf(t)) == pytest.approx(t3_cdf(t), abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.1])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            innovation_quantile(NORMAL, p)


class TestSimulate:
    def test_noise_free_limit(self):
        p = SimModelParams(b=0.0, omega=1e-300, arch_alpha=0.0, x0=10.0)
        x = simulate(p, NORMAL, 50, seed=1).values
        # after the first step the state sits at a = 0.4, far from the bump at c
        np.testing.assert_allclose(x, 0.4, atol=1e-12)

    def test_deterministic(self):
        a = simulate(PARAMS, T3, 500, seed=7).values
        b = simulate(PARAMS, T3, 500, seed=7).values
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, simulate(PARAMS, T3, 500, seed=8).values)

    @pytest.mark.parametrize("law", [NORMAL, EXPON, T3])
    def test_follows_recurrence(self, law):
        x = simulate(PARAMS, law, 200, seed=3).values
        eps = INNOVATIONS[law.kind][0](np.random.default_rng(3), 200)
        prev = PARAMS.x0
        for t in range(200):
            assert x[t] == pytest.approx(float(benchmark_step(prev, eps[t])), rel=1e-12, abs=1e-14)
            prev = x[t]

    def test_long_run_mean(self):
        x = simulate(PARAMS, NORMAL, 100_000, seed=11).values
        assert abs(x.mean() - LONG_RUN_MEAN) <= 0.05

    def test_length(self):
        assert len(simulate(PARAMS, NORMAL, 1736, seed=0)) == 1736

    def test_bad_T(self):
        with pytest.raises(InvalidInputError):
            simulate(PARAMS, NORMAL, 0, seed=0)

    def test_non_finite_state_names_step(self):
        p = SimModelParams(b=1e200, x0=1e200)
        with pytest.raises(SimulationError, match="step 1"):
            simulate(p, NORMAL, 10, seed=0)

    def test_replication_streams(self):
        a = [g.standard_normal(3) for g in replication_rngs(5, 3)]
        b = [g.standard_normal(3) for g in replication_rngs(5, 3)]
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        assert not np.array_equal(a[0], a[1])


class TestTrueCvar:
    def test_reference_value(self):
        got = true_cvar(PARAMS, NORMAL, 1.0, 0.95)
        assert got == pytest.approx(TRUE_CVAR_X1_95, abs=1e-12)
        assert got == pytest.approx(1.4484, abs=5e-5)
        assert bump(PARAMS, 1.0) == pytest.approx(7.804e-7, rel=1e-3)

    def test_matches_one_step_simulation(self):
        eps = np.random.default_rng(17).standard_normal(1_000_000)
        q = np.quantile(benchmark_step(1.0, eps), 0.95)
        assert abs(true_cvar(PARAMS, NORMAL, 1.0, 0.95) - q) <= 0.01

    def test_median(self):
        for x in (-0.5, 0.4, 1.657, 2.0):
            expected = 0.4 + 0.3 * x + bump(PARAMS, x)
            assert true_cvar(PARAMS, NORMAL, x, 0.5) == expected

    def test_bump_at_zero(self):
        assert bump(PARAMS, 0.0) == 0.0
        assert true_cvar(PARAMS, NORMAL, 0.0, 0.5) == 0.4

    @pytest.mark.parametrize("law", [NORMAL, EXPON, T3])
    def test_monotone_in_alpha(self, law):
        alphas = np.linspace(0.01, 0.99, 50)
        for x in (-1.0, 0.5, 1.6):
            q = [true_cvar(PARAMS, law, x, a) for a in alphas]
            assert np.all(np.diff(q) > 0)

    def test_vectorized(self):
        xs = np.array([0.2, 1.0])
        out = true_cvar(PARAMS, NORMAL, xs, 0.99)
        assert out[1] == true_cvar(PARAMS, NORMAL, 1.0, 0.99)


@pytest.fixture(scope="module")
def series():
    return simulate(PARAMS, NORMAL, 400, seed=2)


class TestMseExperiment:
    def test_oracle_forecaster_is_exact(self, series):
        oracle = FunctionForecaster(lambda window, levels: [true_cvar(PARAMS, NORMAL, window[-1], a) for a in levels])
        res = mse_experiment(NORMAL, oracle, T_total=400, window=252, series=series)
        assert [r.mse for r in res] == [0.0, 0.0]
        assert all(r.n_forecasts == 148 and r.n_skipped == 0 for r in res)

    def test_constant_forecaster_matches_loop(self, series):
        const = FunctionForecaster(lambda window, levels: [1.0 for _ in levels])
        res = mse_experiment(NORMAL, const, levels=(0.95,), T_total=400, window=252, series=series)
        x = series.values
        direct = np.mean([(1.0 - true_cvar(PARAMS, NORMAL, x[t - 1], 0.95)) ** 2 for t in range(252, 400)])
        assert res[0].mse == pytest.approx(direct, rel=1e-12)

    def test_failures_are_skipped_and_counted(self, series):
        def flaky(window, levels):
            if window[-1] > 1.0:
                raise RuntimeError("boom")
            return [0.5 for _ in levels]

        res = mse_experiment(NORMAL, FunctionForecaster(flaky), levels=(0.95,), T_total=400, window=252,
                             series=series)[0]
        expected_skips = int(np.sum(series.values[251:399] > 1.0))
        assert expected_skips > 0
        assert res.n_skipped == expected_skips and res.n_forecasts == 148 - expected_skips

    def test_replications_are_reproducible(self):
        const = FunctionForecaster(lambda window, levels: [0.6 for _ in levels])
        kw = dict(levels=(0.95,), T_total=300, window=252, replications=3, seed=9)
        a = [r.mse for r in mse_experiment(T3, const, **kw)]
        b = [r.mse for r in mse_experiment(T3, const, **kw)]
        assert a == b and len(set(a)) == 3

    def test_csv(self, series):
        const = FunctionForecaster(lambda window, levels: [1.0 for _ in levels])
        res = mse_experiment(NORMAL, const, T_total=400, window=252, series=series)
        buf = io.StringIO()
        write_mse_csv(res, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "scenario,level,replicate,mse,n_forecasts,n_skipped"
        assert lines[1].startswith("normal,0.95,0,") and lines[1].endswith(",148,0")
        assert len(lines) == 3
