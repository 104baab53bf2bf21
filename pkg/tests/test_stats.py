import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from fewshot_ci.adapters import Oracle, evaluate_tasks
from fewshot_ci.errors import ConfigError, DataError, InsufficientTasksError
from fewshot_ci.samplers import sample_with_replacement
from fewshot_ci.stats import (
    IntervalEstimate,
    Mode,
    Verdict,
    betainc,
    compare_intervals,
    conclusive_probability_bound,
    mean_and_variance,
    normal_ci,
    normal_quantile,
    paired_ci,
    paired_series,
    paired_verdict,
    student_ci,
    student_critical,
)
from fewshot_ci.tasks import TaskSpec, pool_from_arrays

series = st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=80)


def two_pass(xs):
    n = len(xs)
    m = sum(xs) / n
    return m, sum((x - m) ** 2 for x in xs) / (n - 1)


class TestMeanVariance:
    def test_constant(self):
        assert mean_and_variance([0.5, 0.5]) == (0.5, 0.0)

    def test_two_point(self):
        assert mean_and_variance([1.0, 0.0]) == (0.5, 0.5)

    def test_single_value(self):
        with pytest.raises(InsufficientTasksError):
            mean_and_variance([0.3])

    @given(series)
    def test_matches_two_pass(self, xs):
        m, v = mean_and_variance(xs)
        m0, v0 = two_pass(xs)
        assert m == pytest.approx(m0, abs=1e-12)
        assert v == pytest.approx(v0, abs=1e-12)

    def test_rejects_nan(self):
        with pytest.raises(DataError):
            mean_and_variance([0.1, float("nan")])


class TestQuantiles:
    @pytest.mark.parametrize("p", [1e-12, 1e-6, 0.001, 0.02425, 0.3, 0.5, 0.8, 0.975, 0.999999])
    def test_normal_vs_scipy(self, p):
        assert normal_quantile(p) == pytest.approx(sps.norm.ppf(p), abs=1e-9)

    @pytest.mark.parametrize("dof, p, expected, tol", [(1, .95, 12.7062, .01), (10, .95, 2.2281, 1e-3), (10**6, .95, 1.95997, 1e-4)])
    def test_t_table(self, dof, p, expected, tol):
        assert abs(student_critical(dof, p) - expected) <= tol

    @pytest.mark.parametrize("dof", [1, 2, 3, 7, 24, 99, 599, 5000])
    @pytest.mark.parametrize("p", [0.5, 0.9, 0.95, 0.99])
    def test_t_vs_scipy(self, dof, p):
        assert student_critical(dof, p) == pytest.approx(sps.t.ppf(0.5 + p / 2, dof), rel=1e-8)

    @given(st.floats(0.1, 30), st.floats(0.1, 30), st.floats(0, 1))
    @settings(max_examples=200)
    def test_betainc_vs_scipy(self, a, b, x):
        from scipy.special import betainc as ref

        assert betainc(a, b, x) == pytest.approx(ref(a, b, x), abs=1e-10)

    def test_bad_dof(self):
        with pytest.raises(ConfigError):
            student_critical(0)


class TestIntervals:
    def test_normal_two_point(self):
        ci = normal_ci([1.0, 0.0])
        assert ci.mean == 0.5
        assert abs(ci.half_width - 0.980) <= 1e-3
        assert ci.mode is Mode.NORMAL

    def test_student_two_point(self):
        ci = student_ci([0.6, 0.8])
        assert ci.mean == pytest.approx(0.7)
        assert ci.half_width == pytest.approx(12.706 * math.sqrt(0.02) / math.sqrt(2), rel=1e-4)

    @pytest.mark.parametrize("fn", [normal_ci, student_ci])
    def test_constant_series(self, fn):
        assert fn([0.7] * 5).half_width == 0.0

    def test_student_needs_two(self):
        with pytest.raises(InsufficientTasksError, match="insufficient tasks for open CI") as e:
            student_ci([0.4])
        assert e.value.task_count == 1

    def test_student_converges_to_normal(self):
        x = np.random.default_rng(0).random(1000)
        assert student_ci(x).half_width / normal_ci(x).half_width - 1 < 0.005

    def test_table_half_width_from_task_spread(self):
        # ±0.52 points at T=600 corresponds to a per-task std of 0.52·√600/1.96 points
        sd = 0.0052 * math.sqrt(600) / 1.959964
        z = np.random.default_rng(1).standard_normal(600)
        x = 0.7959 + sd * (z - z.mean()) / z.std(ddof=1)
        assert normal_ci(x).half_width == pytest.approx(0.0052, rel=1e-6)

    @given(series)
    def test_student_at_least_normal(self, xs):
        assert student_ci(xs).half_width >= normal_ci(xs).half_width

    @given(st.integers(2, 500), st.floats(0.001, 1))
    def test_width_decreases_in_T(self, T, sd):
        def hw(n, mode):
            crit = normal_quantile(0.975) if mode is Mode.NORMAL else student_critical(n - 1)
            return crit * sd / math.sqrt(n)

        for mode in Mode:
            assert hw(T + 1, mode) < hw(T, mode)

    def test_p_limit_validation(self):
        with pytest.raises(ConfigError):
            normal_ci([0.1, 0.2], 1.0)


class TestPaired:
    def test_shifted(self):
        ps = paired_series([0.9, 0.7], [0.8, 0.6])
        np.testing.assert_allclose(ps.deltas, [0.1, 0.1])
        assert ps.correlation == pytest.approx(1.0)
        ci = paired_ci(ps)
        assert ci.mean == pytest.approx(0.1)
        assert ci.half_width == pytest.approx(0.0, abs=1e-15)

    def test_identical(self):
        a = [0.3, 0.5, 0.9]
        ps = paired_series(a, a)
        assert not ps.deltas.any()
        assert paired_ci(ps).half_width == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            paired_series([0.1, 0.2], [0.1])

    def test_hash_mismatch(self):
        with pytest.raises(DataError, match="same tasks"):
            paired_series([0.1, 0.2], [0.1, 0.3], "aa", "bb")

    def test_variance_of_difference(self):
        var_d = 1 + 1 - 2 * 0.675
        assert var_d == pytest.approx(0.65)
        # against one method's own interval (variance 1) the width shrinks by √0.65
        assert math.sqrt(var_d) / math.sqrt(1.0) == pytest.approx(0.806, abs=1e-3)
        # against the unpaired difference (variance 1 + 1) it shrinks by √(0.65/2)
        assert math.sqrt(var_d / 2) == pytest.approx(0.570, abs=1e-3)

    @given(series, st.data())
    def test_sign_never_contradicts(self, a, data):
        b = data.draw(st.lists(st.floats(0, 1), min_size=len(a), max_size=len(a)))
        ps = paired_series(a, b)
        diff = student_ci(a).mean - student_ci(b).mean
        assert ps.mean == diff
        assert np.sign(ps.mean) == np.sign(diff)
        assert abs(ps.correlation) <= 1 or math.isnan(ps.correlation)
        pv = paired_verdict(paired_ci(ps)).symbol
        ov = compare_intervals(student_ci(a), student_ci(b)).symbol
        assert {pv, ov} != {Verdict.PLUS, Verdict.MINUS}


@pytest.fixture(scope="module")
def tasks_pool():
    rng = np.random.default_rng(0)
    pool = pool_from_arrays([rng.normal(c, 1, size=100) for c in range(20)])
    return sample_with_replacement(pool, TaskSpec(5, 5, 15, 600), seed=7), pool


class TestOracleCorrelation:
    def test_measured_r(self, tasks_pool):
        tasks, pool = tasks_pool
        a = evaluate_tasks(Oracle(0.76, seed=1), tasks, pool)
        b = evaluate_tasks(Oracle(0.75, seed=2), tasks, pool)
        r = paired_series(a, b).correlation
        assert 0.60 <= r <= 0.75

    def test_paired_narrower_than_uncorrelated_surrogate(self, tasks_pool):
        tasks, pool = tasks_pool
        a = evaluate_tasks(Oracle(0.75, seed=1), tasks, pool)
        b = evaluate_tasks(Oracle(0.75, seed=2), tasks, pool)
        b_indep = evaluate_tasks(Oracle(0.75, seed=2, difficulty_seed=99), tasks, pool)
        assert abs(np.var(b) / np.var(b_indep) - 1) < 0.2
        assert paired_ci(paired_series(a, b)).half_width < paired_ci(paired_series(a, b_indep)).half_width


def _ci(mean, hw, p=0.95, mode=Mode.STUDENT):
    return IntervalEstimate(mean, hw, p, mode, 10)


class TestVerdicts:
    def test_minus(self):
        assert compare_intervals(_ci(0.70, 0.02), _ci(0.75, 0.02)).symbol is Verdict.MINUS

    def test_zero(self):
        assert compare_intervals(_ci(0.70, 0.05), _ci(0.75, 0.05)).symbol is Verdict.ZERO

    def test_paired_plus(self):
        v = paired_verdict(_ci(0.1, 0.05))
        assert v.symbol is Verdict.PLUS and v.mode == "paired"

    def test_p_mismatch(self):
        with pytest.raises(ConfigError):
            compare_intervals(_ci(0.1, 0.1, 0.95), _ci(0.1, 0.1, 0.99))

    @given(st.floats(0, 1), st.floats(0, 0.5), st.floats(0, 1), st.floats(0, 0.5))
    def test_antisymmetry(self, m1, h1, m2, h2):
        a, b = _ci(m1, h1), _ci(m2, h2)
        assert compare_intervals(a, b).symbol.flipped() is compare_intervals(b, a).symbol

    @pytest.mark.parametrize("p, expected", [(0.95, 0.950625), (0.99, 0.990025)])
    def test_conclusive_bound(self, p, expected):
        assert conclusive_probability_bound(p) == expected
        q = Fraction(str(p))
        assert Fraction(conclusive_probability_bound(p)) == Fraction(float((1 - (1 - q) / 2) ** 2))
