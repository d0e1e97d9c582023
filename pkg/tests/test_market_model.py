import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from erltv.market_model import (DriftSpec, JumpSpec, ModelError, SchemeError, TimeChange,
                                VolatilityModel, build_scheme, diagnostics_trend, eval_sigma,
                                irregular, laplace_curve, load_times, quantile_scheme, regular,
                                time_change)

# int_0^1 exp(-(1 + 0.5 sin(2 pi s))^2) ds by 30-digit adaptive quadrature
SINUSOID_F1 = 0.40712242773733888


def sinusoid():
    return VolatilityModel.sinusoid(1.0, 0.5, 2 * math.pi)


class TestVolatility:
    def test_constant(self):
        assert eval_sigma(VolatilityModel.constant(1.0), 0.37) == 1.0

    def test_sinusoid_peak(self):
        assert eval_sigma(sinusoid(), 0.25) == pytest.approx(1.5, abs=1e-15)

    def test_cir_starts_at_theta(self):
        vol = VolatilityModel.cir_like(2.0, 1.0, 0.3)
        assert eval_sigma(vol, 0.0, path_seed=7) == 1.0

    def test_cir_requires_seed(self):
        with pytest.raises(ModelError):
            eval_sigma(VolatilityModel.cir_like(2.0, 1.0, 0.3), 0.5)

    def test_cir_path_reproducible_and_floored(self):
        vol = VolatilityModel.cir_like(2.0, 0.3, 0.8, sigma_min=0.1)
        s = np.linspace(0, 1, 101)
        a = eval_sigma(vol, s, 3)
        np.testing.assert_array_equal(a, eval_sigma(vol, s, 3))
        assert a.min() >= 0.1
        assert not np.array_equal(a, eval_sigma(vol, s, 4))

    def test_sigma_outside_unit_interval(self):
        with pytest.raises(ModelError):
            eval_sigma(VolatilityModel.constant(1.0), 1.5)

    @pytest.mark.parametrize("make", [
        lambda: VolatilityModel.constant(0.0),
        lambda: VolatilityModel.sinusoid(1.0, 1.2, 1.0),
        lambda: VolatilityModel.piecewise_grid([1.0]),
        lambda: VolatilityModel.cir_like(-1.0, 1.0, 0.3),
        lambda: VolatilityModel.piecewise_grid([1.0, 2.0], continuity_class="rough"),
    ])
    def test_invalid_models(self, make):
        with pytest.raises(ModelError):
            make()

    def test_piecewise_interpolates(self):
        vol = VolatilityModel.piecewise_grid([1.0, 3.0])
        assert eval_sigma(vol, 0.5) == pytest.approx(2.0)


class TestLaplaceCurve:
    def test_u_zero(self):
        assert laplace_curve(VolatilityModel.constant(1.0), [0.0])[0] == 1.0

    def test_constant_closed_form(self):
        assert laplace_curve(VolatilityModel.constant(1.0), [1.0])[0] == pytest.approx(
            0.3678794411714423, abs=1e-15)

    def test_sinusoid_regression(self):
        assert laplace_curve(sinusoid(), [1.0])[0] == pytest.approx(SINUSOID_F1, abs=1e-13)
        assert laplace_curve(sinusoid(), [1.0], steps=10**6)[0] == pytest.approx(
            SINUSOID_F1, abs=1e-13)

    @given(st.lists(st.floats(0, 10), min_size=2, max_size=8))
    def test_monotone_and_bounded(self, us):
        us = sorted(us)
        f = laplace_curve(sinusoid(), us)
        assert np.all(np.diff(f) <= 1e-15)
        assert np.all((f > 0) & (f <= 1))


class TestSpecs:
    def test_drift(self):
        assert DriftSpec.zero()(0.3) == 0.0
        assert DriftSpec.constant(0.2)(0.9) == pytest.approx(0.2)

    def test_jump_rates(self):
        assert JumpSpec.none().rate == 0.0
        assert JumpSpec.compound_poisson(5.0).rate == 5.0
        ts = JumpSpec.truncated_stable(0.5, 1.0, truncation=0.01, max_size=1.0)
        assert ts.rate == pytest.approx(2 * (0.01 ** -0.5 - 1.0) / 0.5)

    def test_stable_index_restricted(self):
        with pytest.raises(ModelError, match="Blumenthal-Getoor"):
            JumpSpec.truncated_stable(1.2, 1.0)

    def test_stable_sizes_within_bounds(self):
        ts = JumpSpec.truncated_stable(0.7, 1.0, truncation=0.01, max_size=0.5)
        x = ts.sample_sizes(np.random.default_rng(0), 10000)
        assert np.all((np.abs(x) >= 0.01) & (np.abs(x) <= 0.5))


class TestSchemes:
    def test_regular_four(self):
        s = regular(4)
        np.testing.assert_array_equal(s.times, [0, 0.25, 0.5, 0.75, 1.0])
        d = s.diagnostics
        assert (d.sqrt_n_max_gap, d.n_sum_sq_gaps) == (0.5, 1.0)

    def test_irregular_valid(self):
        s = irregular((0, 0.5, 0.6), 3)
        assert s.N == 2
        assert s.gaps.max() == 0.5

    def test_irregular_not_increasing(self):
        with pytest.raises(SchemeError, match="strictly increasing"):
            irregular((0, 0.6, 0.5), 3)

    @pytest.mark.parametrize("times,n,msg", [
        ((0.1, 0.5), 2, "first observation"),
        ((0, 0.5, 1.2), 2, "<= 1"),
        ((0, 0.2, 0.4, 0.6), 2, "exceeds"),
    ])
    def test_irregular_clauses(self, times, n, msg):
        with pytest.raises(SchemeError, match=msg):
            irregular(times, n)

    def test_regular_as_irregular_is_uniform(self):
        s = irregular(np.arange(11) / 10, 10)
        assert s.uniform
        np.testing.assert_array_equal(s.gaps, regular(10).gaps)

    def test_build_and_load(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("# times\n0\n0.3\n0.9\n")
        s = build_scheme({"kind": "irregular", "times": load_times(p), "n": 2})
        assert s.N == 2 and s.end == 0.9
        assert build_scheme({"kind": "regular", "n": 5}).N == 5
        with pytest.raises(SchemeError):
            build_scheme({"kind": "poisson"})

    def test_quantile_diagnostics(self):
        # sqrt(i/n): first gap is n^{-1/2}, and n * sum gap^2 grows like log n
        trend = diagnostics_trend(lambda n: quantile_scheme(np.sqrt, n), (100, 1000, 10000))
        assert not trend["max_gap_vanishing"]
        assert not trend["sum_sq_bounded"]
        trend = diagnostics_trend(lambda n: quantile_scheme(lambda v: v ** (1 / 1.5), n),
                                  (100, 1000, 10000))
        assert trend["max_gap_vanishing"] and trend["sum_sq_bounded"]


class TestTimeChange:
    @given(st.floats(0, 1))
    def test_regular_identity(self, s):
        tn, tp, sat = time_change(regular(37), s)
        assert tn == pytest.approx(s, abs=1e-14)
        assert tp == pytest.approx(1.0)
        assert not sat

    def test_single_interval(self):
        tn, tp, _ = time_change(irregular((0, 0.5, 1), 2), 0.25)
        assert tn == pytest.approx(0.25)
        assert tp == pytest.approx(1.0)

    def test_quantile_example(self):
        n = 100
        sch = quantile_scheme(np.sqrt, n)
        tn, _, _ = time_change(sch, 0.25)
        # direct summation: (1/n) sum_i overlap([t_{i-1}, t_i], [0, s]) / gap_i
        t = np.sqrt(np.arange(n + 1) / n)
        overlap = np.clip(0.25 - t[:-1], 0, np.diff(t))
        direct = float(np.sum(overlap / np.diff(t)) / n)
        assert tn == pytest.approx(direct, abs=1e-15)
        assert abs(tn - 0.25 ** 2) <= 1.0 / n

    def test_saturation(self):
        tn, tp, sat = time_change(irregular((0, 0.5), 2), 0.8)
        assert sat and tp == 0.0 and tn == pytest.approx(0.5)

    def test_outside(self):
        with pytest.raises(SchemeError):
            time_change(regular(4), -0.1)

    def test_power_consistent(self):
        assert TimeChange.power(2.0).check() < 1e-6
        assert TimeChange.identity().is_identity
