import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from erltv import rates
from erltv.market_model import TimeChange, VolatilityModel
from erltv.rates import (QuadratureSettings, RateError, bessel_oracle, clt_covariance,
                         clt_variance, lambda_derivs, lambda_full, lambda_partition,
                         lambda_point, legendre_rate, mdp_process_form, mdp_rate,
                         process_rate_lower_bound)

CONST1 = VolatilityModel.constant(1.0)
SINUS = VolatilityModel.sinusoid(1.0, 0.5, 2 * math.pi)

# Bessel series at 40 digits
LAMBDA_1_1 = 0.5228716529116111
LAMBDA_M1_1 = -0.1564056692961775
# golden-section supremum of lam x - (Bessel series) over lam, independent of the Newton solver
GOLDEN_RATES = {
    (0.55, 1.0): 0.0490289576549,
    (0.5, 1.0): 0.0249958365451,
    (0.2, 1.0): 0.0354032977138,
    (0.0, 1.0): 0.161749819619,
    (-0.3, 1.0): 0.515418662227,
    (0.9, 0.5): 0.383264083476,
    (0.6, 2.0): 0.258329153387,
}
# adaptive quadrature over u of the golden-section rate, phi(u) = e^{-u} + 0.05 on [0.1, 1]
PROCESS_BOUND = 0.011535271559720244

lam_st = st.floats(-40, 40)
u_st = st.floats(0.01, 6)
vol_st = st.sampled_from([CONST1, SINUS, VolatilityModel.constant(2.0),
                          VolatilityModel.piecewise_grid([0.5, 1.5, 1.0])])


class TestLambda:
    def test_zero(self):
        assert lambda_point(0.0, 1.0, CONST1) == 0.0

    def test_examples(self):
        assert lambda_point(1.0, 1.0, CONST1) == pytest.approx(LAMBDA_1_1, abs=1e-12)
        assert lambda_point(-1.0, 1.0, CONST1) == pytest.approx(LAMBDA_M1_1, abs=1e-12)

    def test_derivatives_at_zero(self):
        d1, d2 = lambda_derivs(0.0, 1.0, CONST1)
        assert d1 == pytest.approx(math.exp(-1), abs=1e-13)
        assert d2 == pytest.approx((1 + math.exp(-4)) / 2 - math.exp(-2), abs=1e-13)

    def test_small_u_probe(self):
        assert lambda_derivs(0.0, 1e-8, CONST1)[0] == pytest.approx(1.0, abs=1e-7)

    def test_u_zero_exact(self):
        assert lambda_point(2.5, 0.0, CONST1) == 2.5

    @pytest.mark.parametrize("sigma", [1.0, 2.0])
    @pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 2.0, 4.0])
    def test_bessel_oracle_grid(self, sigma, u):
        vol = VolatilityModel.constant(sigma)
        for lam in np.arange(-10, 10.5, 0.5).tolist() + [-200.0, -50.0, 50.0, 200.0]:
            assert lambda_point(lam, u, vol) == pytest.approx(bessel_oracle(lam, u, sigma),
                                                              abs=1e-8)

    @given(lam_st, u_st, vol_st)
    def test_log_mgf_bounds(self, lam, u, vol):
        v, d1, d2 = lambda_full(lam, u, vol)
        assert abs(v) <= abs(lam) + 1e-15
        assert abs(d1) <= 1.0
        assert d2 > 0.0

    @given(st.floats(-20, 20), u_st, vol_st)
    def test_derivative_consistency(self, lam, u, vol):
        h = 1e-4
        v, d1, d2 = lambda_full(lam, u, vol)
        fd1 = (lambda_point(lam + h, u, vol) - lambda_point(lam - h, u, vol)) / (2 * h)
        fd2 = (lambda_derivs(lam + h, u, vol)[0] - lambda_derivs(lam - h, u, vol)[0]) / (2 * h)
        assert d1 == pytest.approx(fd1, rel=1e-6, abs=1e-9)
        assert d2 == pytest.approx(fd2, rel=1e-6, abs=1e-9)

    def test_errors(self):
        with pytest.raises(RateError):
            lambda_point(1.0, -1.0, CONST1)
        with pytest.raises(RateError):
            lambda_point(math.inf, 1.0, CONST1)
        with pytest.raises(ValueError):
            QuadratureSettings(max_hermite_nodes=500)


class TestLegendre:
    def test_mean_is_zero(self):
        r = legendre_rate(math.exp(-1), 1.0, CONST1)
        assert r.lambda_star == pytest.approx(0.0, abs=1e-12)
        assert r.value == pytest.approx(0.0, abs=1e-15)
        assert r.status == rates.CONVERGED

    @pytest.mark.parametrize("x", [1.2, -1.2, 1.0000001])
    def test_infinite_region(self, x):
        r = legendre_rate(x, 1.0, CONST1)
        assert math.isinf(r.value) and r.status == rates.INFINITE

    @pytest.mark.parametrize("key", sorted(GOLDEN_RATES))
    def test_two_solver_agreement(self, key):
        x, u = key
        assert legendre_rate(x, u, CONST1).value == pytest.approx(GOLDEN_RATES[key], abs=1e-6)

    def test_domain_truncated_lower_bound(self):
        r = legendre_rate(0.99, 1.0, CONST1, lambda_max=5.0)
        assert r.status == rates.TRUNCATED
        assert 0 < r.value <= legendre_rate(0.99, 1.0, CONST1).value

    def test_u_zero(self):
        assert legendre_rate(0.5, 0.0, CONST1).status == rates.DEGENERATE
        assert legendre_rate(1.0, 0.0, CONST1).value == 0.0

    @given(st.floats(-0.95, 0.95), st.floats(0.1, 4), vol_st)
    def test_nonnegative_and_attains_sup(self, x, u, vol):
        r = legendre_rate(x, u, vol)
        assert r.value >= 0.0
        if r.status == rates.CONVERGED:
            for lam in (r.lambda_star - 0.3, r.lambda_star + 0.3, 0.0):
                assert lam * x - lambda_point(lam, u, vol) <= r.value + 1e-12

    @given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0.2, 3))
    def test_convex_in_x(self, a, b, u):
        ia = legendre_rate(a, u, SINUS).value
        ib = legendre_rate(b, u, SINUS).value
        im = legendre_rate((a + b) / 2, u, SINUS).value
        assert im <= (ia + ib) / 2 + 1e-10

    def test_quadratic_bottom_matches_mdp(self):
        for dx in (-0.02, 0.02):
            x = math.exp(-1) + dx
            assert legendre_rate(x, 1.0, CONST1).value == pytest.approx(
                mdp_rate(dx, 1.0, CONST1), rel=0.05)

    def test_time_change_scaling(self):
        c = 2.0
        tc = TimeChange(lambda s: np.full_like(np.asarray(s, dtype=float), c),
                        lambda s: c * np.asarray(s, dtype=float), "const")
        assert lambda_point(3.0, 1.0, SINUS, tc) == pytest.approx(
            c * lambda_point(1.5, 1.0, SINUS), rel=1e-12)

    def test_identity_time_change_reduction(self):
        ident = TimeChange.identity()
        for x in (-0.2, 0.3, 0.8):
            assert abs(legendre_rate(x, 1.3, SINUS, ident).value
                       - legendre_rate(x, 1.3, SINUS).value) <= 1e-12


class TestMultiPoint:
    def test_partition_single(self):
        assert lambda_partition([1.0], [1.0], CONST1) == pytest.approx(LAMBDA_1_1, abs=1e-12)

    def test_partition_zero_and_cancel(self):
        assert lambda_partition([0.0, 0.0], [1.0, 2.0], CONST1) == 0.0
        assert lambda_partition([1.0, -1.0], [1.0, 1.0], CONST1) == pytest.approx(0.0, abs=1e-14)

    @given(st.floats(-10, 10), st.floats(0.05, 4), vol_st)
    def test_partition_reduces(self, lam, u, vol):
        assert lambda_partition([lam], [u], vol) == pytest.approx(lambda_point(lam, u, vol),
                                                                 abs=1e-8)

    def test_covariance_examples(self):
        assert clt_covariance(1, 1, CONST1) == pytest.approx(0.3738225362077544, abs=1e-15)
        assert clt_covariance(1, 0, CONST1) == 0.0
        assert clt_covariance(1, 4, CONST1) == pytest.approx(
            0.5 * (math.exp(-4.5) - math.exp(-0.5)) ** 2, abs=1e-15)
        assert clt_covariance(1, 1, VolatilityModel.constant(2.0)) == pytest.approx(
            (math.exp(-16) - 2 * math.exp(-8) + 1) / 2, abs=1e-15)

    def test_covariance_monte_carlo(self):
        z = np.random.default_rng(0).standard_normal(10**7)
        mc = np.cov(np.cos(math.sqrt(2) * z), np.cos(math.sqrt(8) * z))[0, 1]
        assert mc == pytest.approx(clt_covariance(1, 4, CONST1), abs=5e-4)

    @given(st.floats(0, 4), vol_st)
    def test_variance_forms_agree(self, u, vol):
        assert clt_variance(u, vol) == pytest.approx(clt_covariance(u, u, vol), abs=1e-14)

    def test_covariance_matrix_psd(self):
        m = rates.clt_covariance_matrix([0.5, 1, 2, 4], SINUS)
        assert np.allclose(m, m.T)
        assert np.linalg.eigvalsh(m).min() > -1e-14

    def test_mdp_rate(self):
        assert mdp_rate(0.0, 1.0, CONST1) == 0.0
        assert mdp_rate(0.5, 1.0, CONST1) == pytest.approx(
            0.25 / (1 + math.exp(-4) - 2 * math.exp(-2)), rel=1e-13)
        assert math.isinf(mdp_rate(0.3, 0.0, CONST1))

    def test_mdp_process_form(self):
        assert mdp_process_form([0, 0], [1, 2], CONST1) == 0.0
        single = mdp_process_form([1.0], [1.0], CONST1)
        assert single == pytest.approx(0.25 * (1 - math.exp(-2)) ** 2, abs=1e-15)
        assert single == pytest.approx(0.5 * 0.3738225362077544, abs=1e-12)
        two = mdp_process_form([1.0, 1.0], [1.0, 4.0], CONST1)
        lam = np.array([1.0, 1.0])
        quad = 0.5 * lam @ rates.clt_covariance_matrix([1.0, 4.0], CONST1) @ lam
        assert two == pytest.approx(quad, abs=1e-14)
        assert two == pytest.approx(0.614007, abs=1e-6)

    def test_process_bound(self):
        u = np.linspace(0.1, 1.0, 11)
        assert process_rate_lower_bound(u, np.exp(-u), CONST1) == pytest.approx(0.0, abs=1e-14)
        assert math.isinf(process_rate_lower_bound(u, np.full(11, 1.5), CONST1))
        fine = np.linspace(0.1, 1.0, 801)
        assert process_rate_lower_bound(fine, np.exp(-fine) + 0.05, CONST1) == pytest.approx(
            PROCESS_BOUND, rel=1e-4)
        with pytest.raises(RateError):
            process_rate_lower_bound([0.5, 0.1], [0.3, 0.3], CONST1)


class TestBesselOracle:
    def test_zero(self):
        assert bessel_oracle(0.0, 1.0, 1.0) == 0.0

    def test_value(self):
        assert bessel_oracle(1.0, 1.0, 1.0, terms=10) == pytest.approx(LAMBDA_1_1, abs=1e-15)

    def test_large_u_limit(self):
        assert bessel_oracle(1.0, 50.0, 1.0) == pytest.approx(0.2359143585071787, abs=1e-15)

    def test_monte_carlo(self):
        y = math.sqrt(2.0) * np.random.default_rng(1).standard_normal(4 * 10**6)
        mc = math.log(np.mean(np.exp(np.cos(y))))
        assert mc == pytest.approx(LAMBDA_1_1, abs=2e-3)

    def test_errors(self):
        with pytest.raises(RateError):
            bessel_oracle(1.0, 0.0, 1.0)
        with pytest.raises(RateError):
            bessel_oracle(1.0, 1.0, 1.0, terms=3)
