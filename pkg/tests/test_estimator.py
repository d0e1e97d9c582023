import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from erltv.estimator import (EstimatorError, batch_values, erltv_curve, erltv_irregular,
                             erltv_regular, regular_values)
from erltv.lab import simulate_erltv
from erltv.market_model import (DriftSpec, JumpSpec, VolatilityModel, irregular, quantile_scheme,
                                regular)
from erltv.rates import clt_covariance
from erltv.simulator import PathIncrements, simulate_increments

CONST1 = VolatilityModel.constant(1.0)


def path(dx, scheme):
    return PathIncrements(scheme, np.asarray(dx, dtype=float), 0)


def test_zero_increments():
    p = path(np.zeros(10), regular(10))
    assert erltv_regular(p, 2.3) == 1.0


@given(arrays(float, 12, elements=st.floats(-5, 5)))
def test_u_zero_and_bounded(dx):
    p = path(dx, regular(12))
    assert erltv_regular(p, 0.0) == 1.0
    assert abs(erltv_regular(p, 1.7)) <= 1.0


def test_exact_trig():
    assert erltv_regular(path([0.0, math.pi / 2], regular(2)), 1.0) == pytest.approx(0.0,
                                                                                    abs=1e-15)


def test_irregular_examples():
    sch = irregular((0, 0.5, 1), 2)
    assert erltv_irregular(path([0.0, 0.0], sch), 1.0) == 1.0
    assert erltv_irregular(path([math.pi / 2, 0.0], sch), 1.0) == pytest.approx(0.0, abs=1e-15)


def test_regular_grid_as_irregular_matches_exactly():
    p = simulate_increments(CONST1, DriftSpec.zero(), JumpSpec.none(), regular(40), 2)
    q = path(p.dx, irregular(np.arange(41) / 40, 40))
    for u in (0.0, 0.3, 1.0, 3.0):
        assert erltv_irregular(q, u) == erltv_regular(p, u)


def test_regular_rejects_irregular_scheme():
    with pytest.raises(EstimatorError):
        erltv_regular(path([0.1, 0.2], irregular((0, 0.3, 1), 2)), 1.0)


def test_negative_u_rejected():
    with pytest.raises(EstimatorError):
        erltv_regular(path([0.0], regular(1)), -1.0)


def test_curve_grid_rules():
    p = path(np.full(4, 0.3), regular(4))
    assert erltv_curve(p, [0.0]).values.tolist() == [1.0]
    c = erltv_curve(p, [1.0, 1.0])
    assert c.values[0] == c.values[1]
    with pytest.raises(EstimatorError):
        erltv_curve(p, [])
    with pytest.raises(EstimatorError):
        erltv_curve(p, [1.0, 0.5])
    assert len(erltv_curve(p).values) == 41


def test_clt_band():
    n = 10**4
    p = simulate_increments(CONST1, DriftSpec.zero(), JumpSpec.none(), regular(n), 12)
    c = erltv_curve(p, [0.5, 1.0, 2.0])
    for u, v in zip(c.u_grid, c.values):
        assert abs(v - math.exp(-u)) <= 3 * math.sqrt(clt_covariance(u, u, CONST1) / n)


def test_rmse_rate_regular():
    ns = np.array([100, 400, 1600, 6400])
    rmse = [math.sqrt(np.mean((simulate_erltv(CONST1, regular(n), [1.0], 2000, 3)[:, 0]
                               - math.exp(-1)) ** 2)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(rmse), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_quantile_scheme_unbiased():
    sch = quantile_scheme(np.sqrt, 400)
    v = simulate_erltv(CONST1, sch, [1.0], 20000, 5)[:, 0]
    assert v.mean() == pytest.approx(math.exp(-1), abs=4 * v.std() / math.sqrt(len(v)))


def test_batch_matches_single():
    dx = np.random.default_rng(1).standard_normal((3, 30)) * 0.2
    batch = batch_values(dx, regular(30), [0.4, 2.0])
    for r in range(3):
        assert batch[r, 1] == erltv_regular(path(dx[r], regular(30)), 2.0)
    np.testing.assert_array_equal(batch, regular_values(dx, 30, [0.4, 2.0]))


def test_to_csv(tmp_path):
    c = erltv_curve(path(np.zeros(3), regular(3)), [0.0, 1.0])
    c.to_csv(tmp_path / "c.csv", ["seed: 1"])
    assert (tmp_path / "c.csv").read_text() == "# seed: 1\nu,v_n\n0.0,1.0\n1.0,1.0\n"
