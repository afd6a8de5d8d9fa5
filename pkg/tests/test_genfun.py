import math
from fractions import Fraction

import numpy as np
import pytest

from coaglab import ConcentrationState, InitialGF, critical_data
from coaglab.genfun import ConvergenceError


@pytest.fixture(scope="module")
def gf_d11():
    return InitialGF({(1, 1, 1): Fraction(1)})


@pytest.fixture(scope="module")
def gf_pair():
    return InitialGF({(1, 0, 1): Fraction(1), (0, 1, 1): Fraction(1)})


@pytest.fixture(scope="module")
def gf_three(three_arm_state):
    return InitialGF(three_arm_state)


def test_critical_data_examples(gf_d11, gf_three):
    d = gf_d11.critical_data()
    assert (d.alpha, d.beta, d.gamma) == (1, 0, 0)
    assert d.big_m == 1 and d.t_crit == math.inf

    d = gf_three.critical_data()
    assert (d.alpha, d.beta, d.gamma) == (0, 2, 2)
    assert d.big_m == Fraction(2) and d.t_crit == Fraction(1)

    d = critical_data({(2, 0, 1): Fraction(1, 2), (0, 2, 1): Fraction(1, 2)})
    assert d.big_m == 1 and d.t_crit == math.inf


def test_requires_unit_arm_moments():
    with pytest.raises(ValueError, match="unit arm moments"):
        InitialGF({(2, 1, 1): 1.0})


def test_phi_examples(gf_d11, gf_pair):
    x, y, z = 0.37, 0.81, 0.55
    assert gf_d11.phi(0.0, x, y, z) == (x, y)
    for t in (0.5, 2.0):
        u, v = gf_d11.phi(t, x, y, z)
        assert u == pytest.approx(x * (1 + t - t * z), abs=1e-15)
        assert v == pytest.approx(y * (1 + t - t * z), abs=1e-15)
        u, v = gf_pair.phi(t, x, y, z)
        assert u == pytest.approx((1 + t) * x - t * z, abs=1e-15)
        assert v == pytest.approx((1 + t) * y - t * z, abs=1e-15)


def test_invert_phi_examples(gf_d11, gf_pair):
    assert gf_d11.invert_phi(0.0, 0.3, 0.4, 0.9) == (0.3, 0.4)
    hx, hy = gf_d11.invert_phi(1.0, 0.5, 0.5, 0.5)
    assert hx == pytest.approx(1 / 3, abs=1e-11)
    assert hy == pytest.approx(1 / 3, abs=1e-11)
    t, z, u, v = 0.7, 0.25, 0.6, 0.2
    hx, hy = gf_pair.invert_phi(t, u, v, z)
    assert hx == pytest.approx((u + t * z) / (1 + t), abs=1e-11)
    assert hy == pytest.approx((v + t * z) / (1 + t), abs=1e-11)


def test_invert_phi_rejects_supercritical(gf_three):
    with pytest.raises(ValueError, match="critical time"):
        gf_three.invert_phi(1.0, 0.5, 0.5, 0.5)
    with pytest.raises(ValueError, match="critical time"):
        gf_three.second_moments(2.0)


def test_eval_g_examples(gf_d11):
    x, y, z = 0.4, 0.9, 0.8
    assert gf_d11.eval_g(0.0, x, y, z) == gf_d11.value(x, y, z)
    # closed form x*y*z / ((1+t)(1+t-t z)); the series oracle
    # sum_m z^m t^(m-1) / (1+t)^(m+1) gives the same number.
    t, z = 1.0, 0.5
    series = sum(z**m * t ** (m - 1) / (1 + t) ** (m + 1) for m in range(1, 200))
    got = gf_d11.eval_g(t, 1.0, 1.0, z)
    assert got == pytest.approx(series, abs=1e-12)
    assert got == pytest.approx(1 / 6, abs=1e-12)


def test_second_moments_examples(gf_d11, gf_three):
    for t in (0.0, 0.5, 3.0):
        assert gf_d11.second_moments(t) == (0, 0)
    sa, sb = gf_three.second_moments(Fraction(1, 2))
    assert sa == Fraction(8, 5) and sb == Fraction(8, 5)
    assert gf_three.second_moments(0) == (2, 2)


def test_second_moments_match_reduction(gf_three):
    # gamma / D with alpha=0, beta=gamma=2 simplifies to 2/((1-t)(1+3t))
    for t in (0.1, 0.3, 0.6, 0.85):
        sa, _ = gf_three.second_moments(t)
        assert sa == pytest.approx(2 / ((1 - t) * (1 + 3 * t)), rel=1e-14)


def test_second_moments_blowup(gf_three):
    # The denominator (1-t)(1+3t) peaks at t = 1/3, so the moment dips from 2
    # to 1.5 before diverging; monotonicity holds from that point onward.
    ts = np.linspace(1 / 3, 0.9, 40)
    vals = [gf_three.second_moments(float(t))[0] for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert min(vals) == pytest.approx(1.5, abs=1e-9)
    assert gf_three.second_moments(1 - 1e-4)[0] > 1e3


def test_round_trip_grid(gf_d11, gf_pair, gf_three, pq_state):
    gfs = [gf_d11, gf_pair, gf_three, InitialGF(pq_state)]
    grid = np.linspace(0.05, 0.95, 4)
    for gf in gfs:
        t_c = min(float(gf.critical_data().t_crit), 10.0)
        for frac in (0.1, 0.5, 0.9):
            t = frac * t_c
            for u in grid:
                for v in grid:
                    for z in grid:
                        hx, hy = gf.invert_phi(t, u, v, z)
                        pu, pv = gf.phi(t, hx, hy, z)
                        assert abs(pu - u) <= 1e-10 and abs(pv - v) <= 1e-10


def test_arm_derivative_identity(gf_d11, gf_pair, pq_state):
    # dg_t/dx(phi_t(x, y, z), z) = dg0/dx(x, y, z) / (1 + t), checked by
    # centered finite differences of eval_g around image points that land in
    # the interior of the unit square.
    h = 1e-4
    probes = [
        (x, y, z, t)
        for x in (0.2, 0.4, 0.6)
        for y in (0.2, 0.4, 0.6)
        for z in (0.3, 0.7)
        for t in (0.5, 1.5)
    ]
    for gf in (gf_d11, gf_pair, InitialGF(pq_state)):
        checked = 0
        for x, y, z, t in probes:
            u, v = gf.phi(t, x, y, z)
            if not (h < u < 1 - h and h < v < 1 - h):
                continue
            fd = (gf.eval_g(t, u + h, v, z) - gf.eval_g(t, u - h, v, z)) / (2 * h)
            assert fd == pytest.approx(gf.dx(x, y, z) / (1 + t), abs=1e-5)
            checked += 1
        assert checked >= 5


def test_contraction_is_geometric(gf_three):
    t = 0.5
    d = gf_three.critical_data()
    bound = t / (1 + t) * float(d.alpha + math.sqrt(d.beta * d.gamma)) + 0.05
    history = []
    gf_three.invert_phi(t, 0.4, 0.6, 0.7, history=history)
    ratios = [b / a for a, b in zip(history, history[1:]) if a > 1e-14]
    assert ratios and max(ratios) <= bound


def test_invert_phi_reports_nonconvergence(gf_three):
    with pytest.raises(ConvergenceError):
        gf_three.invert_phi(0.9, 0.5, 0.5, 0.5, tol=1e-12, max_iter=5)
