import cmath
import math
import warnings
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transborel import borel as B
from transborel.formal_ode import preset, solve_power_series


@pytest.fixture(scope="module")
def cubic_sectors():
    return B.continue_sectors(preset("cubic"), 2, -math.pi / 6)


# ------------------------------------------------------------ quadrature

def test_gregory_exact_fractions():
    a = B.gregory_corrections(4)
    assert all(isinstance(v, Fraction) for v in a)
    # exactness conditions of the end correction
    assert sum(a) == Fraction(-1, 2)


@pytest.mark.parametrize("n", [3, 9, 14, 64])
@pytest.mark.parametrize("order", [2, 4, 8])
def test_quad_weights_polynomials(order, n):
    h = 1 / 16
    deg = order - 1
    if order > 2 and n < 2 * order - 1:
        deg = n if n <= 8 else n // 2      # Newton-Cotes blocks on short grids
    t = np.arange(n + 1) * h
    w = B.quad_weights(n, order) * h
    for k in range(deg + 1):
        assert abs(np.dot(w, t ** k) - (n * h) ** (k + 1) / (k + 1)) < 1e-10 * (n * h) ** (k + 1)


def test_conv_order2_ratio():
    # (e^p * 1)(p) = e^p - 1; trapezoid error drops by 4 when h halves
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        L = int(2 / h)
        f = B.sample(np.exp, 0.0, h, L, order=2)
        one = B.sample(lambda p: np.ones_like(p), 0.0, h, L, order=2)
        c = B.convolve(f, one)
        errs.append(abs(c.values[-1] - (math.e ** 2 - 1)))
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.8 < e1 / e2 < 4.2


def test_laplace_order2_ratio():
    errs = []
    ref = complex(mpmath.e ** 3 * mpmath.e1(3))
    for h in (1 / 16, 1 / 32, 1 / 64):
        f = B.sample(lambda p: 1 / (1 + p), 0.0, h, int(16 / h), order=2)
        errs.append(abs(B.laplace(f, 3.0, nu=0.5, bound=1.0) - ref))
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.8 < e1 / e2 < 4.2


def test_gregory_order8_accuracy():
    f = B.sample(np.exp, 0.0, 1 / 64, 128)
    one = B.sample(lambda p: np.ones_like(p), 0.0, 1 / 64, 128)
    assert abs(B.convolve(f, one).values[-1] - (math.e ** 2 - 1)) < 1e-12


def _pair(draw_a, draw_b):
    def fun(coef, rate):
        return lambda p: sum(a * np.exp(b * p) for a, b in zip(coef, rate))
    return fun(*draw_a), fun(*draw_b)


cplx = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
rates = st.floats(-2, 2)
fams = st.tuples(st.lists(cplx, min_size=1, max_size=3), st.lists(rates, min_size=3, max_size=3))


@settings(max_examples=50, deadline=None)
@given(fams, fams, st.sampled_from([5.0, 10.0]))
def test_convolution_norm_inequality(fa, fb, nu):
    f, g = _pair(fa, fb)
    h, L = B.H_DEFAULT, 256 * 10
    F = B.sample(f, 0.0, h, L)
    G = B.sample(g, 0.0, h, L)
    FG = B.convolve(F, G)
    n = lambda s: B.weighted_norm(s, B.WeightedNormParams(nu), growth=(0.0, 0.0))
    assert n(FG) <= n(F) * n(G) + 1e-6


@settings(max_examples=20, deadline=None)
@given(fams, fams, cplx)
def test_convolution_bilinear(fa, fb, c):
    f, g = _pair(fa, fb)
    F, G = B.sample(f, 0.3, 1 / 32, 64), B.sample(g, 0.3, 1 / 32, 64)
    lhs = B.convolve(F + G.scale(c), G).values
    rhs = (B.convolve(F, G) + B.convolve(G, G).scale(c)).values
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert np.allclose(B.convolve(F, G).values, B.convolve(G, F).values, atol=1e-12)


def test_weighted_norm_warns_without_growth():
    F = B.sample(lambda p: np.ones_like(p), 0.0, 1 / 8, 16)
    with pytest.warns(RuntimeWarning):
        B.weighted_norm(F, B.WeightedNormParams(2.0))


# ------------------------------------------------------------ certificates

def test_certificate_monotone_and_crosses_one():
    eq = preset("cubic")
    Ks = [B.contraction_certificate(eq, -math.pi / 6, nu)["K"] for nu in B.NU_LADDER]
    assert all(a >= b for a, b in zip(Ks, Ks[1:]))
    assert Ks[0] > 1 > Ks[-1]
    assert B.choose_nu(eq, -math.pi / 6)["nu"] == 8.0


def test_certificate_failure():
    with pytest.raises(B.CertificateError):
        B.continue_Y0(preset("cubic"), -math.pi / 6, nu=1.0, P=2)


def test_singular_ray():
    with pytest.raises(B.SingularRayError):
        B.continue_Y0(preset("cubic"), 0.0, P=2)


def test_margin_error():
    Y = B.continue_Y0(preset("euler_minus"), 0.0, P=4)
    with pytest.raises(B.MarginError):
        B.laplace(Y, 0.3)


# ------------------------------------------------------------ germs and continuation

def test_borel_transform_euler():
    bs = B.borel_transform(solve_power_series(preset("euler_minus"), 30))
    for p in (0.1, 0.3, -0.2):
        assert abs(bs(p) - 1 / (1 + p)) < 1e-12


def test_euler_minus_pipeline():
    eq = preset("euler_minus")
    Y = B.continue_Y0(eq, 0.0)
    assert np.max(np.abs(Y.values - 1 / (1 + Y.p))) < 1e-12
    for x in (3, 5, 10):
        ref = complex(mpmath.e ** x * mpmath.e1(x))
        v = B.laplace(Y, x, detail=True)
        assert abs(v.value - ref) < 1e-10 and v.tail < 1e-10
    assert B.residual_check(lambda x: B.laplace(Y, x), eq, [3, 5, 10]) < 1e-10


def test_euler_lateral_sums():
    # f' + f = 1/x: the lateral sums differ by the Stokes jump 2 pi i e^{-x}
    eq = preset("euler")
    yp = B.laplace(B.continue_Y0(eq, 0.0, branch="+"), 10.0)
    ym = B.laplace(B.continue_Y0(eq, 0.0, branch="-"), 10.0)
    ref = complex(mpmath.e ** -10 * mpmath.ei(10))
    assert abs((yp + ym) / 2 - ref) < 1e-10
    assert abs(abs(yp - ym) - 2 * math.pi * math.exp(-10)) < 1e-10


def test_branch_symmetry():
    eq = preset("cubic")
    yp = B.continue_Y0(eq, 0.0, branch="+", P=4)
    ym = B.continue_Y0(eq, 0.0, branch="-", P=4)
    assert abs(yp.angle + ym.angle) < 1e-15
    assert np.max(np.abs(ym.values - np.conj(yp.values))) < 1e-10


def test_small_p_exponents(cubic_sectors):
    # Y_k transforms x^{-2k} f_k, so Y_k ~ p^{2k-1}; Y_0 ~ p since f_0 = O(x^-2)
    assert abs(B.small_p_exponent(cubic_sectors[0]) - 1) < 0.1
    for k in (1, 2):
        assert abs(B.small_p_exponent(cubic_sectors[k]) - (2 * k - 1)) < 0.1


def test_cubic_residual(cubic_sectors):
    eq = preset("cubic")
    x = 10 * cmath.exp(1j * math.pi / 6)
    for C in (0, 1):
        r = B.residual_check(lambda z: B.sum_transseries(z, C, cubic_sectors, eq), eq, [x])
        assert r < 1e-6


def test_C_difference_slope(cubic_sectors):
    eq = preset("cubic")
    xs = np.linspace(15, 35, 11) * cmath.exp(1j * math.pi / 6)
    d = [abs(B.sum_transseries(x, 1, cubic_sectors, eq) - B.sum_transseries(x, 0, cubic_sectors, eq))
         for x in xs]
    slope = np.polyfit(xs.real, np.log(d), 1)[0]
    assert abs(slope + 1) < 0.01


def test_raysamples_roundtrip(tmp_path):
    Y = B.continue_Y0(preset("euler_minus"), 0.0, P=2)
    path = str(tmp_path / "y0.csv")
    Y.save(path)
    Z = B.RaySamples.load(path)
    assert np.array_equal(Y.values, Z.values) and Z.h == Y.h and Z.nu == Y.nu


def test_grid_mismatch():
    a = B.sample(np.exp, 0.0, 1 / 8, 16)
    b = B.sample(np.exp, 0.0, 1 / 16, 32)
    with pytest.raises(B.GridError):
        a + b


# ------------------------------------------------------------ Stokes constants

@pytest.mark.parametrize("name,expected", [("euler", 2j * math.pi), ("erf_normal", 1j * math.sqrt(math.pi))])
def test_stokes_closed_forms(name, expected):
    S, res, _ = B.stokes_route1(preset(name))
    assert abs(abs(S) - abs(expected)) < 1e-6 * abs(expected)


def test_stokes_analytic_control():
    S, res, _ = B.stokes_route1(preset("analytic_control"))
    assert abs(S) < 1e-6


def test_balanced_average_samples():
    plus = B.sample(lambda p: 1 / (1 - p + 0j), 0.0, 1 / 8, 6)
    minus = plus.like(np.conj(plus.values))
    ba = B.balanced_average(plus, minus, Jmax=1)
    assert np.allclose(ba.values, (plus.values + minus.values) / 2)
