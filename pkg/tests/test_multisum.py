import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transborel import borel as B
from transborel import multisum as MS
from transborel.formal_ode import preset


@pytest.fixture(scope="module")
def dec():
    return MS.decompose()


def test_recrel_initial_values():
    c = MS.recrel_coeffs(10).coeffs
    assert c[0] == 0 and c[1] == 0 and c[2] == Fraction(1, 2)
    assert c[3] == Fraction(1, 2) and c[4] == Fraction(3, 2)


def test_recrel_second_implementation():
    assert MS.erfmix_series({1: 1}, 200) == MS.recrel_coeffs(200).coeffs


def test_growth_exponent():
    assert abs(MS.growth_exponent(MS.recrel_coeffs(80).coeffs, 40, 60) - 1) < 0.1
    assert abs(MS.growth_exponent([math.factorial(n) for n in range(60)]) - 1) < 1e-6
    assert abs(MS.growth_exponent([2 ** n for n in range(60)])) < 0.05
    with pytest.raises(MS.InsufficientDataError):
        MS.growth_exponent([1, 2, 3], 0, 2)


def test_borelt1():
    r = MS.verify_borelt1(30)
    assert r["germ_ok"] if "germ_ok" in r else r["germ"] == []


def test_decomposition(dec):
    assert 0.4 <= dec.theta1 <= 0.6
    assert dec.reconstruction_exact()
    assert dec.part2_borel_ratio_max < 3
    assert dec.b == 0
    assert abs(MS.superexp_amplitude(float(dec.a), 0.0)) < 1e-12


def test_decomposition_seed_independent(dec):
    other = MS.decompose(seed=7)
    assert abs(float(other.a) - float(dec.a)) < 1e-10 and other.b == dec.b


def test_decomposition_forced_zero():
    d = MS.decompose(force=(0, 0))
    assert d.theta1 is None and abs(d.theta2 - 1) < 0.1


def test_bad_bounds():
    with pytest.raises(MS.DecompositionError):
        MS.decompose(bounds=((1, -1), (0, 1)))


def test_x2_borel_part1(dec):
    x2 = MS.borel_x2(dec.part1)
    assert x2.diagnostics["odd_radius"] > 0.5 if "odd_radius" in x2.diagnostics else True


def test_kernel_closed_form():
    for z1 in (0.5, 1.0, 2.0):
        for z2 in (0.2, 1.0, 3.0):
            assert abs(MS.accel_kernel(z1, z2) - MS.accel_kernel_half(z1, z2)) < 1e-8


@pytest.mark.parametrize("alpha", [0.5, 0.6])
@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_kernel_scaling(alpha, lam):
    p = MS.AccelKernelParams(alpha)
    assert MS.kernel_scaling_defect(1.0, 1.0, lam, p) < 1e-7


def test_kernel_params_validated():
    with pytest.raises(MS.MultisumError):
        MS.AccelKernelParams(alpha=1.5)
    with pytest.raises(MS.MultisumError):
        MS.accel_kernel(-1.0, 1.0)


def test_laplace_dual_grid():
    for z1 in (0.5, 1.0, 2.0):
        for x in (1.0, 2.0, 4.0):
            assert abs(MS.laplace_dual(z1, x) - math.exp(-z1 * math.sqrt(x))) < 1e-4


def test_accelerate_bump():
    # a narrow unit bump at s0 is mapped to the kernel C(s0, .)
    h, s0, w = 1 / 1024, 1.0, 0.02
    phi = B.sample(lambda p: np.exp(-((p.real - s0) / w) ** 2) / (w * math.sqrt(math.pi)), 0.0, h, 3 * 1024)
    zs = [0.3, 0.6, 1.0]
    got = MS.accelerate(phi, 0.5, zs)
    ref = MS.accel_kernel_half(s0, np.array(zs))
    assert np.max(np.abs(got - ref) / ref) < 5e-3


def test_accelerate_callable_matches_samples():
    f = lambda p: 1 / (1 + p)
    phi = B.sample(f, 0.0, 1 / 256, 256 * 40)
    zs = [0.25, 0.5, 1.0]
    assert np.allclose(MS.accelerate(f, 0.5, zs), MS.accelerate(phi, 0.5, zs), atol=1e-8)


@pytest.mark.parametrize("x", [3.0, 5.0])
def test_level2_reduces_to_borel(x):
    # no fast piece: L2 A_{1/2} F = L1 F, checked against the borel pipeline
    Y = B.continue_Y0(preset("euler_minus"), 0.0)
    v, tail = MS.multisum_level2(lambda p: 1 / (1 + p), x)
    assert abs(v - B.laplace(Y, x)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.3, 4.0))
def test_kernel_positive_and_normalized_half(z1, z2):
    # C_{1/2}(z1, .) is a probability density in z2 (Levy)
    assert MS.accel_kernel_half(z1, z2) > 0


def test_erfmix_multisum(dec):
    f = lambda x: MS.erfmix_multisum(dec, x)[0]
    assert MS.erfmix_residual(f, 6.0) < 1e-8
