import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from transborel.formal_ode import (
    PRESETS, FormalODEError, NormalFormScalarODE, ShapeError, coefficients_csv, eikonal_residual,
    erfmix_wkb, linearization_constant, linearization_residual, load_equation,
    power_series_by_recurrence, preset, solve_exponential_corrections, solve_power_series,
    solve_system_transseries, verify_formal_solution,
)


def test_euler_factorials():
    c = solve_power_series(preset("euler"), 20)
    assert c[0] == 0
    assert all(c[k] == math.factorial(k - 1) for k in range(1, 21))
    assert verify_formal_solution(preset("euler"), c, 20).ok


def test_euler_minus_alternating():
    c = solve_power_series(preset("euler_minus"), 15)
    assert all(c[k] == (-1) ** (k - 1) * math.factorial(k - 1) for k in range(1, 16))


def test_residual_detects_error():
    eq = preset("euler")
    c = solve_power_series(eq, 20)
    c[3] += 1
    assert not verify_formal_solution(eq, c, 20).ok


def test_iteration_freezing():
    c, hist = solve_power_series(preset("cubic"), 15, history=True)
    for n, it in enumerate(hist):
        for k in range(n + 1):
            assert it[k] == c[k]


def test_two_routes_agree():
    for name, kw in [("cubic", {}), ("cubic", {"a": Fraction(1, 2), "b": Fraction(1, 3), "beta": Fraction(1, 2)}),
                     ("abel", {}), ("erf_normal", {}), ("analytic_control", {})]:
        eq = preset(name, **kw)
        assert solve_power_series(eq, 18) == power_series_by_recurrence(eq, 18)


def test_analytic_control_terminates():
    c = solve_power_series(preset("analytic_control"), 20)
    assert c[2] == 1 and all(v == 0 for i, v in enumerate(c) if i != 2)


def test_cubic_family_residual():
    eq = preset("cubic", a=1, b=0)
    fam = solve_exponential_corrections(eq, 3, 25)
    rep = verify_formal_solution(eq, fam, 25)
    assert rep.ok and rep.order > 25
    assert fam.series(1)[0] == 1


def test_cubic_family_residual_nonzero_beta():
    eq = preset("cubic", a=Fraction(1, 2), b=Fraction(1, 3), beta=Fraction(1, 2))
    fam = solve_exponential_corrections(eq, 3, 18)
    assert verify_formal_solution(eq, fam, 18).ok


def test_linearization_constant():
    eq = preset("cubic", a=1, b=Fraction(1, 2))
    fam = solve_exponential_corrections(eq, 3, 18)
    gk = linearization_constant(eq, fam)
    assert not linearization_residual(eq, fam, gk)
    gk[1][5] += 1
    assert linearization_residual(eq, fam, gk)


@pytest.mark.parametrize("t", [2, Fraction(-1, 3), 5])
def test_gauge_covariance(t):
    eq = preset("cubic", a=1, b=1)
    f1 = solve_exponential_corrections(eq, 3, 10)
    ft = solve_exponential_corrections(eq, 3, 10, gauge=t)
    for k in range(4):
        assert ft.series(k) == [c * Fraction(t) ** k for c in f1.series(k)]
        assert ft.rescaled(t).series(k) == f1.series(k)
    # the recombined transseries is unchanged under (C, f_k) -> (C/t, t^k f_k)
    a = f1.transseries(C=[1], N=8)
    b = ft.transseries(C=[Fraction(1) / Fraction(t)], N=8)
    assert a.equal_to_order(b)


@pytest.mark.parametrize("name", ["p1", "oscillator", "p2_first"])
def test_second_order_systems(name):
    eq = preset(name)
    fam = solve_system_transseries(eq.system, 0.0, 2, 12)
    assert verify_formal_solution(eq.system, fam, 12).ok


def test_p2_second_normalizes():
    eq = preset("p2_second", alpha=Fraction(1, 3))
    assert len(eq.system.lambdas) == 2


def test_erfmix_wkb():
    w = erfmix_wkb(10)
    w1, w2 = w["w1"], w["w2"]
    assert (w1[2], w1[1], w1["log"], w1[-1]) == (-1, 1, Fraction(1, 2), Fraction(-1, 2))
    assert (w2[1], w2["log"], w2[-1]) == (-1, Fraction(-1, 2), Fraction(1, 2))
    assert eikonal_residual(w["w1_prime"], 10) == {}
    assert eikonal_residual(w["w2_prime"], 10) == {}


def test_erfmix_series_residual():
    from transborel.multisum import recrel_coeffs
    eq = preset("erfmix")
    c = recrel_coeffs(21).coeffs      # order 20 needs c_21 (2x f' term)
    assert verify_formal_solution(eq, c, 20).ok


def test_presets_listed():
    for name in PRESETS:
        preset(name)
    with pytest.raises(FormalODEError):
        preset("nope")


def test_shape_validation():
    with pytest.raises(ShapeError):
        NormalFormScalarODE(0, 0, {2: 1})
    with pytest.raises(ShapeError):
        NormalFormScalarODE(1, 0, {1: 1})          # forcing must be O(x^-2)
    with pytest.raises(ShapeError):
        NormalFormScalarODE(1, 0, {2: 1}, {(1, 1): 1})


def test_load_equation_roundtrip(tmp_path):
    eq = preset("cubic", a=2, b=Fraction(1, 3), beta=Fraction(-1, 2))
    p = tmp_path / "eq.json"
    p.write_text(json.dumps(eq.to_dict()))
    eq2 = load_equation(str(p))
    assert solve_power_series(eq2, 10) == solve_power_series(eq, 10)
    assert load_equation({"preset": "cubic", "params": {"a": 2}}).g[(0, 2)] == 2


def test_csv():
    text = coefficients_csv([0, 1, Fraction(1, 3)], start=1)
    assert text.splitlines()[0] == "k,exact,float"
    assert "1/3" in text


@settings(max_examples=15, deadline=None)
@given(st.fractions(-3, 3, max_denominator=5), st.fractions(-3, 3, max_denominator=5),
       st.fractions(-2, 2, max_denominator=4))
def test_random_cubic_family(a, b, beta):
    eq = preset("cubic", a=a, b=b, beta=beta)
    fam = solve_exponential_corrections(eq, 2, 10)
    assert verify_formal_solution(eq, fam, 10).ok
    assert solve_power_series(eq, 10) == fam.series(0)
