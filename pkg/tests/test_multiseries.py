import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from transborel.multiseries import (
    ContractivityError, GeneratorSet, Multiseries, MultiseriesError, compo_n_operator,
    compare_real, divide, fixed_point, infinite_sum, lex_sign, minimizer_set, much_less,
    mul, naive_mul, product_form, reciprocal,
)
from conftest import GEN_FAMILIES, random_series

X = GeneratorSet.powers(Fraction(-1))


def xs(coeffs, N=20):
    return Multiseries.from_coeffs(X, {(k,): c for k, c in coeffs.items()}, N)


def test_product_small_example():
    a = xs({0: 1, 1: 1})
    b = xs({0: 1, 1: -1})
    assert a * b == xs({0: 1, 2: -1})


def test_reciprocal_geometric():
    r = reciprocal(xs({0: 1, 1: -1}))
    assert all(r.coeff((k,)) == 1 for k in range(21))


def test_equivalent_indices_collect():
    g = GeneratorSet.powers(Fraction(-1, 2), Fraction(-1, 3))
    a = Multiseries.from_coeffs(g, {(2, 0): 1}, 20)
    b = Multiseries.from_coeffs(g, {(0, 3): 1}, 20)
    assert a == b
    s = Multiseries.from_coeffs(g, {(2, 0): 1, (0, 3): 2}, 20)
    assert len(s) == 1 and s.coeff((2, 0)) == 3


def test_exact_series_kept_exact():
    a = Multiseries.monomial(X, (2,), None, 3)
    assert a.exact
    assert reciprocal(a).coeff((-2,)) == Fraction(1, 3)


def test_divide():
    a = xs({0: 2, 1: 3})
    b = xs({0: 1, 2: 1})
    assert (divide(a, b) * b).equal_to_order(a)


def test_product_form_negative_offsets():
    g = GeneratorSet([(0, -1), (-1, 0)])
    T = Multiseries.from_coeffs(g, {(3, 0): 2, (0, 2): 1, (1, 1): 5}, 20)
    c, k1, S1 = product_form(T)
    assert c != 0
    P = T * reciprocal(T)
    assert P == Multiseries.one(P.gens, P.N, P.lower)


def test_reciprocal_of_zero():
    with pytest.raises(ZeroDivisionError):
        reciprocal(Multiseries.zero(X, 10))


def test_infinite_sum_exp():
    # e^{x^{-1}} coefficients 1/k!
    import math
    e = infinite_sum(lambda n: Fraction(1, math.factorial(n)), xs({1: 1}))
    assert all(e.coeff((k,)) == Fraction(1, math.factorial(k)) for k in range(21))


def test_infinite_sum_rejects_large():
    with pytest.raises(MultiseriesError):
        infinite_sum([1] * 30, xs({0: 1, 1: 1}))


def test_compare():
    a, b = xs({1: 1}), xs({2: 5})
    assert much_less(b, a) and not much_less(a, b)
    assert compare_real(xs({0: 1}), xs({0: 2})) == "<"
    assert compare_real(xs({0: 1, 3: 1}), xs({0: 1})) == ">"
    assert compare_real(a, a) == "="


def test_json_roundtrip():
    g = GEN_FAMILIES[1]
    s = random_series(random.Random(3), g)
    assert Multiseries.from_json(s.to_json()) == s


def test_fixed_point_non_contractive_raises():
    with pytest.raises(ContractivityError):
        fixed_point(lambda y: y + xs({0: 1}), xs({0: 1}), 10, max_iter=5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(0, 10**6))
def test_ring_axioms(fam, seed):
    rng = random.Random(seed)
    g = GEN_FAMILIES[fam]
    a, b, c = (random_series(rng, g) for _ in range(3))
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a
    assert a + (b + c) == (a + b) + c
    assert (a - a).is_zero()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(0, 10**6))
def test_mul_matches_naive(fam, seed):
    rng = random.Random(seed)
    g = GEN_FAMILIES[fam]
    a, b = random_series(rng, g), random_series(rng, g)
    assert mul(a, b) == naive_mul(a, b)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(0, 10**6))
def test_collect_idempotent(fam, seed):
    s = random_series(random.Random(seed), GEN_FAMILIES[fam])
    once = Multiseries.from_coeffs(s.gens, s.coeffs, s.N, s.lower)
    assert once == s
    assert Multiseries.from_coeffs(once.gens, once.coeffs, once.N, once.lower) == once


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-4, 6), st.integers(-4, 6), st.integers(-4, 6)),
                min_size=1, max_size=25))
def test_minimizer_set_incomparable(pts):
    m = minimizer_set(pts)
    assert m
    le = lambda a, b: all(x <= y for x, y in zip(a, b))
    for a in m:
        assert not any(le(b, a) and b != a for b in m)
    for p in pts:
        assert any(le(a, p) for a in m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2), st.integers(0, 10**6))
def test_reciprocal_identity(fam, seed):
    a = random_series(random.Random(seed), GEN_FAMILIES[fam])
    P = a * reciprocal(a)
    assert P == Multiseries.one(P.gens, P.N, P.lower)


def _assert_freezing(res, N):
    final = res.value
    for k, c in final.coeffs.items():
        d = sum(k)
        for n, it in enumerate(res.history):
            if n >= d + 1:
                assert it.coeff(k) == c, (k, n)


def test_freezing_reciprocal():
    # R = 1 - S1 R with S1 = x^{-1} - 2 x^{-2}; degree d final after d+1 steps
    N = 30
    S1 = xs({1: 1, 2: -2}, N)
    res = fixed_point(lambda R: (S1 * R).scale(-1), Multiseries.one(X, N), N, history=True)
    _assert_freezing(res, N)
    assert res.value == reciprocal(S1 + Multiseries.one(X, N))


def test_freezing_compo_n():
    # y = x^{-1} + x^{-1} y^2 + 3 y^3
    N = 30
    St = xs({1: 1}, N)
    J = compo_n_operator(Multiseries.zero(X, N), [xs({1: 1}, N), xs({0: 3}, N)])
    res = fixed_point(J, St, N, history=True)
    _assert_freezing(res, N)
    y = res.value
    assert (St + xs({1: 1}, N) * y * y + (y * y * y).scale(3)).equal_to_order(y)


def test_magnitude_stabilizes():
    N = 20
    S1 = xs({1: 1, 2: -2}, N)
    res = fixed_point(lambda R: (S1 * R).scale(-1), Multiseries.one(X, N), N, history=True)
    mags = [h.mag() for h in res.history]
    assert mags[-1] == mags[-2] == res.value.mag()


def test_lex_sign():
    assert lex_sign((0, -1)) < 0 and lex_sign((1, -5)) > 0 and lex_sign((0, 0)) == 0
