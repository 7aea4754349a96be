"""Acceptance criteria 1-11 at their stated tolerances.

Each criterion prints one line `CRITERION n PASS|FAIL (runtime) detail`; the
lines are repeated in the pytest terminal summary.  Run standalone with
`python3 tests/test_acceptance.py`.
"""
import cmath
import math
import random
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from transborel import borel as B
from transborel import multisum as MS
from transborel.formal_ode import preset, solve_exponential_corrections, solve_power_series, \
    verify_formal_solution
from transborel.multiseries import (
    GeneratorSet, Multiseries, compo_n_operator, fixed_point, naive_mul, reciprocal,
)
from transborel.transseries import (
    Mono, Transseries, X_MONO, cmp_monomial, compose, differentiate, integrate,
)

RESULTS = []


def record(n, ok, dt, detail):
    line = f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'} ({dt:6.2f} s) {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def timed(fn):
    t = time.perf_counter()
    ok, detail = fn()
    return ok, time.perf_counter() - t, detail


# ------------------------------------------------------------------ 1

GENS = [GeneratorSet.powers(Fraction(-1)),
        GeneratorSet.powers(Fraction(-1, 2), Fraction(-1, 3)),
        GeneratorSet([(0, -1), (-1, 0)])]


def _rand_ms(rng, g, N=20):
    co = {}
    for _ in range(rng.randint(1, 30)):
        k = [0] * len(g)
        for _ in range(rng.randint(0, 6)):
            k[rng.randrange(len(g))] += 1
        co[tuple(k)] = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    if all(c == 0 for c in co.values()):
        co[(0,) * len(g)] = Fraction(1)
    return Multiseries.from_coeffs(g, co, N)


def criterion_1():
    rng = random.Random(2024)
    bad = 0
    for i in range(200):
        g = GENS[i % 3]
        a, b, c = (_rand_ms(rng, g) for _ in range(3))
        ok = ((a * b) * c == a * (b * c) and a * (b + c) == a * b + a * c and a * b == b * a
              and a * b == naive_mul(a, b)
              and Multiseries.from_coeffs(a.gens, a.coeffs, a.N, a.lower) == a)
        if not a.is_zero():
            P = a * reciprocal(a)
            ok = ok and P == Multiseries.one(P.gens, P.N, P.lower)
        bad += not ok
    return bad == 0, f"200 random series, {bad} violations"


# ------------------------------------------------------------------ 2

def _frozen(res):
    final = res.value
    for k, c in final.coeffs.items():
        d = sum(k)
        if any(it.coeff(k) != c for n, it in enumerate(res.history) if n >= d + 1):
            return False
    return True


def criterion_2():
    X = GeneratorSet.powers(Fraction(-1))
    N = 30
    xs = lambda co: Multiseries.from_coeffs(X, {(k,): Fraction(c) for k, c in co.items()}, N)
    S1 = xs({1: 1, 2: -2, 3: Fraction(1, 3)})
    r1 = fixed_point(lambda R: (S1 * R).scale(-1), Multiseries.one(X, N), N, history=True)
    J = compo_n_operator(Multiseries.zero(X, N), [xs({1: 1}), xs({0: 3})])
    r2 = fixed_point(J, xs({1: 1}), N, history=True)
    ok = _frozen(r1) and _frozen(r2) and r1.value == reciprocal(S1 + Multiseries.one(X, N))
    return ok, f"reciprocal ({r1.iterations} it) and compo_n ({r2.iterations} it) frozen for d <= 30"


# ------------------------------------------------------------------ 3

X1, EX, X2 = X_MONO, Mono(0, {X_MONO: 1}), Mono(2)
LS = [{}, {X1: -1}, {X1: -2}, {X2: -1}, {X1: 1}, {EX: -1}, {X1: -1, Mono(Fraction(1, 2)): 1}]


def _rand_ts(r):
    d = {}
    for _ in range(r.randint(1, 4)):
        m = Mono(r.randint(-3, 2), r.choice(LS))
        d[m] = d.get(m, 0) + Fraction(r.choice([-3, -2, -1, 1, 2, 3]), r.choice([1, 2]))
    return Transseries.from_terms(d)


def _rand_from(r, monos):
    return Transseries.from_terms({r.choice(monos): r.choice([-2, -1, 1, 3]) for _ in range(r.randint(1, 3))})


LARGE = [Mono(1), Mono(2), Mono(Fraction(1, 2)), Mono(0, {X1: 1}), Mono(1, {X1: 1}), Mono(0, {EX: 1}),
         Mono(-1, {X2: 1})]
SMALL = [Mono(-1), Mono(-2), Mono(Fraction(-1, 2)), Mono(0, {X1: -1}), Mono(3, {X1: -1}),
         Mono(0, {EX: -1}), Mono(1, {X2: -1})]


def criterion_3():
    r = random.Random(7)
    x = Transseries.x()
    fails = {"antideriv": 0, "leibniz": 0, "chain": 0, "const": 0, "porder": 0}
    for i in range(100):
        T, T2 = _rand_ts(r), _rand_ts(r)
        I = integrate(T, 15)
        D = differentiate(I)
        fails["antideriv"] += not (D.equal_to_order(T) and D.covers(T))
        fails["const"] += I.constant_term() != 0
        fails["const"] += differentiate(T).is_zero() != (T - Transseries.const(T.constant_term())).is_zero()
        fails["leibniz"] += differentiate(T * T2) != differentiate(T) * T2 + T * differentiate(T2)
        s = _rand_from(r, SMALL)
        inner = r.choice([Transseries.x(2), x + Transseries.x(Fraction(1, 2)), x * 4])
        fails["chain"] += not differentiate(compose(s, inner, 15)).equal_to_order(
            compose(differentiate(s), inner, 15) * differentiate(inner))
        L1, L2, s1, s2 = (_rand_from(r, LARGE), _rand_from(r, LARGE), _rand_from(r, SMALL),
                          _rand_from(r, SMALL))
        c = lambda a, b: cmp_monomial(a.mag(), b.mag())
        fails["porder"] += not (c(L1, L2) == c(differentiate(L1), differentiate(L2))
                                and c(s1, s2) == c(differentiate(s1), differentiate(s2))
                                and c(differentiate(L1), differentiate(s1)) > 0)
    return sum(fails.values()) == 0, f"100 samples, N = 15, failures {fails}"


# ------------------------------------------------------------------ 4

def criterion_4():
    eq = preset("euler_minus")          # f' - f = -1/x, f = e^x E1(x)
    Y = B.continue_Y0(eq, 0.0)
    germ = float(np.max(np.abs(Y.values - 1 / (1 + Y.p))))
    # f' + f = 1/x has c_k = (k-1)! and germ 1/(1-p)
    bs = B.borel_transform(solve_power_series(preset("euler"), 30))
    germ_plus = max(abs(bs(p) - 1 / (1 - p)) for p in (0.1, 0.3, -0.2))
    errs = [abs(B.laplace(Y, x) - complex(mpmath.e ** x * mpmath.e1(x))) for x in (3, 5, 10)]
    res = B.residual_check(lambda z: B.laplace(Y, z), eq, [3, 5, 10])
    ok = germ < 1e-12 and germ_plus < 1e-12 and max(errs) < 1e-8 and res < 1e-8
    return ok, f"germ err {germ:.1e}/{germ_plus:.1e}, Laplace err {max(errs):.1e}, residual {res:.1e}"


# ------------------------------------------------------------------ 5

def criterion_5():
    eq = preset("cubic", a=1, b=0, beta=0)
    fam = solve_exponential_corrections(eq, 2, 25)
    rep = verify_formal_solution(eq, fam, 25)
    Ys = B.continue_sectors(eq, 2, -math.pi / 6, h=1 / 256)
    x = 10 * cmath.exp(1j * math.pi / 6)
    res = max(B.residual_check(lambda z: B.sum_transseries(z, C, Ys, eq), eq, [x]) for C in (0, 1))
    ex = [B.small_p_exponent(Ys[k]) for k in range(3)]
    # Y_k ~ p^{2k-1} for k >= 1; Y_0 ~ p because f_0 = O(x^-2)
    ok_exp = abs(ex[1] - 1) < 0.1 and abs(ex[2] - 3) < 0.1 and abs(ex[0] - 1) < 0.1
    ok = rep.order > 25 and res < 1e-6 and ok_exp
    return ok, (f"formal residual order {rep.order}, residual {res:.1e}, "
                f"exponents {', '.join(f'{e:.3f}' for e in ex)} (nu = {Ys[0].nu})")


# ------------------------------------------------------------------ 6

def criterion_6():
    est = B.stokes_measure(preset("cubic"))
    ctrl, _, _ = B.stokes_route1(preset("analytic_control"))
    ok = est.agreement < 0.05 and abs(ctrl) < 1e-6
    return ok, (f"S1 fit {est.S1.imag:.9f}i, lateral {est.S1_route2.imag:.9f}i, "
                f"rel diff {est.agreement:.1e}; control |S1| {abs(ctrl):.1e}")


# ------------------------------------------------------------------ 7

def criterion_7():
    rng = np.random.default_rng(11)
    h, L = B.H_DEFAULT, 256 * 10
    worst = -math.inf
    for _ in range(50):
        fs = []
        for _ in range(2):
            a = rng.normal(size=3) + 1j * rng.normal(size=3)
            r = rng.uniform(-2, 2, size=3)
            fs.append(B.sample(lambda p, a=a, r=r: sum(ai * np.exp(ri * p) for ai, ri in zip(a, r)), 0.0, h, L))
        fg = B.convolve(*fs)
        for nu in (5.0, 10.0):
            n = lambda s: B.weighted_norm(s, B.WeightedNormParams(nu), growth=(0.0, 0.0))
            worst = max(worst, n(fg) - n(fs[0]) * n(fs[1]))
    Ks = [B.contraction_certificate(preset("cubic"), -math.pi / 6, nu)["K"] for nu in B.NU_LADDER]
    mono = all(a >= b for a, b in zip(Ks, Ks[1:]))
    return worst <= 1e-6 and mono, (f"max ||f*g|| - ||f|| ||g|| = {worst:.2e} on 50 pairs; "
                                   f"K(nu) monotone {mono}: {', '.join(f'{k:.3g}' for k in Ks)}")


# ------------------------------------------------------------------ 8

def criterion_8():
    c = MS.recrel_coeffs(80).coeffs
    th = MS.growth_exponent(c, 40, 60)
    bt = MS.verify_borelt1(30)
    ok = c[3] == Fraction(1, 2) and c[4] == Fraction(3, 2) and abs(th - 1) < 0.1 and bt["germ_ok"]
    return ok, f"c3 = {c[3]}, c4 = {c[4]}, theta = {th:.4f}, Borel identity exact to order {bt['germ_order']}"


# ------------------------------------------------------------------ 9

def criterion_9():
    d = MS.decompose(N=80)
    ok = (d.theta1 is not None and 0.4 <= d.theta1 <= 0.6 and d.reconstruction_exact()
          and d.part2_borel_ratio_max < 3)
    return ok, (f"(a, b) = ({float(d.a):.12f}, {d.b}), theta1 = {d.theta1:.3f}, "
                f"part2 max Borel ratio {d.part2_borel_ratio_max:.3f}, exact {d.reconstruction_exact()}")


# ------------------------------------------------------------------ 10

def criterion_10():
    dual = max(abs(MS.laplace_dual(z1, x) - math.exp(-z1 * math.sqrt(x)))
               for z1 in (0.5, 1.0, 2.0) for x in (1.0, 2.0, 4.0))
    scal = max(MS.kernel_scaling_defect(z1, z2, lam)
               for z1, z2, lam in [(1.0, 1.0, 2.0), (0.5, 2.0, 0.5), (2.0, 0.7, 3.0)])
    return dual < 1e-4 and scal < 1e-6, f"Laplace dual max err {dual:.1e} on 3x3 grid, scaling defect {scal:.1e}"


# ------------------------------------------------------------------ 11

def criterion_11():
    est = B.stokes_measure(preset("cubic"), x=10.0)
    v, tail = est.detail["balanced"], est.detail["balanced_tail"]
    ok = abs(v.imag) < 1e-6 and tail < 1e-6
    return ok, f"L Y0^ba(10) = {v.real:.15f} {v.imag:+.1e}i, tail bound {tail:.1e} (Jmax = 2)"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]
BUDGET = {1: 10, 4: 5, 5: 60, 6: 120, 9: 60}


@pytest.mark.parametrize("n", range(1, 12))
def test_criterion(n):
    ok, dt, detail = timed(CRITERIA[n - 1])
    if n in BUDGET:
        detail += f"; budget {BUDGET[n]} s"
        ok = ok and dt < BUDGET[n]
    assert record(n, ok, dt, detail), RESULTS[-1]


if __name__ == "__main__":
    for n in range(1, 12):
        ok, dt, detail = timed(CRITERIA[n - 1])
        if n in BUDGET:
            ok = ok and dt < BUDGET[n]
        record(n, ok, dt, detail)
