"""Formal transseries solutions of rank-one normal-form ODEs.

Scalar convention (the one the Borel analysis uses):

    f' + lam*f - (beta/x) f = F0(x) + sum_{k,l} g_{kl} x^{-k} f^l

System convention:  y_i' = -lam_i y_i + (alpha_i/x) y_i + g_i(x^{-1}, y),
g_i = sum g_{i,k,l} x^{-k} y^l with l a multi-index (l = 0 is forcing).

A transseries family is  y = sum_k C^k exp(-(lam.k) x) x^{alpha.k} s_k(x)
with s_k power series in 1/x, computed by exact coefficient recurrences;
the scalar case is the n = 1 system with alpha = beta.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .multiseries import GeneratorSet, Multiseries, fixed_point, _div
from . import transseries as ts
from .transseries import Mono, Transseries, X_MONO


class FormalODEError(Exception):
    pass


class ShapeError(FormalODEError):
    pass


class ResonanceError(FormalODEError):
    pass


def _q(c):
    if isinstance(c, str):
        if "j" in c:
            return complex(c)
        return Fraction(c)
    if isinstance(c, (list, tuple)):
        return complex(c[0], c[1])
    if isinstance(c, float):
        return Fraction(c).limit_denominator(10 ** 12) if c == round(c, 12) else c
    if isinstance(c, complex):
        return c
    return Fraction(c)


def _exact(c) -> bool:
    return isinstance(c, (int, Fraction))


def _cstr(c):
    if isinstance(c, complex):
        return [c.real, c.imag]
    return str(c)


# ---------------------------------------------------------------- equations


class NormalFormScalarODE:
    """f' + lam f - (beta/x) f = sum_k F0k x^{-k} + sum g_kl x^{-k} f^l."""

    def __init__(self, lam=1, beta=0, forcing=None, g=None, name=None,
                 allow_order_one_forcing=False, meta=None):
        self.lam = _q(lam)
        self.beta = _q(beta)
        self.forcing = {int(k): _q(c) for k, c in (forcing or {}).items() if c != 0}
        self.g = {(int(k), int(l)): _q(c) for (k, l), c in (g or {}).items() if c != 0}
        self.name = name
        self.allow_order_one_forcing = allow_order_one_forcing
        self.meta = dict(meta or {})
        self.validate()

    def validate(self):
        if self.lam == 0:
            raise ShapeError("lambda must be nonzero")
        lo = 1 if self.allow_order_one_forcing else 2
        for k in self.forcing:
            if k < lo:
                raise ShapeError(f"forcing term x^-{k} violates F0 = O(x^-{lo})")
        for (k, l) in self.g:
            if l < 1 or k < 0:
                raise ShapeError(f"bad nonlinearity index ({k},{l})")
            if l == 1 and k < 2:
                raise ShapeError("g01 and g11 must vanish (linear part is normalized)")

    @property
    def m(self) -> int:
        return 1 - math.floor(self.beta) if _exact(self.beta) else 1

    def nonlinear_degree(self) -> int:
        return max([l for (_, l) in self.g] + [1])

    def to_system(self) -> "NormalFormSystem":
        g = {}
        for k, c in self.forcing.items():
            g[(0, k, (0,))] = c
        for (k, l), c in self.g.items():
            g[(0, k, (l,))] = c
        return NormalFormSystem([self.lam], [self.beta], g, name=self.name)

    def to_dict(self):
        return {"lambda": _cstr(self.lam), "beta": _cstr(self.beta),
                "forcing": [[k, _cstr(c)] for k, c in sorted(self.forcing.items())],
                "g": [[k, l, _cstr(c)] for (k, l), c in sorted(self.g.items())],
                "name": self.name}

    @classmethod
    def from_dict(cls, d):
        forcing = {int(k): _q(c) for k, c in d.get("forcing", [])}
        g = {(int(k), int(l)): _q(c) for k, l, c in d.get("g", [])}
        return cls(d.get("lambda", 1), d.get("beta", 0), forcing, g, name=d.get("name"),
                   allow_order_one_forcing=any(k < 2 for k in forcing))

    def __repr__(self):
        return (f"NormalFormScalarODE(lam={self.lam}, beta={self.beta}, F0={self.forcing}, "
                f"g={self.g})")


class NormalFormSystem:
    """y' = -diag(lam) y + diag(alpha) y / x + g(1/x, y)."""

    def __init__(self, lambdas, alphas, g, name=None, meta=None):
        self.lambdas = [_q(c) for c in lambdas]
        self.alphas = [_q(c) for c in alphas]
        self.n = len(self.lambdas)
        if len(self.alphas) != self.n:
            raise ShapeError("lambdas and alphas differ in length")
        self.g = {(int(i), int(k), tuple(int(x) for x in l)): _q(c)
                  for (i, k, l), c in g.items() if c != 0}
        self.name = name
        self.meta = dict(meta or {})
        for (i, k, l) in self.g:
            if len(l) != self.n or not 0 <= i < self.n:
                raise ShapeError(f"bad g index {(i, k, l)}")

    @property
    def m(self) -> List[int]:
        return [1 - math.floor(a.real if isinstance(a, complex) else a) for a in self.alphas]

    def decaying(self, angle=0.0) -> List[int]:
        """Components whose exponential exp(-lam_i x) decays along arg x = angle."""
        out = []
        for i, lam in enumerate(self.lambdas):
            z = complex(lam) * complex(math.cos(angle), math.sin(angle))
            if z.real > 1e-12:
                out.append(i)
        return out

    def check_nonresonance(self, K: int, comps=None):
        comps = list(range(self.n)) if comps is None else comps
        for k in _sectors(self.n, comps, K):
            lk = sum(ki * li for ki, li in zip(k, self.lambdas))
            for i in range(self.n):
                unit = tuple(int(j == i) for j in range(self.n))
                if k != unit and abs(complex(lk - self.lambdas[i])) < 1e-12 and sum(k) > 0:
                    raise ResonanceError(f"lambda.k = lambda_{i} for k = {k}")

    def to_dict(self):
        return {"system": {"lambdas": [_cstr(c) for c in self.lambdas],
                           "alphas": [_cstr(c) for c in self.alphas],
                           "g": [[i, k, list(l), _cstr(c)] for (i, k, l), c in sorted(self.g.items(),
                                                                                       key=str)]},
                "name": self.name}

    @classmethod
    def from_dict(cls, d):
        s = d["system"]
        g = {(int(i), int(k), tuple(l)): _q(c) for i, k, l, c in s.get("g", [])}
        return cls(s["lambdas"], s["alphas"], g, name=d.get("name"))


class SecondOrderEquation:
    """h'' + P(x) h' + Q(x) h = sum n_{k,l} x^{-k} h^l, P, Q given as {k: c} for x^{-k}."""

    def __init__(self, P, Q, rhs, name=None, meta=None):
        self.P = {int(k): _q(c) for k, c in P.items() if c != 0}
        self.Q = {int(k): _q(c) for k, c in Q.items() if c != 0}
        self.rhs = {(int(k), int(l)): _q(c) for (k, l), c in rhs.items() if c != 0}
        self.name = name
        self.meta = dict(meta or {})
        self.system = None

    def residual_power_series(self, coeffs: Sequence, N: int) -> List:
        """Residual coefficients (x^{-j}, j <= N) of h = sum coeffs[j] x^{-j}."""
        h = {j: c for j, c in enumerate(coeffs) if c != 0}
        d1 = {j + 1: -j * c for j, c in h.items() if j}
        d2 = {j + 1: -j * c for j, c in d1.items()}
        res: Dict[int, object] = {}

        def add(series, scale=1):
            for j, c in series.items():
                if j <= N:
                    res[j] = res.get(j, 0) + scale * c

        add(d2)
        add(_pmul(self.P, d1, N))
        add(_pmul(self.Q, h, N))
        powers = {0: {0: 1}}
        for (k, l), c in self.rhs.items():
            while max(powers) < l:
                powers[max(powers) + 1] = _pmul(powers[max(powers)], h, N + 2)
            add(_pmul({k: c}, powers[l], N), -1)
        return [res.get(j, 0) for j in range(N + 1)]


def _pmul(a: Dict[int, object], b: Dict[int, object], N) -> Dict[int, object]:
    out: Dict[int, object] = {}
    for i, x in a.items():
        for j, y in b.items():
            if i + j <= N:
                out[i + j] = out.get(i + j, 0) + x * y
    return out


# ---------------------------------------------------------------- families


def _sectors(n: int, comps, K: int) -> List[Tuple[int, ...]]:
    out = []
    for tot in range(K + 1):
        for c in itertools.combinations_with_replacement(sorted(comps), tot):
            k = [0] * n
            for i in c:
                k[i] += 1
            out.append(tuple(k))
    return out


class TransseriesFamily:
    """Sectors k -> per component coefficient lists of s_k (x^{-j}, j = 0..N)."""

    def __init__(self, lambdas, alphas, sectors, N, K, gauge=1):
        self.lambdas = list(lambdas)
        self.alphas = list(alphas)
        self.sectors = sectors
        self.N = N
        self.K = K
        self.gauge = gauge

    @property
    def n(self):
        return len(self.lambdas)

    def series(self, k, i=0) -> List:
        if isinstance(k, int):
            k = (k,)
        return self.sectors[tuple(k)][i]

    def __getitem__(self, k):
        return self.series(k)

    def exponent(self, k):
        """(lam.k, alpha.k): sector k carries exp(-(lam.k) x) x^{alpha.k}."""
        return (sum(a * b for a, b in zip(k, self.lambdas)),
                sum(a * b for a, b in zip(k, self.alphas)))

    def rescaled(self, t) -> "TransseriesFamily":
        """Gauge change C -> t C: s_k -> t^{-|k|} s_k."""
        sec = {k: [[c * _div(1, t) ** sum(k) for c in comp] for comp in v]
               for k, v in self.sectors.items()}
        return TransseriesFamily(self.lambdas, self.alphas, sec, self.N, self.K,
                                 self.gauge * _div(1, t))

    def evaluate_sector(self, k, i, x):
        """Truncated s_k(x) as a number (optimal use is up to the caller)."""
        return sum(c * x ** (-j) for j, c in enumerate(self.series(k, i)))

    def transseries(self, i=0, C=None, N=None) -> Transseries:
        """Recombined component as a Transseries (rational lambda, alpha)."""
        C = C if C is not None else [1] * self.n
        terms = {}
        for k, comps in self.sectors.items():
            lk, ak = self.exponent(k)
            if not (_exact(lk) and _exact(ak)):
                raise FormalODEError("recombination needs rational lambda and alpha")
            ck = 1
            for kk, cc in zip(k, C):
                ck = ck * cc ** kk
            e = {X_MONO: -lk} if lk else {}
            for j, c in enumerate(comps[i]):
                if c != 0:
                    m = Mono(ak - j, e)
                    terms[m] = terms.get(m, 0) + ck * c
        return Transseries.from_terms(terms, N)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sector", "component", "j", "exact", "float"])
        for k in sorted(self.sectors):
            for i, comp in enumerate(self.sectors[k]):
                for j, c in enumerate(comp):
                    w.writerow([";".join(map(str, k)), i, j, _cstr(c) if not isinstance(c, complex)
                                else f"{c.real}{c.imag:+}j", _float_str(c)])
        return buf.getvalue()


def _float_str(c):
    if isinstance(c, complex):
        return f"{c.real:.17g}{c.imag:+.17g}j"
    return f"{float(c):.17g}"


def _sector_mul(A, B, sectors_set, K, N):
    out = {}
    for ka, va in A.items():
        for kb, vb in B.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            if sum(k) > K or k not in sectors_set:
                continue
            acc = out.setdefault(k, [0] * (N + 2))
            for ja, a in enumerate(va):
                if a == 0:
                    continue
                for jb in range(min(len(vb), N + 2 - ja)):
                    b = vb[jb]
                    if b != 0:
                        acc[ja + jb] += a * b
    return out


def solve_sectors(sys: NormalFormSystem, comps, K: int, N: int, gauge=1) -> TransseriesFamily:
    """Exact coefficients of every sector |k| <= K supported on comps.

    For sector k and component i,
        s' + (lam_i - lam.k) s + ((alpha.k - alpha_i)/x) s = [g_i]_k,
    i.e. (lam_i - lam.k) s_j = R_j + (j - 1 - alpha.k + alpha_i) s_{j-1};
    for k = e_i the first term vanishes, s_0 = gauge fixes the C-gauge and
    s_j = R_{j+1}/(alpha.k - alpha_i - j).  The right sides are causal in
    (|k|, j), so whole-array Picard passes freeze one level per pass.
    """
    n = sys.n
    sys.check_nonresonance(K, comps)
    sectors = _sectors(n, comps, K)
    sset = set(sectors)
    s = {k: [[0] * (N + 2) for _ in range(n)] for k in sectors}
    maxdeg = max([sum(l) for (_, _, l) in sys.g] + [1])
    for p in range(2 * (N + K) + 10):
        # y_c as sector series
        ys = [{k: s[k][c] for k in sectors} for c in range(n)]
        powcache = {}

        def ypow(c, e):
            if (c, e) not in powcache:
                if e == 0:
                    powcache[(c, e)] = {sectors[0]: [1] + [0] * (N + 1)}
                elif e == 1:
                    powcache[(c, e)] = ys[c]
                else:
                    powcache[(c, e)] = _sector_mul(ypow(c, e - 1), ys[c], sset, K, N)
            return powcache[(c, e)]

        monocache = {}

        def ymono(l):
            if l not in monocache:
                out = {sectors[0]: [1] + [0] * (N + 1)}
                for c, e in enumerate(l):
                    if e:
                        out = _sector_mul(out, ypow(c, e), sset, K, N)
                monocache[l] = out
            return monocache[l]

        R = {k: [[0] * (N + 2) for _ in range(n)] for k in sectors}
        for (i, kp, l), c in sys.g.items():
            for k, v in ymono(l).items():
                row = R[k][i]
                for j, a in enumerate(v):
                    if a != 0 and j + kp <= N + 1:
                        row[j + kp] += c * a
        new = {}
        for k in sectors:
            lk = sum(a * b for a, b in zip(k, sys.lambdas))
            ak = sum(a * b for a, b in zip(k, sys.alphas))
            comps_k = []
            for i in range(n):
                Ri = R[k][i]
                d = sys.lambdas[i] - lk
                a = ak - sys.alphas[i]
                out = [0] * (N + 2)
                unit = sum(k) == 1 and k[i] == 1
                if unit:
                    if Ri[1] != 0:
                        raise ResonanceError(f"logarithmic term forced in sector {k}")
                    out[0] = gauge
                    for j in range(1, N + 1):
                        den = a - j
                        out[j] = _div(Ri[j + 1], 1) / den if den != 0 else 0
                else:
                    prev = 0
                    for j in range(N + 1):
                        out[j] = (Ri[j] + (j - 1 - a) * prev) / d if not _exact(d) or d != 0 \
                            else 0
                        if _exact(out[j]) and not isinstance(out[j], Fraction):
                            out[j] = Fraction(out[j])
                        prev = out[j]
                comps_k.append(out)
            new[k] = comps_k
        if new == s:
            break
        s = new
    else:
        raise FormalODEError("sector recurrences did not stabilize")
    sec = {k: [comp[:N + 1] for comp in v] for k, v in s.items()}
    return TransseriesFamily(sys.lambdas, sys.alphas, sec, N, K, gauge)


# ---------------------------------------------------------------- scalar API


XG = GeneratorSet.powers(-1)


def _deriv_ms(f: Multiseries) -> Multiseries:
    """d/dx of a series in x^{-1}: c x^{-k} -> -k c x^{-k-1}."""
    coeffs = {(k[0] + 1,): -k[0] * c for k, c in f.coeffs.items() if k[0] != 0}
    return Multiseries.from_coeffs(XG, coeffs, f.N + 1, (0,))


def solve_power_series(eq: NormalFormScalarODE, N: int, history=False):
    """c_0..c_N of the unique power series solution, by iterating

        f = J2(f) = (F0 - f' + (beta/x) f + sum g_kl x^{-k} f^l) / lam

    from f = 0.  Returns the list (and the iterates when history=True).
    """
    eq.validate()
    lam = eq.lam
    S0 = Multiseries.from_coeffs(XG, {(k,): _div(c, 1) / lam for k, c in eq.forcing.items()
                                      if k <= N}, N, (0,))
    xinv = Multiseries.monomial(XG, (1,), None)

    def J(f):
        out = _deriv_ms(f).scale(-1) + (xinv * f).scale(eq.beta)
        pw = {1: f}
        for (k, l), c in eq.g.items():
            while max(pw) < l:
                pw[max(pw) + 1] = (pw[max(pw)] * f).truncate(N)
            out = out + (Multiseries.monomial(XG, (k,), None) * pw[l]).scale(c)
        return out.truncate(N).scale(_div(1, 1) / lam if _exact(lam) else 1 / lam)

    res = fixed_point(J, S0, N, history=history, max_iter=N + 5)
    coeffs = [res.value.coeff((j,)) for j in range(N + 1)]
    if history:
        return coeffs, [[h.coeff((j,)) for j in range(N + 1)] for h in res.history]
    return coeffs


def power_series_by_recurrence(eq: NormalFormScalarODE, N: int) -> List:
    """Independent route: sector-0 recurrence of the sector engine."""
    fam = solve_sectors(eq.to_system(), [], 0, N)
    return fam.series((0,), 0)


def solve_exponential_corrections(eq: NormalFormScalarODE, K: int, N: int, gauge=1):
    """f~_0 .. f~_K with delta = sum_k C^k x^{beta k} e^{-k lam x} f~_k, f_{1;0} = gauge."""
    return solve_sectors(eq.to_system(), [0], K, N, gauge)


def solve_system_transseries(sys: NormalFormSystem, angle=0.0, K=2, N=20, gauge=1):
    """Family along the ray arg x = angle; C_i = 0 for non-decaying exponentials."""
    comps = sys.decaying(angle)
    if not comps:
        K = 0
    return solve_sectors(sys, comps, K, N, gauge)


# ---------------------------------------------------------------- residuals


class ResidualReport:
    def __init__(self, orders: Dict[Tuple[int, ...], Optional[int]], N, detail=None):
        self.orders = orders     # sector -> first j with nonzero residual (None: none)
        self.N = N
        self.detail = detail or {}

    @property
    def order(self):
        """Smallest first-nonzero residual order over all sectors (inf if none)."""
        vals = [o for o in self.orders.values() if o is not None]
        return min(vals) if vals else math.inf

    @property
    def ok(self) -> bool:
        return self.order > self.N

    def __repr__(self):
        return f"ResidualReport(order={self.order}, N={self.N}, sectors={self.orders})"


def _sector_residuals(eq_sys: NormalFormSystem, fam: TransseriesFamily, window_N):
    """Substitute the recombined family (C = 1) into the system with the
    transseries algebra and sort the residual by sector and power."""
    n = eq_sys.n
    ys = [fam.transseries(i) for i in range(n)]
    out: Dict[Tuple[int, ...], Dict[int, object]] = {}
    for i in range(n):
        lhs = ts.differentiate(ys[i]) + ys[i] * eq_sys.lambdas[i] \
            - ys[i] * Transseries.x(-1) * eq_sys.alphas[i]
        rhs = None
        cache = {}
        for (ii, kp, l), c in eq_sys.g.items():
            if ii != i:
                continue
            if l not in cache:
                t = Transseries.const(1)
                for comp, e in enumerate(l):
                    for _ in range(e):
                        t = _trim(t * ys[comp], fam, window_N)
                cache[l] = t
            term = cache[l] * Transseries.x(-kp) * c
            rhs = term if rhs is None else rhs + term
        res = lhs - rhs if rhs is not None else lhs
        for m, c in res.items():
            k, j = _sector_of(m, fam)
            if k is None or c == 0:
                continue
            out.setdefault((i,) + k, {})
            out[(i,) + k][j] = out[(i,) + k].get(j, 0) + c
    return out


def _trim(t: Transseries, fam, window_N):
    """Drop terms beyond x^{-window_N} inside each sector (exact data)."""
    keep = {}
    for m, c in t.items():
        k, j = _sector_of(m, fam)
        if k is not None and j <= window_N and sum(k) <= fam.K:
            keep[m] = c
    return Transseries.from_terms(keep)


def _sector_of(m: Mono, fam: TransseriesFamily):
    lx = dict(m.exp).get(X_MONO, 0)
    if len(m.exp) > (1 if lx else 0):
        return None, None
    lk = -lx
    for k in fam.sectors:
        l, a = fam.exponent(k)
        if l == lk:
            j = a - m.sigma
            if j.denominator == 1:
                return k, int(j)
    return None, None


def verify_formal_solution(eq, sol, N: int) -> ResidualReport:
    """Order of the first nonzero residual term in each sector.

    sol is a coefficient list (power series of a scalar equation) or a
    TransseriesFamily; success means every order exceeds N.
    """
    if isinstance(eq, SecondOrderEquation):
        res = eq.residual_power_series(sol, N)
        first = next((j for j, c in enumerate(res) if c != 0), None)
        return ResidualReport({(0,): first}, N)
    sys = eq.to_system() if isinstance(eq, NormalFormScalarODE) else eq
    if isinstance(sol, TransseriesFamily):
        fam = sol
    else:
        sec = {tuple([0] * sys.n): [list(sol)] if sys.n == 1 else [list(c) for c in sol]}
        fam = TransseriesFamily(sys.lambdas, sys.alphas, sec, len(sec[tuple([0] * sys.n)][0]) - 1, 0)
    if not all(_exact(c) for c in sys.lambdas + sys.alphas):
        raise FormalODEError("residual check needs rational lambda and alpha")
    data = _sector_residuals(sys, fam, N + 2)
    orders = {}
    for key, row in data.items():
        nz = sorted(j for j, c in row.items() if c != 0)
        orders[key] = nz[0] if nz else None
    for k in fam.sectors:
        for i in range(sys.n):
            orders.setdefault((i,) + k, None)
    return ResidualReport(orders, N, data)


# ---------------------------------------------------------------- linearization


def _bivar_mul(A, B, Kd, N):
    out = {}
    for (da, ja), a in A.items():
        for (db, jb), b in B.items():
            d, j = da + db, ja + jb
            if d <= Kd and j <= N:
                out[(d, j)] = out.get((d, j), 0) + a * b
    return out


def linearization_constant(eq: NormalFormScalarODE, fam: TransseriesFamily, K=None, N=None):
    """Coefficients g_k(x) (k = 1..K) with C = x^{-beta} e^{lam x} sum_k g_k delta^k.

    Obtained by reverting delta = sum_k f_k z^k (z = C x^beta e^{-lam x}),
    i.e. z = sum_k g_k delta^k.  Returns {k: [coefficients of x^{-j}]}.
    """
    K = fam.K if K is None else K
    N = fam.N if N is None else N
    f = {k: fam.series((k,)) for k in range(1, K + 1)}
    # series in (delta-degree, x^{-j}); z^1 = delta * h1 + ...
    inv_f1 = _pinv([f[1][j] for j in range(N + 1)], N)
    z = {(1, j): c for j, c in enumerate(inv_f1) if c != 0}
    for _ in range(K + 1):
        # z = (delta - sum_{k>=2} f_k z^k) / f_1
        acc = {(1, 0): 1}
        zp = dict(z)
        for k in range(2, K + 1):
            zp = _bivar_mul(zp, z, K, N) if k > 1 else zp
            fk = {(0, j): c for j, c in enumerate(f[k]) if c != 0}
            for key, c in _bivar_mul(fk, zp, K, N).items():
                acc[key] = acc.get(key, 0) - c
        inv = {(0, j): c for j, c in enumerate(inv_f1) if c != 0}
        z = _bivar_mul(acc, inv, K, N)
    return {k: [z.get((k, j), 0) for j in range(N + 1)] for k in range(1, K + 1)}


def _pinv(a, N):
    """1/a for a power series in x^{-1} with a_0 != 0."""
    out = [0] * (N + 1)
    out[0] = _div(1, a[0]) if _exact(a[0]) else 1 / a[0]
    for j in range(1, N + 1):
        s = sum(a[i] * out[j - i] for i in range(1, j + 1) if i < len(a))
        out[j] = -s * out[0]
    return out


def linearization_residual(eq: NormalFormScalarODE, fam: TransseriesFamily, gk=None, N=None):
    """Coefficients of  lam H - (beta/x) H + H_x + H_delta * Phi(x, delta)
    (H = sum g_k delta^k), which vanish iff C_x + C_delta delta' = 0 formally.
    Phi is the delta-equation: delta' = -lam delta + (beta/x) delta + g(f0+delta) - g(f0).
    Returns the nonzero entries {(deg, j): c} with j <= N - 2."""
    K = fam.K
    N = fam.N if N is None else N
    gk = gk or linearization_constant(eq, fam, K, N)
    H = {(k, j): c for k, row in gk.items() for j, c in enumerate(row) if c != 0}
    f0 = {(0, j): c for j, c in enumerate(fam.series((0,))) if c != 0}
    delta = {(1, 0): 1}
    # Phi
    phi = {(1, 0): -eq.lam, (1, 1): eq.beta}
    phi = {k: v for k, v in phi.items() if v != 0}
    fd = dict(f0)
    fd[(1, 0)] = fd.get((1, 0), 0) + 1
    for (kp, l), c in eq.g.items():
        p_full = {(0, 0): 1}
        p_0 = {(0, 0): 1}
        for _ in range(l):
            p_full = _bivar_mul(p_full, fd, K + 1, N + 2)
            p_0 = _bivar_mul(p_0, f0, K + 1, N + 2)
        for (d, j), v in p_full.items():
            if j + kp <= N + 2:
                phi[(d, j + kp)] = phi.get((d, j + kp), 0) + c * v
        for (d, j), v in p_0.items():
            if j + kp <= N + 2:
                phi[(d, j + kp)] = phi.get((d, j + kp), 0) - c * v
    out = {}
    for (k, j), c in H.items():
        out[(k, j)] = out.get((k, j), 0) + (eq.lam) * c
        out[(k, j + 1)] = out.get((k, j + 1), 0) - eq.beta * c - j * c   # -(beta/x)H + H_x
    Hd = {(k - 1, j): k * c for (k, j), c in H.items()}
    for key, c in _bivar_mul(Hd, phi, K, N + 2).items():
        out[key] = out.get(key, 0) + c
    return {k: v for k, v in out.items() if v != 0 and k[0] <= K - 1 + 1 and k[1] <= N - 2
            and k[0] <= K - 1}


# ---------------------------------------------------------------- normalization


def _mat_series_mul(A, B, N):
    """Matrix power series {m: 2x2} product, truncated at x^{-N}."""
    out = {}
    for i, a in A.items():
        for j, b in B.items():
            if i + j <= N:
                p = [[sum(a[r][t] * b[t][c] for t in range(2)) for c in range(2)] for r in range(2)]
                if i + j in out:
                    o = out[i + j]
                    out[i + j] = [[o[r][c] + p[r][c] for c in range(2)] for r in range(2)]
                else:
                    out[i + j] = p
    return out


def normalize_second_order(eq: SecondOrderEquation, order=30) -> NormalFormSystem:
    """Bring h'' + P h' + Q h = n(x,h) (P = O(1/x), Q -> Q0 != 0) to the
    diagonal normal form  y' = -diag(lam) y + diag(alpha) y/x + g.

    u = (h, h') = T (I + S/x) y, T diagonalizing the constant part and S
    removing the off-diagonal 1/x part; g is kept to order x^{-order}.
    """
    if any(k < 1 for k in eq.P) or any(k < 0 for k in eq.Q):
        raise ShapeError("second-order data is not of rank-one normal type")
    one = Fraction(1)
    P0 = eq.P.get(0, 0)
    Q0 = eq.Q.get(0, 0)
    disc = P0 * P0 - 4 * Q0
    if _exact(disc) and disc >= 0 and Fraction(math.isqrt(disc.numerator), math.isqrt(disc.denominator)) ** 2 == disc:
        r = Fraction(math.isqrt(disc.numerator), math.isqrt(disc.denominator))
    else:
        import cmath
        r = cmath.sqrt(complex(disc))
    mu = [(-P0 - r) / 2, (-P0 + r) / 2]          # y' ~ mu y; lam = -mu
    if mu[0] == mu[1]:
        raise ResonanceError("repeated eigenvalues")
    T = [[one, one], [mu[0], mu[1]]]
    det = mu[1] - mu[0]
    Ti = [[mu[1] / det, -one / det], [-mu[0] / det, one / det]]
    A = {}
    for m in range(order + 1):
        q = eq.Q.get(m, 0)
        p = eq.P.get(m, 0)
        if m == 0 or q or p:
            A[m] = [[one if m == 0 else 0, 0], [-q, -p]]
    A = {m: a for m, a in A.items()}
    A[0] = [[0, one], [-Q0, -P0]]
    B = _mat_series_mul(_mat_series_mul({0: Ti}, A, order), {0: T}, order)
    B1 = B.get(1, [[0, 0], [0, 0]])
    S = [[0, -B1[0][1] / (mu[0] - mu[1])], [-B1[1][0] / (mu[1] - mu[0]), 0]]
    IS = {0: [[one, 0], [0, one]], 1: S}
    # (I + S/x)^{-1}
    inv = {0: [[one, 0], [0, one]]}
    term = {0: [[one, 0], [0, one]]}
    negS = {1: [[-S[r][c] for c in range(2)] for r in range(2)]}
    for _ in range(order):
        term = _mat_series_mul(term, negS, order)
        for m, t in term.items():
            if m in inv:
                inv[m] = [[inv[m][r][c] + t[r][c] for c in range(2)] for r in range(2)]
            else:
                inv[m] = t
    Sx2 = {2: S}
    M = _mat_series_mul(B, IS, order)
    for m, t in Sx2.items():
        M[m] = [[M.get(m, [[0, 0], [0, 0]])[r][c] - t[r][c] for c in range(2)] for r in range(2)]
    M = _mat_series_mul(inv, M, order)
    lam = [-mu[0], -mu[1]]
    alpha = [M.get(1, [[0, 0], [0, 0]])[0][0], M.get(1, [[0, 0], [0, 0]])[1][1]]
    g: Dict[Tuple[int, int, Tuple[int, int]], object] = {}

    def addg(i, k, l, c):
        if c != 0 and k <= order:
            g[(i, k, l)] = g.get((i, k, l), 0) + c

    for m, mat in M.items():
        for i in range(2):
            for c in range(2):
                if m == 0 or (m == 1 and i == c):
                    continue
                addg(i, m, (int(c == 0), int(c == 1)), mat[i][c])
    # h = row 0 of T (I + S/x) y  -> linear forms a0 + a1/x in (y1, y2)
    TS = _mat_series_mul({0: T}, IS, order)
    hlin = {m: (mat[0][0], mat[0][1]) for m, mat in TS.items()}
    # vector multiplying the scalar rhs: (I + S/x)^{-1} T^{-1} (0, 1)^T
    vec = _mat_series_mul(inv, {0: Ti}, order)
    vcol = {m: (mat[0][1], mat[1][1]) for m, mat in vec.items()}
    # powers of h as polynomials {(m, (e1, e2)): c}
    hpoly = {}
    for m, (a, b) in hlin.items():
        if a:
            hpoly[(m, (1, 0))] = a
        if b:
            hpoly[(m, (0, 1))] = b
    powers = {0: {(0, (0, 0)): one}}
    maxl = max([l for (_, l) in eq.rhs] + [0])
    for l in range(1, maxl + 1):
        prev = powers[l - 1]
        cur = {}
        for (m1, e1), c1 in prev.items():
            for (m2, e2), c2 in hpoly.items():
                if m1 + m2 <= order:
                    key = (m1 + m2, (e1[0] + e2[0], e1[1] + e2[1]))
                    cur[key] = cur.get(key, 0) + c1 * c2
        powers[l] = cur
    for (k, l), c in eq.rhs.items():
        if l == 1:
            # linear terms belong to Q; keep them if given here
            pass
        for (m, e), pc in powers[l].items():
            for mv, (v0, v1) in vcol.items():
                kk = k + m + mv
                addg(0, kk, e, c * pc * v0)
                addg(1, kk, e, c * pc * v1)
    meta = {"T": T, "S": S, "order": order}
    return NormalFormSystem(lam, alpha, g, name=eq.name, meta=meta)


# ---------------------------------------------------------------- presets


PRESETS = ("euler", "erf_normal", "oscillator", "abel", "p1", "p2_first", "p2_second",
           "erfmix", "cubic", "analytic_control", "euler_minus")


def preset(name: str, **params):
    """Exact coefficient data of the named normal form."""
    F = Fraction
    if name == "euler":
        # f' + f = 1/x
        return NormalFormScalarODE(1, 0, {1: 1}, {}, name=name, allow_order_one_forcing=True)
    if name == "euler_minus":
        # f' - f = -1/x (Borel germ 1/(1+p))
        return NormalFormScalarODE(-1, 0, {1: -1}, {}, name=name, allow_order_one_forcing=True)
    if name == "erf_normal":
        # h' + (1 + 1/(2z)) h = 1/(2z)
        return NormalFormScalarODE(1, F(-1, 2), {1: F(1, 2)}, {}, name=name,
                                   allow_order_one_forcing=True)
    if name == "cubic":
        a = _q(params.get("a", 1))
        b = _q(params.get("b", 0))
        beta = _q(params.get("beta", 0))
        return NormalFormScalarODE(1, beta, {2: 1}, {(0, 2): a, (0, 3): b}, name=name)
    if name == "analytic_control":
        # f' + f = x^-2 - 2x^-3: f~0 = x^-2 exactly, Borel transform entire
        return NormalFormScalarODE(1, 0, {2: 1, 3: -2}, {}, name=name)
    if name == "abel":
        return NormalFormScalarODE(1, F(1, 5), {2: F(-1, 15), 3: F(1, 3 ** 2 * 5 ** 3)},
                                   {(0, 2): -3, (0, 3): -3, (1, 2): F(3, 5), (2, 1): F(-1, 25)},
                                   name=name)
    if name == "oscillator":
        E = _q(params.get("energy", 1))
        eq = SecondOrderEquation({1: F(1, 2)}, {0: -1, 1: -E / 2}, {}, name=name,
                                 meta={"energy": E, "variable": "t = x^2/2"})
        eq.system = normalize_second_order(eq, params.get("order", 30))
        return eq
    if name == "p1":
        eq = SecondOrderEquation({1: 1}, {0: -1}, {(0, 2): F(1, 2), (4, 0): F(392, 625)},
                                 name=name)
        eq.system = normalize_second_order(eq, params.get("order", 30))
        return eq
    if name == "p2_first":
        al = _q(params.get("alpha", 0))
        eq = SecondOrderEquation({1: 1}, {0: -1, 2: -(24 * al * al + 1) / 9},
                                 {(0, 3): F(8, 9), (1, 2): -8 * al / 3,
                                  (3, 0): -8 * (al ** 3 - al) / 9},
                                 name=name, meta={"alpha": al})
        eq.system = normalize_second_order(eq, params.get("order", 30))
        return eq
    if name == "p2_second":
        import cmath
        al = _q(params.get("alpha", 0))
        sA = params.get("branch_A", 1)
        sB = params.get("branch_B", 1)
        A = sA * cmath.sqrt(-9 / 8)
        B = sB * cmath.sqrt(-1 / 2)
        a = complex(al)
        # derived from y'' = 2y^3 + xy + al under x = (At)^{2/3},
        # y = (At)^{1/3}(w - B + al/(2At)):
        # w'' + w'/t - (1 + 3B al/(tA) + (1 + 6al^2)/(9t^2)) w - (3B - 3al/(2tA)) w^2
        #   + w^3 + (B(1 + 6al^2) - al(al^2 - 4)/(A t))/(9t^2) = 0
        eq = SecondOrderEquation({1: 1}, {0: -1, 1: -3 * B * a / A, 2: -(1 + 6 * a * a) / 9},
                                 {(0, 2): 3 * B, (1, 2): -3 * a / (2 * A), (0, 3): -1,
                                  (2, 0): -B * (1 + 6 * a * a) / 9,
                                  (3, 0): a * (a * a - 4) / (9 * A)},
                                 name=name, meta={"alpha": al, "A": A, "B": B})
        eq.system = normalize_second_order(eq, params.get("order", 30))
        return eq
    if name == "erfmix":
        # f'' + (2x + 1) f' + 2(1 + x) f = 1/x   (P has a positive power: mixed levels)
        eq = SecondOrderEquation({-1: 2, 0: 1}, {-1: 2, 0: 2}, {(1, 0): 1}, name=name)
        eq.meta["wkb"] = erfmix_wkb(params.get("order", 12))
        return eq
    raise FormalODEError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def erfmix_wkb(order=12):
    """Level-zero exponents of the mixed equation from (1/2) w'^2 + x w' + x = 0.

    w' = -x -+ x sqrt(1 - 2/x); returns the coefficient maps {power: c} of
    w1' and w2' (powers of x) and of w1, w2 (with the log coefficient under
    the key 'log').
    """
    # sqrt(1 - 2u) = sum binom(1/2, n) (-2u)^n, u = 1/x
    s = []
    for n in range(order + 2):
        b = Fraction(1)
        for i in range(n):
            b = b * (Fraction(1, 2) - i) / (i + 1)
        s.append(b * (-2) ** n)
    # x*sqrt(1-2/x) = sum s_n x^{1-n}
    w1p = {1: Fraction(-1)}
    w2p = {1: Fraction(-1)}
    for n, c in enumerate(s):
        w1p[1 - n] = w1p.get(1 - n, 0) - c
        w2p[1 - n] = w2p.get(1 - n, 0) + c
    w1p = {k: v for k, v in w1p.items() if v != 0}
    w2p = {k: v for k, v in w2p.items() if v != 0}

    def integ(wp):
        out = {}
        for k, c in wp.items():
            if k == -1:
                out["log"] = c
            else:
                out[k + 1] = c / (k + 1)
        return out

    return {"w1_prime": w1p, "w2_prime": w2p, "w1": integ(w1p), "w2": integ(w2p)}


def eikonal_residual(wp: Dict[int, Fraction], order: int) -> Dict[int, Fraction]:
    """(1/2) w'^2 + x w' + x for w' given as {power of x: c}, powers >= 1 - order."""
    sq = {}
    for i, a in wp.items():
        for j, b in wp.items():
            sq[i + j] = sq.get(i + j, 0) + a * b / 2
    out = dict(sq)
    for i, a in wp.items():
        out[i + 1] = out.get(i + 1, 0) + a
    out[1] = out.get(1, 0) + 1
    lo = 2 - order
    return {k: v for k, v in out.items() if v != 0 and k >= lo}


def load_equation(src):
    """Equation from a preset name, a JSON path, or a dict."""
    if isinstance(src, dict):
        d = src
    elif isinstance(src, str) and (src.endswith(".json") or src.strip().startswith("{")):
        d = json.loads(open(src).read() if src.endswith(".json") else src)
    else:
        return preset(src)
    if "system" in d:
        return NormalFormSystem.from_dict(d)
    if "preset" in d:
        return preset(d["preset"], **d.get("params", {}))
    return NormalFormScalarODE.from_dict(d)


def coefficients_csv(coeffs: Sequence, start=0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "exact", "float"])
    for k, c in enumerate(coeffs):
        if k < start:
            continue
        w.writerow([k, str(c) if not isinstance(c, complex) else f"{c.real}{c.imag:+}j",
                    _float_str(c)])
    return buf.getvalue()
