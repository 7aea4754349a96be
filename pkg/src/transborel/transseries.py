"""Leveled transseries over the multiseries core.

A transmonomial is x^sigma * exp(L) with L a finite, real-rational, large
transseries of lower level.  Writing L = sum_b l_b * b over a basis of large
monomials b (sorted decreasingly), the vector (l_b..., sigma) is the "log" of
the monomial and its lexicographic order is exactly the asymptotic order, so
a transseries is a Multiseries whose generators are these vectors.

Log shifts: a value with shift n stands for S(t) with t = log^n(x).  Two
values are aligned by composing the lower one with exp, which maps monomials
to monomials and keeps the index structure.
"""
from __future__ import annotations

import cmath
import json
import math
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Dict, List, Optional, Tuple

from .multiseries import (
    GeneratorSet, Multiseries, MultiseriesError, ContractivityError,
    UnsupportedOrderError, product_form, reciprocal, infinite_sum, lex_sign,
    _div, _is_zero,
)

MAX_LEVEL = 3
DEFAULT_N = 15


class TransseriesError(MultiseriesError):
    pass


# ---------------------------------------------------------------- monomials


class Mono:
    """x^sigma * exp(sum_b c_b b); `exp` holds (large Mono, Fraction) pairs."""

    __slots__ = ("sigma", "exp", "_h")

    def __init__(self, sigma=0, exp=None):
        self.sigma = Fraction(sigma)
        items = dict(exp.items() if isinstance(exp, dict) else (exp or ()))
        items = {b: Fraction(c) for b, c in items.items() if c != 0}
        for b in items:
            if not b.is_large():
                raise TransseriesError(f"exponent monomial {b} is not large")
        self.exp = tuple(sorted(items.items(), key=lambda t: _mkey(t[0]), reverse=True))
        self._h = hash((self.sigma, self.exp))

    def __eq__(self, other):
        return isinstance(other, Mono) and self.sigma == other.sigma and self.exp == other.exp

    def __hash__(self):
        return self._h

    def __lt__(self, other):
        return cmp_monomial(self, other) < 0

    def __gt__(self, other):
        return cmp_monomial(self, other) > 0

    @property
    def level(self) -> int:
        if not self.exp:
            return 0
        return 1 + max(b.level for b, _ in self.exp)

    def is_large(self) -> bool:
        return cmp_monomial(self, ONE) > 0

    def is_small(self) -> bool:
        return cmp_monomial(self, ONE) < 0

    def __mul__(self, other: "Mono") -> "Mono":
        e = dict(self.exp)
        for b, c in other.exp:
            e[b] = e.get(b, 0) + c
        return Mono(self.sigma + other.sigma, e)

    def __pow__(self, q) -> "Mono":
        q = Fraction(q)
        return Mono(self.sigma * q, {b: c * q for b, c in self.exp})

    def inverse(self) -> "Mono":
        return self ** -1

    def exp_part(self) -> "Mono":
        return Mono(0, dict(self.exp))

    def exponent_ts(self) -> "Transseries":
        """The exponent L as an exact transseries."""
        return Transseries.from_terms({b: c for b, c in self.exp})

    def compose_exp(self) -> "Mono":
        """self o exp: x^sigma e^L -> exp(sigma t + L o exp)."""
        e = {}
        if self.sigma:
            e[T_MONO] = self.sigma
        for b, c in self.exp:
            nb = b.compose_exp()
            e[nb] = e.get(nb, 0) + c
        return Mono(0, e)

    def __repr__(self):
        return pretty_mono(self) or "1"


def _mkey(m: Mono):
    return cmp_to_key(cmp_monomial)(m)


def cmp_monomial(m1: Mono, m2: Mono) -> int:
    """-1, 0, 1 for m1 << m2, m1 = m2, m1 >> m2."""
    if m1 is m2:
        return 0
    diff: Dict[Mono, Fraction] = dict(m1.exp)
    for b, c in m2.exp:
        diff[b] = diff.get(b, 0) - c
    keys = [b for b, c in diff.items() if c != 0]
    if keys:
        top = keys[0]
        for b in keys[1:]:
            if cmp_monomial(b, top) > 0:
                top = b
        return 1 if diff[top] > 0 else -1
    if m1.sigma == m2.sigma:
        return 0
    return 1 if m1.sigma > m2.sigma else -1


ONE = Mono()
X_MONO = Mono(1)          # x (also the variable t of a shifted value)
T_MONO = X_MONO
XINV_MONO = Mono(-1)


def iterated_exp_mono(i: int) -> Mono:
    """E_i(t) as a monomial: E_0 = t, E_{i+1} = exp(E_i)."""
    m = T_MONO
    for _ in range(i):
        m = Mono(0, {m: 1})
    return m


def pretty_mono(m: Mono) -> str:
    parts = []
    if m.exp:
        parts.append("e^{" + _pretty_sum([(b, c) for b, c in m.exp], False) + "}")
    if m.sigma:
        parts.append("x" if m.sigma == 1 else f"x^{{{m.sigma}}}")
    return " ".join(parts)


def _fmt_c(c) -> str:
    if isinstance(c, complex):
        return f"({c.real:.6g}{c.imag:+.6g}j)"
    if isinstance(c, float):
        return f"{c:.10g}"
    return str(c)


def _pretty_sum(items, more) -> str:
    out = []
    for m, c in items:
        s = pretty_mono(m)
        if not s:
            out.append(_fmt_c(c))
        elif c == 1:
            out.append(s)
        elif c == -1:
            out.append("-" + s)
        else:
            out.append(f"{_fmt_c(c)} {s}")
    txt = " + ".join(out) if out else "0"
    txt = txt.replace("+ -", "- ")
    return txt + (" + ..." if more else "")


# ---------------------------------------------------------------- vectors


def _basis_of(monos) -> Tuple[Mono, ...]:
    bs = set()
    for m in monos:
        for b, _ in m.exp:
            bs.add(b)
    return tuple(sorted(bs, key=_mkey, reverse=True))


def _merge_basis(b1, b2) -> Tuple[Mono, ...]:
    if b1 == b2:
        return b1
    return tuple(sorted(set(b1) | set(b2), key=_mkey, reverse=True))


def mono_vector(m: Mono, basis) -> Tuple[Fraction, ...]:
    pos = {b: i for i, b in enumerate(basis)}
    v = [Fraction(0)] * (len(basis) + 1)
    for b, c in m.exp:
        v[pos[b]] = c
    v[-1] = m.sigma
    return tuple(v)


def mono_from_vector(v, basis) -> Mono:
    return Mono(v[-1], {b: c for b, c in zip(basis, v[:-1]) if c != 0})


def _content(v) -> Fraction:
    """Largest q > 0 with v/q integral."""
    num = 0
    den = 1
    for x in v:
        if x != 0:
            num = math.gcd(num, x.numerator)
            den = den * x.denominator // math.gcd(den, x.denominator)
    return Fraction(num, den) if num else Fraction(0)


def _separated(vec) -> List[Tuple[Tuple[Fraction, ...], int]]:
    """(small generator vector, index) pairs whose product is the monomial:
    a power generator x^{-1/b} and a primitive exponential generator."""
    out = []
    pw = vec[-1]
    if pw != 0:
        g = [Fraction(0)] * len(vec)
        g[-1] = Fraction(-1, pw.denominator)
        out.append((tuple(g), -pw.numerator))
    e = tuple(vec[:-1]) + (Fraction(0),)
    if any(x != 0 for x in e):
        q = _content(e)
        a = q.numerator
        g = tuple(x / q / q.denominator for x in e)   # e = a * g
        if lex_sign(g) > 0:
            g = tuple(-x for x in g)
            a = -a
        out.append((g, a))
    return out


def _solve_integer(gens: GeneratorSet, vec) -> Optional[Tuple[int, ...]]:
    """Integer index k with sum k_i g_i = vec, for independent generators."""
    if not gens.independent:
        return None
    M = len(gens)
    d = gens.dim
    A = [[gens.vectors[i][r] for i in range(M)] + [Fraction(vec[r])] for r in range(d)]
    piv = []
    r = 0
    for c in range(M):
        p = next((i for i in range(r, d) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        pv = A[r][c]
        A[r] = [x / pv for x in A[r]]
        for i in range(d):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        piv.append(c)
        r += 1
    for i in range(r, d):
        if A[i][M] != 0:
            return None
    k = [0] * M
    for row, c in enumerate(piv):
        x = A[row][M]
        if x.denominator != 1:
            return None
        k[c] = int(x)
    return tuple(k)


def _body_from_monos(terms: Dict[Mono, object], basis, N=None, lower=None) -> Multiseries:
    gvecs: List[Tuple[Fraction, ...]] = []
    coeffs: Dict[Tuple[int, ...], object] = {}
    pairs = []
    for m, c in terms.items():
        sep = _separated(mono_vector(m, basis))
        for g, _ in sep:
            if g not in gvecs:
                gvecs.append(g)
        pairs.append((sep, c))
    if not gvecs:
        g = [Fraction(0)] * (len(basis) + 1)
        g[-1] = Fraction(-1)
        gvecs.append(tuple(g))
    gens = GeneratorSet(gvecs)
    for sep, c in pairs:
        k = [0] * len(gvecs)
        for g, a in sep:
            k[gvecs.index(g)] += a
        k = tuple(k)
        coeffs[k] = coeffs.get(k, 0) + c
    return Multiseries.from_coeffs(gens, coeffs, N, lower)


def _rebase(body: Multiseries, old_basis, new_basis, mono_map=None) -> Multiseries:
    """Re-express the generator vectors over another basis (same indices)."""
    if old_basis == new_basis and mono_map is None:
        return body
    vecs = []
    for g in body.gens.vectors:
        m = mono_from_vector(g, old_basis)
        if mono_map is not None:
            m = mono_map(m)
        vecs.append(mono_vector(m, new_basis))
    gens = GeneratorSet(vecs)
    return Multiseries.from_coeffs(gens, body.coeffs, body.N, body.lower)


def _reduced(vectors):
    """Generators on a common ray replaced by their gcd generator.

    Returns (GeneratorSet, phi) with phi[i] = (new slot, positive multiple).
    """
    rays: Dict[Tuple[Fraction, ...], List[Tuple[int, Fraction]]] = {}
    for i, g in enumerate(vectors):
        q = _content(g)
        rays.setdefault(tuple(x / q for x in g), []).append((i, q))
    new_vecs = []
    phi = [None] * len(vectors)
    for prim, members in rays.items():
        num = 0
        den = 1
        for _, q in members:
            num = math.gcd(num, q.numerator)
            den = den * q.denominator // math.gcd(den, q.denominator)
        g0 = Fraction(num, den)
        j = len(new_vecs)
        new_vecs.append(tuple(x * g0 for x in prim))
        for i, q in members:
            phi[i] = (j, int(q / g0))
    return GeneratorSet(new_vecs), phi


def _reindex(body: Multiseries, gens: GeneratorSet, phi) -> Multiseries:
    """Move a body to generators in which each old generator is a positive
    multiple/slot of a new one.  The truncation is rescaled so that no
    coefficient becomes known that was not known before (the support of the
    old series lies in the image lattice)."""
    if gens == body.gens and all(p == (i, 1) for i, p in enumerate(phi)):
        return body

    def mp(k):
        out = [0] * len(gens)
        for i, ki in enumerate(k):
            j, a = phi[i]
            out[j] += a * ki
        return tuple(out)

    lower = mp(body.lower)
    coeffs = {}
    for k, c in body.coeffs.items():
        nk = mp(k)
        coeffs[nk] = coeffs.get(nk, 0) + c
    N = body.N
    if N is not None:
        N = N + sum(lower) - sum(body.lower)
    return Multiseries.from_coeffs(gens, coeffs, N, lower)


def _reduce_gens(body: Multiseries) -> Multiseries:
    gens, phi = _reduced(body.gens.vectors)
    if len(gens) == len(body.gens):
        return body
    return _reindex(body, gens, phi)


def _common_bodies(a: Multiseries, b: Multiseries):
    """Both bodies over one reduced generator list."""
    if a.gens == b.gens:
        return a, b
    vecs = list(a.gens.vectors)
    for v in b.gens.vectors:
        if v not in vecs:
            vecs.append(v)
    gens, phi = _reduced(vecs)
    pa = [phi[vecs.index(v)] for v in a.gens.vectors]
    pb = [phi[vecs.index(v)] for v in b.gens.vectors]
    return _reindex(a, gens, pa), _reindex(b, gens, pb)


# ---------------------------------------------------------------- transseries


class SplitParts:
    def __init__(self, large, constant, small):
        self.large = large
        self.constant = constant
        self.small = small

    def __iter__(self):
        return iter((self.large, self.constant, self.small))

    def __repr__(self):
        return f"SplitParts({self.large!r}, {self.constant!r}, {self.small!r})"


class Transseries:
    """Immutable transseries: basis of large monomials, a Multiseries body
    over log-vectors, and a log shift."""

    __slots__ = ("basis", "body", "shift")

    def __init__(self, basis, body: Multiseries, shift: int = 0):
        self.basis = tuple(basis)
        if not body.gens.independent:
            body = _reduce_gens(body)
        self.body = body
        self.shift = int(shift)
        if body.gens.dim != len(self.basis) + 1:
            raise TransseriesError("body dimension does not match basis")

    # -- construction
    @classmethod
    def from_terms(cls, terms: Dict[Mono, object], N=None, shift=0) -> "Transseries":
        terms = {m: c for m, c in terms.items() if not _is_zero(c)}
        basis = _basis_of(terms)
        return cls(basis, _body_from_monos(terms, basis, N), shift)

    @classmethod
    def mono(cls, m: Mono, c=1, shift=0) -> "Transseries":
        return cls.from_terms({m: c}, None, shift)

    @classmethod
    def const(cls, c, shift=0) -> "Transseries":
        return cls.from_terms({ONE: c}, None, shift)

    @classmethod
    def zero(cls, shift=0) -> "Transseries":
        return cls.from_terms({}, None, shift)

    @classmethod
    def x(cls, sigma=1) -> "Transseries":
        return cls.mono(Mono(sigma))

    # -- views
    @property
    def N(self):
        return self.body.N

    @property
    def exact(self) -> bool:
        return self.body.N is None

    def items(self) -> List[Tuple[Mono, object]]:
        """(monomial, coefficient) in decreasing order."""
        gens = self.body.gens
        return [(mono_from_vector(gens.val_to_exponent(v), self.basis), c)
                for v, c in self.body.items_desc()]

    def as_dict(self) -> Dict[Mono, object]:
        return dict(self.items())

    @property
    def level(self) -> int:
        return max([m.level for m, _ in self.items()] + [0])

    def is_zero(self) -> bool:
        return self.body.is_zero()

    def __len__(self):
        return len(self.body)

    def dominant(self):
        """(coefficient, monomial) of the largest term; None for zero."""
        if self.body.is_zero():
            return None
        v = max(self.body.terms)
        return self.body.terms[v], mono_from_vector(self.body.gens.val_to_exponent(v), self.basis)

    def mag(self) -> Optional[Mono]:
        d = self.dominant()
        return None if d is None else d[1]

    def constant_term(self):
        return self.body.constant_term()

    def truncate(self, N) -> "Transseries":
        return Transseries(self.basis, self.body.truncate(N), self.shift)

    def __repr__(self):
        items = self.items()
        more = self.body.N is not None
        head = _pretty_sum(items[:10], more or len(items) > 10)
        if self.shift:
            head = f"({head}) o log^{self.shift}"
        return head

    pretty = __repr__

    # -- alignment
    def _to_basis(self, basis) -> "Transseries":
        if basis == self.basis:
            return self
        return Transseries(basis, _rebase(self.body, self.basis, basis), self.shift)

    def _align(self, other: "Transseries"):
        a, b = self, other
        if a.shift < b.shift:
            a = logshift_op(a, b.shift - a.shift)
        elif b.shift < a.shift:
            b = logshift_op(b, a.shift - b.shift)
        basis = _merge_basis(a.basis, b.basis)
        a, b = a._to_basis(basis), b._to_basis(basis)
        ab, bb = _common_bodies(a.body, b.body)
        return Transseries(basis, ab, a.shift), Transseries(basis, bb, b.shift)

    def _coerce(self, other) -> "Transseries":
        if isinstance(other, Transseries):
            return other
        return Transseries.const(other, self.shift)

    # -- arithmetic
    def __add__(self, other):
        other = self._coerce(other)
        a, b = self._align(other)
        return Transseries(a.basis, a.body + b.body, a.shift)

    __radd__ = __add__

    def __neg__(self):
        return Transseries(self.basis, -self.body, self.shift)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Transseries):
            return Transseries(self.basis, self.body.scale(other), self.shift)
        a, b = self._align(other)
        if b.exact and len(b.body) == 1:
            return a._mul_mono(b)
        if a.exact and len(a.body) == 1:
            return b._mul_mono(a)
        return Transseries(a.basis, a.body * b.body, a.shift)

    def __rmul__(self, other):
        return self * other

    def _mul_mono(self, m: "Transseries") -> "Transseries":
        """Product with an exact single term, reusing own generators when possible."""
        c, mono = m.dominant()
        vec = mono_vector(mono, self.basis)
        k = _solve_integer(self.body.gens, vec)
        if k is None:
            return Transseries(self.basis, self.body * m.body, self.shift)
        return Transseries(self.basis, self.body.shift(k).scale(c), self.shift)

    def __pow__(self, n: int):
        if n < 0:
            return ts_reciprocal(self) ** (-n)
        out = Transseries.const(1, self.shift)
        for _ in range(n):
            out = out * self
        return out

    def equal_to_order(self, other, N=None) -> bool:
        other = self._coerce(other)
        a, b = self._align(other)
        return a.body.equal_to_order(b.body, N)

    def covers(self, other) -> bool:
        """True when every term of `other` lies in the known window of self,
        so that an equal_to_order comparison actually tests all of them."""
        a, b = self._align(self._coerce(other))
        ab, bb = a.body._align(b.body)
        return all(ab.known(v) for v in bb.terms)

    def __eq__(self, other):
        if not isinstance(other, Transseries):
            if other == 0:
                return self.is_zero()
            return NotImplemented
        a, b = self._align(other)
        return a.body == b.body

    def __hash__(self):
        return hash((self.basis, self.body, self.shift))

    # -- serialization
    def to_dict(self):
        gmonos = [mono_to_dict(mono_from_vector(g, self.basis)) for g in self.body.gens.vectors]
        terms = []
        for v, c in self.body.items_desc():
            terms.append({"index": list(self.body.rep(v)), "coeff": _c_to_json(c),
                          "mono": mono_to_dict(mono_from_vector(self.body.gens.val_to_exponent(v),
                                                                self.basis))})
        return {"shift": self.shift, "truncation": self.body.N, "lower": list(self.body.lower),
                "generators": gmonos, "terms": terms}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> "Transseries":
        gmonos = [mono_from_dict(g) for g in d["generators"]]
        basis = _basis_of(gmonos)
        gens = GeneratorSet([mono_vector(m, basis) for m in gmonos])
        coeffs = {tuple(t["index"]): _c_from_json(t["coeff"]) for t in d["terms"]}
        body = Multiseries.from_coeffs(gens, coeffs, d["truncation"], tuple(d["lower"]))
        return cls(basis, body, d["shift"])

    @classmethod
    def from_json(cls, s: str) -> "Transseries":
        return cls.from_dict(json.loads(s))


def _c_to_json(c):
    if isinstance(c, (complex, float)):
        c = complex(c)
        return [c.real, c.imag]
    return str(c)


def _c_from_json(x):
    if isinstance(x, list):
        return complex(x[0], x[1])
    return Fraction(x)


def mono_to_dict(m: Mono):
    e = None
    if m.exp:
        e = [{"coeff": str(c), "mono": mono_to_dict(b)} for b, c in m.exp]
    return {"sigma": str(m.sigma), "exponent": e}


def mono_from_dict(d) -> Mono:
    e = {}
    for t in d["exponent"] or []:
        e[mono_from_dict(t["mono"])] = Fraction(t["coeff"])
    return Mono(Fraction(d["sigma"]), e)


# ---------------------------------------------------------------- order, split


def compare(T1: Transseries, T2: Transseries) -> str:
    """'<', '=' or '>' for real transseries."""
    d = T1 - T2
    dom = d.dominant()
    if dom is None:
        return "="
    c = dom[0]
    if isinstance(c, complex):
        raise UnsupportedOrderError("no order on complex transseries")
    return ">" if c > 0 else "<"


def much_greater(T1: Transseries, T2: Transseries) -> bool:
    """T1 >> T2 (magnitudes)."""
    if T2.is_zero():
        return not T1.is_zero()
    if T1.is_zero():
        return False
    return cmp_monomial(T1.mag(), T2.mag()) > 0


def split(T: Transseries) -> SplitParts:
    b = T.body
    large = b.filter(lambda v: lex_sign(v) > 0)
    small = b.filter(lambda v: lex_sign(v) < 0)
    return SplitParts(Transseries(T.basis, large, T.shift), b.constant_term(),
                      Transseries(T.basis, small, T.shift))


def is_large(T: Transseries) -> bool:
    return not T.is_zero() and all(lex_sign(v) > 0 for v in T.body.terms)


def is_small(T: Transseries) -> bool:
    return all(lex_sign(v) < 0 for v in T.body.terms)


# ---------------------------------------------------------------- calculus


def _scaled_by_coord(T: Transseries, j: int) -> Optional[Transseries]:
    """Coefficient c of each monomial multiplied by its j-th log coordinate."""
    b = T.body
    terms = {}
    for v, c in b.terms.items():
        e = Fraction(v[j], b.gens.scale)
        if e != 0:
            terms[v] = c * e
    if not terms:
        return None
    body = Multiseries(b.gens, terms, b.N, b.lower, _checked=b.N is not None, reps=b._reps)
    return Transseries(T.basis, body, T.shift)


@lru_cache(maxsize=None)
def mono_derivative(m: Mono) -> Transseries:
    """D(x^s e^L) = x^s e^L (s/x + L'), exact."""
    inner = Transseries.zero()
    if m.sigma:
        inner = inner + Transseries.mono(XINV_MONO, m.sigma)
    if m.exp:
        inner = inner + differentiate(m.exponent_ts())
    return Transseries.mono(m) * inner


def _jacobian_mono(n: int) -> Mono:
    """dx/dt for x = E_n(t): exp(E_0 + ... + E_{n-1})."""
    return Mono(0, {iterated_exp_mono(i): 1 for i in range(n)})


def differentiate(T: Transseries) -> Transseries:
    """Term-by-term derivative d/dx, for any log shift."""
    S = Transseries(T.basis, T.body, 0)
    out = None
    part = _scaled_by_coord(S, len(S.basis))
    if part is not None:
        out = part * Transseries.mono(XINV_MONO)
    for j, b in enumerate(S.basis):
        part = _scaled_by_coord(S, j)
        if part is not None:
            term = part * mono_derivative(b)
            out = term if out is None else out + term
    if out is None:
        out = Transseries(S.basis, Multiseries(S.body.gens, {}, S.body.N, S.body.lower), 0)
    if T.shift:
        out = out * Transseries.mono(_jacobian_mono(T.shift).inverse())
    return Transseries(out.basis, out.body, T.shift)


def ts_reciprocal(T: Transseries, N=None) -> Transseries:
    if T.is_zero():
        raise ZeroDivisionError("reciprocal of zero transseries")
    if T.exact and len(T.body) == 1:
        c, m = T.dominant()
        return Transseries.mono(m.inverse(), _div(1, c), T.shift)
    if N is None and T.exact:
        N = DEFAULT_N
    return Transseries(T.basis, reciprocal(T.body, N), T.shift)


def integrate(T: Transseries, N=None) -> Transseries:
    """Antiderivative without constant term.

    Pure powers use the power rule (x^{-1} gives a log-shifted value);
    each exponential block e^{E} P is integrated as e^{E} Q with
    Q = P/E' - Q'/E', solved by a Neumann iteration.
    """
    if N is None:
        N = T.N if T.N is not None else DEFAULT_N
    if T.shift:
        S = Transseries(T.basis, T.body, 0) * Transseries.mono(_jacobian_mono(T.shift))
        R = _integrate0(S, N)
        return Transseries(R.basis, R.body, R.shift + T.shift)
    return _integrate0(T, N)


def _integrate0(T: Transseries, N) -> Transseries:
    b = T.body
    gens = b.gens
    blocks: Dict[Tuple[Fraction, ...], Dict] = {}
    for v, c in b.terms.items():
        e = gens.val_to_exponent(v)
        blocks.setdefault(tuple(e[:-1]), {})[v] = c
    out = Transseries(T.basis, Multiseries(gens, {}, b.N, b.lower), 0)
    log_c = 0
    for key, terms in blocks.items():
        if all(x == 0 for x in key):
            pw = {}
            for v, c in terms.items():
                s = Fraction(v[-1], gens.scale)
                if s == -1:
                    log_c = c
                else:
                    pw[v] = _div(c, 1) / (s + 1)
            if pw:
                body = Multiseries(gens, pw, b.N, b.lower, _checked=b.N is not None, reps=b._reps)
                out = out + Transseries(T.basis, body, 0) * Transseries.mono(X_MONO)
            continue
        E = mono_from_vector(key + (Fraction(0),), T.basis)
        block = Transseries(T.basis, Multiseries(gens, terms, b.N, b.lower,
                                                 _checked=b.N is not None, reps=b._reps), 0)
        if block.exact:
            # a minimal basis per block keeps the truncation windows small
            block = Transseries.from_terms(block.as_dict())
        P = block * Transseries.mono(E.inverse())
        Ep = differentiate(E.exponent_ts())
        inv = ts_reciprocal(Ep, N)
        d = (P * inv)
        if d.exact:
            d = d.truncate(N)
        Q = d
        for _ in range(4 * N + 20):
            d = -(differentiate(d) * inv)
            if d.exact:
                d = d.truncate(N)
            d = _drop_unknown(d, Q)
            if d.is_zero():
                break
            Q = Q + d
        else:
            raise ContractivityError("integration iteration did not terminate")
        out = out + Q * Transseries.mono(E)
    if log_c != 0:
        out = logshift_op(out, 1) + Transseries.mono(T_MONO, log_c, shift=1)
    return out


def _drop_unknown(d: Transseries, ref: Transseries) -> Transseries:
    """Restrict d to the truncation window of ref (terms outside are noise)."""
    if ref.N is None:
        return d
    a, r = d._align(ref)
    ab, rb = a.body._align(r.body)
    from .multiseries import window
    win = window(rb.gens, rb.lower, rb.N).rep
    terms = {v: c for v, c in ab.terms.items() if v in win}
    body = Multiseries(ab.gens, terms, ab.N, ab.lower, _checked=ab.N is not None, reps=ab._reps)
    return Transseries(a.basis, body, a.shift)


# ---------------------------------------------------------------- power, exp


def _rpow(c, q: Fraction):
    if q.denominator == 1:
        return c ** int(q) if q >= 0 else _div(1, c ** int(-q))
    if isinstance(c, (int, Fraction)):
        c = Fraction(c)
        if c <= 0:
            raise TransseriesError("non-integer power of a non-positive coefficient")
        n, d = c.numerator, c.denominator
        rn = round(n ** (1 / q.denominator))
        rd = round(d ** (1 / q.denominator))
        if rn ** q.denominator == n and rd ** q.denominator == d:
            return Fraction(rn, rd) ** q.numerator
        return float(c) ** float(q)
    if isinstance(c, complex):
        raise TransseriesError("non-integer power of a complex coefficient")
    if c <= 0:
        raise TransseriesError("non-integer power of a non-positive coefficient")
    return c ** float(q)


def _small_series(s: Transseries, N) -> Multiseries:
    """A nonnegative-lattice Multiseries for a small transseries s."""
    body = s.body
    if all(x >= 0 for x in body.lower) and not body.exact:
        return body
    if body.is_zero():
        return Multiseries.zero(body.gens, N)
    c, k1, S1 = product_form(body, N if body.exact else None)
    mu = S1.gens.exponent(k1)
    gens = S1.gens.extend([mu])
    j = gens.vectors.index(tuple(mu))
    pos = list(range(len(S1.gens)))
    one = Multiseries.one(gens, None)
    k = [0] * len(gens)
    k[j] = 1
    m = Multiseries.monomial(gens, tuple(k), None, c)
    out = m * (one + S1.embed(gens, pos))
    return out


def _series_sum(coef, s: Transseries, N) -> Transseries:
    sm = _small_series(s, N)
    return Transseries(s.basis, infinite_sum(coef, sm, N if sm.N is None else min(N, sm.N)), s.shift)


def power(T: Transseries, sigma, N=None) -> Transseries:
    """T^sigma = c^sigma mag^sigma sum_k binom(sigma,k) s^k."""
    sigma = Fraction(sigma)
    if T.is_zero():
        raise TransseriesError("power of zero")
    if N is None:
        N = T.N if T.N is not None else DEFAULT_N
    c, m = T.dominant()
    if sigma.denominator == 1 and T.exact and sigma >= 0:
        return T ** int(sigma)
    rest = T * Transseries.mono(m.inverse(), _div(1, c)) - 1
    def binom(n):
        out = Fraction(1)
        for i in range(n):
            out = out * (sigma - i) / (i + 1)
        return out
    if rest.is_zero():
        S = Transseries.const(1, T.shift)
    else:
        S = _series_sum(binom, rest, N)
    return S * Transseries.mono(m ** sigma, _rpow(c, sigma), T.shift)


def exp_ts(T: Transseries, N=None) -> Transseries:
    """exp(T) = e^C * exp(L) * sum s^n/n!  (L large part, s small part)."""
    if N is None:
        N = T.N if T.N is not None else DEFAULT_N
    L, C, s = split(T)
    out = Transseries.const(1, T.shift)
    if not L.is_zero():
        e = {}
        for m, c in L.items():
            if isinstance(c, complex):
                raise TransseriesError("exponential of a complex large part")
            e[m] = Fraction(c)
        em = Mono(0, e)
        if em.level > MAX_LEVEL:
            raise TransseriesError(f"level exceeds {MAX_LEVEL}")
        out = Transseries.mono(em, 1, T.shift)
    if C != 0:
        out = out * (cmath.exp(C) if isinstance(C, complex) else math.exp(C))
    if not s.is_zero():
        fact = [Fraction(1)]
        def coef(n):
            while len(fact) <= n:
                fact.append(fact[-1] / len(fact))
            return fact[n]
        out = out * _series_sum(coef, s, N)
    return out


# ---------------------------------------------------------------- composition


def compose(T1: Transseries, T2: Transseries, N=None) -> Transseries:
    """T1 o T2 for large positive T2 (both unshifted)."""
    if T1.shift or T2.shift:
        raise TransseriesError("composition of log-shifted values is not supported")
    dom = T2.dominant()
    if dom is None or not dom[1].is_large():
        raise TransseriesError("composition needs a large right argument")
    if isinstance(dom[0], complex) or dom[0] <= 0:
        raise TransseriesError("composition needs a positive right argument")
    if N is None:
        N = min([n for n in (T1.N, T2.N) if n is not None] or [DEFAULT_N])
    cache: Dict[Mono, Transseries] = {}
    gmonos = [mono_from_vector(g, T1.basis) for g in T1.body.gens.vectors]
    gimg = [mono_compose(g, T2, N, cache) for g in gmonos]
    powers: Dict[Tuple[int, int], Transseries] = {}

    def gpow(i, k):
        if (i, k) not in powers:
            if k == 0:
                powers[(i, k)] = Transseries.const(1)
            elif k < 0:
                powers[(i, k)] = ts_reciprocal(gpow(i, -k), N)
            else:
                powers[(i, k)] = _trunc(gpow(i, k - 1) * gimg[i], N)
        return powers[(i, k)]

    out = None
    for k, c in T1.body.coeffs.items():
        term = Transseries.const(c)
        for i, ki in enumerate(k):
            if ki:
                term = term * gpow(i, ki)
        term = _trunc(term, N)
        out = term if out is None else out + term
    if out is None:
        return Transseries.zero()
    if T1.N is not None:
        out = _trunc(out, N)
    return out


def _trunc(T: Transseries, N) -> Transseries:
    return T.truncate(N) if T.exact else T


def mono_compose(m: Mono, T2: Transseries, N, cache=None) -> Transseries:
    """x^sigma e^L composed with T2."""
    if cache is not None and m in cache:
        return cache[m]
    out = power(T2, m.sigma, N) if m.sigma else Transseries.const(1)
    if m.exp:
        L = None
        for b, c in m.exp:
            t = mono_compose(b, T2, N, cache) * c
            L = t if L is None else L + t
        out = out * exp_ts(L, N)
    if cache is not None:
        cache[m] = out
    return out


def logshift_op(T: Transseries, k: int) -> Transseries:
    """Represent the same value with k more logs: S o L_n = (S o E_k) o L_{n+k}."""
    if k < 0:
        raise TransseriesError("log shift must be nonnegative")
    out = T
    for _ in range(k):
        gm = [mono_from_vector(g, out.basis).compose_exp() for g in out.body.gens.vectors]
        basis = _basis_of(gm)
        gens = GeneratorSet([mono_vector(m, basis) for m in gm])
        body = Multiseries.from_coeffs(gens, out.body.coeffs, out.body.N, out.body.lower)
        out = Transseries(basis, body, out.shift + 1)
    return out
