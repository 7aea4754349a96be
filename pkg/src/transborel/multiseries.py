"""Finitely generated multiseries with exact truncation.

A multiseries is a formal sum  sum_k c_k mu_k  where k runs over a shifted
lattice N^M + k0 and mu_k = prod_i g_i^{k_i} for small generators g_i of an
ordered monomial group.  Monomials are encoded by rational exponent vectors
ordered lexicographically (larger vector = larger monomial), so a generator
is small iff its vector is lexicographically negative.  For plain powers of x
the vector of x^sigma is (sigma,).

Truncation: a series carries N and knows every coefficient whose index class
lies in the window {k >= k0, |k| <= N}, |k| = sum(k).  When generators are
rationally dependent several indices name the same monomial; such a class is
kept only when *all* of its members >= k0 sit in the window, which keeps every
operation exact.
"""
from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

Index = Tuple[int, ...]
Val = Tuple[int, ...]


class MultiseriesError(Exception):
    pass


class ContractivityError(MultiseriesError):
    """Raised when a fixed point iteration fails to freeze within its bound."""


class UnsupportedOrderError(MultiseriesError):
    pass


class _ZeroMagnitude:
    """mag(0): smaller than every monomial."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "ZERO_MAG"

    def __bool__(self):
        return False


ZERO_MAG = _ZeroMagnitude()


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _is_zero(c) -> bool:
    return c == 0


def _div(a, c):
    if isinstance(a, int) and isinstance(c, int):
        return Fraction(a, c)
    return a / c


def _vadd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _vsub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def rank(vectors: Sequence[Sequence[Fraction]]) -> int:
    """Rank over Q by fraction-exact Gaussian elimination."""
    rows = [[_frac(x) for x in v] for v in vectors]
    if not rows:
        return 0
    ncol = len(rows[0])
    r = 0
    for c in range(ncol):
        piv = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c] / rows[r][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        r += 1
        if r == len(rows):
            break
    return r


def lex_sign(v) -> int:
    for x in v:
        if x > 0:
            return 1
        if x < 0:
            return -1
    return 0


class GeneratorSet:
    """Small generators given by rational exponent vectors of a common length."""

    def __init__(self, vectors, labels=None):
        vecs = tuple(tuple(_frac(x) for x in v) for v in vectors)
        if not vecs:
            raise MultiseriesError("need at least one generator")
        d = len(vecs[0])
        if any(len(v) != d for v in vecs):
            raise MultiseriesError("generator vectors must share a length")
        for v in vecs:
            if lex_sign(v) >= 0:
                raise MultiseriesError(f"generator {v} is not small")
        self.vectors = vecs
        self.dim = d
        self.labels = tuple(labels) if labels is not None else None
        scale = 1
        for v in vecs:
            for x in v:
                scale = _lcm(scale, x.denominator)
        self.scale = scale
        self.ivecs = tuple(tuple(int(x * scale) for x in v) for v in vecs)
        self.independent = rank(vecs) == len(vecs)

    @classmethod
    def powers(cls, *sigmas):
        """Level-0 generators x^{sigma} (sigma < 0)."""
        return cls([(s,) for s in sigmas])

    def __len__(self):
        return len(self.vectors)

    def __eq__(self, other):
        return isinstance(other, GeneratorSet) and self.vectors == other.vectors

    def __hash__(self):
        return hash(self.vectors)

    def __repr__(self):
        if self.labels:
            return f"GeneratorSet({list(self.labels)})"
        return f"GeneratorSet({[tuple(str(x) for x in v) for v in self.vectors]})"

    def valuation(self, k: Index) -> Val:
        """Scaled integer exponent vector of mu_k."""
        out = [0] * self.dim
        for ki, g in zip(k, self.ivecs):
            if ki:
                for j in range(self.dim):
                    out[j] += ki * g[j]
        return tuple(out)

    def exponent(self, k: Index) -> Tuple[Fraction, ...]:
        return tuple(Fraction(x, self.scale) for x in self.valuation(k))

    def val_to_exponent(self, v: Val) -> Tuple[Fraction, ...]:
        return tuple(Fraction(x, self.scale) for x in v)

    def merge(self, other: "GeneratorSet"):
        """Union with exponent-vector deduplication.

        Returns (merged, pos_self, pos_other) where pos_* map old generator
        positions into the merged list.
        """
        if self == other:
            ids = list(range(len(self)))
            return self, ids, ids
        vecs = list(self.vectors)
        labels = list(self.labels) if self.labels else None
        pos_other = []
        for i, v in enumerate(other.vectors):
            if v in vecs:
                pos_other.append(vecs.index(v))
            else:
                vecs.append(v)
                if labels is not None:
                    labels.append(other.labels[i] if other.labels else str(v))
                pos_other.append(len(vecs) - 1)
        return GeneratorSet(vecs, labels), list(range(len(self))), pos_other

    def extend(self, vectors, labels=None):
        new = [tuple(_frac(x) for x in v) for v in vectors]
        vecs = list(self.vectors)
        labs = list(self.labels) if self.labels else None
        for i, v in enumerate(new):
            if v not in vecs:
                vecs.append(v)
                if labs is not None:
                    labs.append(labels[i] if labels else str(v))
        return GeneratorSet(vecs, labs)

    def to_json(self):
        return [[str(x) for x in v] for v in self.vectors]


# ---------------------------------------------------------------- windows


def _indices(lower: Index, N: int):
    """All k >= lower with |k| <= N, in graded then lex order."""
    M = len(lower)
    budget = N - sum(lower)
    if budget < 0:
        return []
    out = []
    for tot in range(budget + 1):
        for comp in _compositions(tot, M):
            out.append(tuple(l + c for l, c in zip(lower, comp)))
    return out


def _compositions(n: int, parts: int):
    if parts == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def nullspace(vectors) -> List[Tuple[Fraction, ...]]:
    """Basis of {t in Q^M : sum_i t_i vectors[i] = 0}."""
    M = len(vectors)
    d = len(vectors[0])
    # rows of the d x M matrix
    A = [[_frac(vectors[i][r]) for i in range(M)] for r in range(d)]
    piv_cols = []
    r = 0
    for c in range(M):
        piv = next((i for i in range(r, d) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        pv = A[r][c]
        A[r] = [x / pv for x in A[r]]
        for i in range(d):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        piv_cols.append(c)
        r += 1
        if r == d:
            break
    free = [c for c in range(M) if c not in piv_cols]
    basis = []
    for fc in free:
        t = [Fraction(0)] * M
        t[fc] = Fraction(1)
        for row, pc in enumerate(piv_cols):
            t[pc] = -A[row][fc]
        basis.append(tuple(t))
    return basis


def _class_degree_max(gens: GeneratorSet, lower: Index, E: List[Index]):
    """max sum(k + t) over real kernel vectors t with k + t >= lower, per k.

    The real relaxation bounds the degrees of all members of each class; a
    class is kept only when this bound fits the window.  Vertex enumeration
    over the kernel coordinates, vectorised with numpy.
    """
    import numpy as np
    basis = nullspace(gens.vectors)
    if not basis:
        return [float(sum(k)) for k in E]
    M = len(lower)
    B = np.array([[float(x) for x in b] for b in basis])        # (dk, M)
    dk = B.shape[0]
    K = np.array(E, dtype=float)                                 # (n, M)
    low = np.array(lower, dtype=float)
    colsum = B.sum(axis=1)                                       # objective in s
    best = np.full(len(E), -np.inf)
    for combo in itertools.combinations(range(M), dk):
        A = B[:, combo].T                                        # (dk, dk): rows = constraints
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        Ainv = np.linalg.inv(A)
        rhs = low[list(combo)][None, :] - K[:, list(combo)]      # (n, dk)
        S = rhs @ Ainv.T                                         # (n, dk)
        pts = K + S @ B                                          # (n, M)
        feas = np.all(pts >= low[None, :] - 1e-9, axis=1)
        obj = K.sum(axis=1) + S @ colsum
        best = np.where(feas & (obj > best), obj, best)
    return list(best)


class Window:
    """Known classes of a (gens, lower, N) triple.

    rep: valuation -> representative (lex-max member); dmax: valuation ->
    bound on the degree of the class members; order: valuations in
    decreasing monomial order.
    """

    __slots__ = ("rep", "dmax", "_order")

    def __init__(self, rep, dmax=None):
        self.rep = rep
        self.dmax = dmax
        self._order = None

    @property
    def order(self):
        if self._order is None:
            self._order = sorted(self.rep, reverse=True)
        return self._order


@lru_cache(maxsize=64)
def _solver(gens: GeneratorSet):
    """Pivot rows and inverse matrix for independent generators."""
    M = len(gens)
    rows = []
    for r in range(gens.dim):
        trial = rows + [r]
        if rank([[gens.vectors[i][j] for j in trial] for i in range(M)]) == len(trial):
            rows = trial
        if len(rows) == M:
            break
    A = [[Fraction(gens.ivecs[i][r]) for i in range(M)] for r in rows]
    # Gauss-Jordan inverse
    aug = [row + [Fraction(int(i == j)) for j in range(M)] for i, row in enumerate(A)]
    for c in range(M):
        p = next(i for i in range(c, M) if aug[i][c] != 0)
        aug[c], aug[p] = aug[p], aug[c]
        pv = aug[c][c]
        aug[c] = [x / pv for x in aug[c]]
        for i in range(M):
            if i != c and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[c])]
    inv = [row[M:] for row in aug]
    return rows, inv


@lru_cache(maxsize=1 << 18)
def solve_valuation(gens: GeneratorSet, v: Val) -> Optional[Index]:
    """The unique index with valuation v (independent generators), or None."""
    rows, inv = _solver(gens)
    k = []
    for row in inv:
        x = sum(a * v[r] for a, r in zip(row, rows))
        if x.denominator != 1:
            return None
        k.append(int(x))
    k = tuple(k)
    if gens.valuation(k) != tuple(v):
        return None
    return k


class _LazyRep:
    """Window membership for independent generators without enumeration."""

    __slots__ = ("gens", "lower", "N", "_full")

    def __init__(self, gens, lower, N):
        self.gens = gens
        self.lower = lower
        self.N = N
        self._full = None

    def get(self, v, default=None):
        k = solve_valuation(self.gens, v)
        if k is None or sum(k) > self.N or any(a < b for a, b in zip(k, self.lower)):
            return default
        return k

    def __contains__(self, v):
        return self.get(v) is not None

    def __getitem__(self, v):
        k = self.get(v)
        if k is None:
            raise KeyError(v)
        return k

    def _materialize(self):
        if self._full is None:
            self._full = {self.gens.valuation(k): k for k in _indices(self.lower, self.N)}
        return self._full

    def items(self):
        return self._materialize().items()

    def __iter__(self):
        return iter(self._materialize())

    def __len__(self):
        return len(self._materialize())


@lru_cache(maxsize=4096)
def window(gens: GeneratorSet, lower: Index, N: int) -> Window:
    if gens.independent:
        return Window(_LazyRep(gens, lower, N))
    E = _indices(lower, N)
    dm = _class_degree_max(gens, lower, E)
    groups: Dict[Val, List[Index]] = {}
    dmax: Dict[Val, float] = {}
    for k, d in zip(E, dm):
        v = gens.valuation(k)
        groups.setdefault(v, []).append(k)
        dmax[v] = max(dmax.get(v, -math.inf), d)
    rep = {}
    for v, members in groups.items():
        if dmax[v] <= N + 1e-9:
            rep[v] = max(members)
    return Window(rep, {v: dmax[v] for v in rep})


# ---------------------------------------------------------------- series


INF = None  # truncation of an exact (finite, fully known) series


class Multiseries:
    """Collected multiseries; immutable.

    N is the truncation order; N = None marks an exact series (a finite sum
    with every other coefficient known to vanish).  Exact series keep their
    own representative indices since no window is attached.
    """

    __slots__ = ("gens", "lower", "N", "terms", "_win", "_reps")

    def __init__(self, gens: GeneratorSet, terms: Dict[Val, object], N: Optional[int],
                 lower: Optional[Index] = None, _checked=False, reps=None):
        self.gens = gens
        self.lower = tuple(lower) if lower is not None else (0,) * len(gens)
        if len(self.lower) != len(gens):
            raise MultiseriesError("lower bound length mismatch")
        if N is None:
            self.N = None
            self._win = None
            self.terms = {v: c for v, c in terms.items() if not _is_zero(c)}
            reps = reps or {}
            self._reps = {v: reps[v] if v in reps else None for v in self.terms}
            return
        self.N = int(N)
        self._win = window(gens, self.lower, self.N)
        self._reps = None
        if _checked:
            self.terms = terms
        else:
            rep = self._win.rep
            self.terms = {v: c for v, c in terms.items() if v in rep and not _is_zero(c)}

    @property
    def exact(self) -> bool:
        return self.N is None

    # -- construction
    @classmethod
    def from_coeffs(cls, gens: GeneratorSet, coeffs: Dict[Index, object], N: Optional[int],
                    lower: Optional[Index] = None) -> "Multiseries":
        """Collect an index -> coefficient map (equivalence classes summed)."""
        if lower is None:
            lower = (0,) * len(gens)
            if coeffs:
                lower = tuple(min([0] + [k[i] for k in coeffs]) for i in range(len(gens)))
        lower = tuple(lower)
        acc: Dict[Val, object] = {}
        reps: Dict[Val, Index] = {}
        for k, c in coeffs.items():
            k = tuple(k)
            if any(a < b for a, b in zip(k, lower)):
                raise MultiseriesError(f"index {k} below lower bound {lower}")
            v = gens.valuation(k)
            acc[v] = acc.get(v, 0) + c
            if v not in reps or k > reps[v]:
                reps[v] = k
        return cls(gens, acc, N, lower, reps=reps)

    @classmethod
    def zero(cls, gens, N, lower=None):
        return cls(gens, {}, N, lower)

    @classmethod
    def one(cls, gens, N, lower=None, c=1):
        return cls(gens, {(0,) * gens.dim: c}, N, lower, reps={(0,) * gens.dim: (0,) * len(gens)})

    @classmethod
    def monomial(cls, gens, k, N=None, c=1, lower=None):
        k = tuple(k)
        if lower is None:
            lower = tuple(min(0, x) for x in k)
        return cls.from_coeffs(gens, {k: c}, N, lower)

    # -- views
    @property
    def window(self) -> Window:
        return self._win

    def rep(self, v: Val) -> Index:
        if self._win is not None:
            return self._win.rep[v]
        r = self._reps.get(v)
        if r is None:
            r = _solve_index(self.gens, v, self.lower)
            self._reps[v] = r
        return r

    @property
    def coeffs(self) -> Dict[Index, object]:
        return {self.rep(v): c for v, c in self.terms.items()}

    def coeff(self, k) -> object:
        return self.terms.get(self.gens.valuation(tuple(k)), 0)

    def coeff_at(self, v: Val):
        return self.terms.get(v, 0)

    def known(self, v: Val) -> bool:
        if self._win is None:
            return True
        return v in self._win.rep

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self):
        return len(self.terms)

    def items_desc(self):
        """(valuation, coeff) in decreasing monomial order."""
        return sorted(self.terms.items(), key=lambda t: t[0], reverse=True)

    def __repr__(self):
        tag = "exact" if self.N is None else f"N={self.N}"
        if not self.terms:
            return f"Multiseries(0, {tag})"
        parts = []
        for v, c in self.items_desc()[:8]:
            parts.append(f"{c}*{self.rep(v)}")
        more = " + ..." if len(self.terms) > 8 else ""
        return f"Multiseries({' + '.join(parts)}{more}, {tag})"

    # -- alignment
    def embed(self, gens: GeneratorSet, pos: List[int]) -> "Multiseries":
        """Re-express in another generator list (pos: old slot -> new slot)."""
        if gens == self.gens and list(pos) == list(range(len(gens))):
            return self
        lower = [0] * len(gens)
        for i, p in enumerate(pos):
            lower[p] = self.lower[i]
        coeffs = {}
        for k, c in self.coeffs.items():
            nk = [0] * len(gens)
            for i, p in enumerate(pos):
                nk[p] += k[i]
            coeffs[tuple(nk)] = coeffs.get(tuple(nk), 0) + c
        return Multiseries.from_coeffs(gens, coeffs, self.N, tuple(lower))

    def _align(self, other: "Multiseries"):
        if self.gens == other.gens:
            return self, other
        g, p1, p2 = self.gens.merge(other.gens)
        return self.embed(g, p1), other.embed(g, p2)

    # -- arithmetic
    def __add__(self, other):
        if not isinstance(other, Multiseries):
            if _is_zero(other):
                return self
            other = Multiseries.one(self.gens, None, c=other)
        a, b = self._align(other)
        lower = tuple(min(x, y) for x, y in zip(a.lower, b.lower))
        Ns = [n for n in (a.N, b.N) if n is not None]
        N = min(Ns) if Ns else None
        acc = dict(a.terms)
        for v, c in b.terms.items():
            acc[v] = acc.get(v, 0) + c
        reps = None
        if N is None:
            reps = {v: a.rep(v) for v in a.terms}
            for v in b.terms:
                r = b.rep(v)
                if v not in reps or (r is not None and reps[v] is not None and r > reps[v]):
                    reps[v] = r
        return Multiseries(a.gens, acc, N, lower, reps=reps)

    __radd__ = __add__

    def __neg__(self):
        return Multiseries(self.gens, {v: -c for v, c in self.terms.items()},
                           self.N, self.lower, _checked=True, reps=self._reps)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Multiseries":
        if _is_zero(c):
            return Multiseries(self.gens, {}, self.N, self.lower, _checked=True)
        return Multiseries(self.gens, {v: c * x for v, x in self.terms.items()},
                           self.N, self.lower, _checked=True, reps=self._reps)

    def __mul__(self, other):
        if not isinstance(other, Multiseries):
            return self.scale(other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, n: int):
        if n < 0:
            return reciprocal(self) ** (-n)
        out = Multiseries.one(self.gens, None)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        if self.N is not None and out.N is None:
            out = out.truncate(self.N)
        return out

    def __eq__(self, other):
        if not isinstance(other, Multiseries):
            if other == 0:
                return self.is_zero()
            return NotImplemented
        a, b = self._align(other)
        if a.N is None and b.N is None:
            return a.terms == b.terms
        return (a.N == b.N and a.lower == b.lower and a.terms == b.terms)

    def __hash__(self):
        return hash((self.gens, self.lower, self.N, frozenset(self.terms.items())))

    def equal_to_order(self, other, N=None) -> bool:
        """Equality of the coefficients both sides know (optionally up to N)."""
        a, b = self._align(other)
        if N is None:
            Ns = [n for n in (a.N, b.N) if n is not None]
            if not Ns:
                return a.terms == b.terms
            N = min(Ns)
        lower = tuple(min(x, y) for x, y in zip(a.lower, b.lower))
        win = window(a.gens, lower, N).rep
        for v in set(a.terms) | set(b.terms):
            if v in win and a.terms.get(v, 0) != b.terms.get(v, 0):
                return False
        return True

    def truncate(self, N: int) -> "Multiseries":
        if self.N is not None and N >= self.N:
            return self
        return Multiseries(self.gens, self.terms, N, self.lower)

    def with_lower(self, lower) -> "Multiseries":
        lower = tuple(lower)
        if any(a > b for a, b in zip(lower, self.lower)):
            raise MultiseriesError("new lower bound must not exceed the old one")
        return Multiseries(self.gens, self.terms, self.N, lower, reps=self._reps)

    def shift(self, k: Index) -> "Multiseries":
        """Multiply by the single monomial mu_k (any sign); exact."""
        k = tuple(k)
        dv = self.gens.valuation(k)
        terms = {_vadd(v, dv): c for v, c in self.terms.items()}
        if self.N is None:
            reps = {_vadd(v, dv): _vadd(self.rep(v), k) for v in self.terms}
            return Multiseries(self.gens, terms, None, _vadd(self.lower, k), reps=reps)
        return Multiseries(self.gens, terms, self.N + sum(k),
                           _vadd(self.lower, k), _checked=True)

    def map_coeffs(self, f) -> "Multiseries":
        return Multiseries(self.gens, {v: f(c) for v, c in self.terms.items()},
                           self.N, self.lower, reps=self._reps)

    def filter(self, pred) -> "Multiseries":
        """Keep terms whose valuation satisfies pred (same truncation)."""
        return Multiseries(self.gens, {v: c for v, c in self.terms.items() if pred(v)},
                           self.N, self.lower, _checked=self.N is not None, reps=self._reps)

    # -- order data
    def dominant(self):
        """(coefficient, representative index) of the largest monomial."""
        if not self.terms:
            return ZERO_MAG
        v = max(self.terms)
        return self.terms[v], self.rep(v)

    def mag(self):
        if not self.terms:
            return ZERO_MAG
        return self.gens.val_to_exponent(max(self.terms))

    def constant_term(self):
        return self.terms.get((0,) * self.gens.dim, 0)

    # -- serialization
    def to_json(self) -> str:
        terms = []
        for v, c in self.items_desc():
            terms.append([list(self.rep(v)), _coeff_to_json(c)])
        doc = {"generators": self.gens.to_json(), "labels": list(self.gens.labels or []),
               "lower": list(self.lower), "truncation": self.N, "terms": terms}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, s: str) -> "Multiseries":
        doc = json.loads(s)
        gens = GeneratorSet(doc["generators"], doc.get("labels") or None)
        coeffs = {tuple(k): _coeff_from_json(c) for k, c in doc["terms"]}
        return cls.from_coeffs(gens, coeffs, doc["truncation"], tuple(doc["lower"]))


def _solve_index(gens: GeneratorSet, v: Val, lower: Index):
    """Some index k >= lower with valuation v (small search; exact series only)."""
    for n in range(0, 200):
        for k in _indices(lower, sum(lower) + n):
            if sum(k) == sum(lower) + n and gens.valuation(k) == v:
                return k
    raise MultiseriesError("cannot locate an index for valuation")


def _coeff_to_json(c):
    if isinstance(c, complex):
        return [c.real, c.imag]
    if isinstance(c, float):
        return [c, 0.0]
    return str(Fraction(c) if isinstance(c, int) else c)


def _coeff_from_json(x):
    if isinstance(x, list):
        return complex(x[0], x[1])
    return Fraction(x)


# ---------------------------------------------------------------- products


def product_bounds(a: Multiseries, b: Multiseries):
    lower = _vadd(a.lower, b.lower)
    cands = []
    if a.N is not None:
        cands.append(a.N + sum(b.lower))
    if b.N is not None:
        cands.append(b.N + sum(a.lower))
    return lower, (min(cands) if cands else None)


def mul(a: Multiseries, b: Multiseries) -> Multiseries:
    a, b = a._align(b)
    lower, N = product_bounds(a, b)
    bt = list(b.terms.items())
    acc: Dict[Val, object] = {}
    if N is None:
        reps = {}
        for va, ca in a.terms.items():
            ra = a.rep(va)
            for vb, cb in bt:
                v = tuple(x + y for x, y in zip(va, vb))
                acc[v] = acc.get(v, 0) + ca * cb
                if v not in reps:
                    reps[v] = _vadd(ra, b.rep(vb))
        return Multiseries(a.gens, acc, None, lower, reps=reps)
    rep = window(a.gens, lower, N).rep
    for va, ca in a.terms.items():
        for vb, cb in bt:
            v = tuple(x + y for x, y in zip(va, vb))
            if v in rep:
                acc[v] = acc.get(v, 0) + ca * cb
    return Multiseries(a.gens, acc, N, lower)


def naive_mul(a: Multiseries, b: Multiseries) -> Multiseries:
    """Index-level double loop followed by collection (test oracle)."""
    a, b = a._align(b)
    lower, N = product_bounds(a, b)
    out: Dict[Index, object] = {}
    for ka, ca in a.coeffs.items():
        for kb, cb in b.coeffs.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            out[k] = out.get(k, 0) + ca * cb
    return Multiseries.from_coeffs(a.gens, out, N, lower)


# ---------------------------------------------------------------- order


def minimizer_set(A: Iterable[Sequence[int]]) -> set:
    """Minimal elements of a finite subset of Z^M under the componentwise order."""
    pts = sorted(set(tuple(a) for a in A), key=lambda t: (sum(t), t))
    if not pts:
        raise MultiseriesError("minimizer set of an empty set")
    out: List[Index] = []
    for p in pts:
        if not any(all(x <= y for x, y in zip(m, p)) for m in out):
            out.append(p)
    return set(out)


def compare_real(s1: Multiseries, s2: Multiseries) -> str:
    """'<', '=' or '>' for real-coefficient series."""
    d = s1 - s2
    if d.is_zero():
        return "="
    c, _ = d.dominant()
    if isinstance(c, complex):
        raise UnsupportedOrderError("no order on complex coefficients")
    return ">" if c > 0 else "<"


def much_less(s1: Multiseries, s2: Multiseries) -> bool:
    """s1 << s2: mag(s1) < mag(s2)."""
    a, b = s1._align(s2)
    if b.is_zero():
        return False
    if a.is_zero():
        return True
    return max(a.terms) < max(b.terms)


# ---------------------------------------------------------------- fixed points


class FixedPointResult:
    def __init__(self, value, iterations, history=None):
        self.value = value
        self.iterations = iterations
        self.history = history

    def __repr__(self):
        return f"FixedPointResult(iterations={self.iterations})"


def fixed_point(J: Callable[[Multiseries], Multiseries], S0: Multiseries, N: Optional[int] = None,
                linear: bool = False, history: bool = False, max_iter: Optional[int] = None):
    """Solve S = S0 + J(S) by iteration f_{n+1} = S0 + J(f_n), f_0 = S0.

    For an asymptotically contractive J each coefficient freezes after
    finitely many steps; a coefficient of degree d is final after d+1 steps
    when J raises degree by at least one.  `linear=True` iterates the
    Neumann differences D_{n+1} = J(D_n) instead, which produces the same
    iterates at lower cost.  Returns FixedPointResult.
    """
    if N is None:
        N = S0.N
    if N is None:
        raise MultiseriesError("fixed point needs a truncation order")
    S0 = S0.truncate(N)
    if max_iter is None:
        max_iter = N - sum(S0.lower) + 3
    hist = [S0] if history else None
    f = S0
    if linear:
        d = S0
        for it in range(1, max_iter + 1):
            d = J(d).truncate(N)
            if d.is_zero():
                return FixedPointResult(f, it, hist)
            f = (f + d).truncate(N)
            if hist is not None:
                hist.append(f)
        raise ContractivityError(f"Neumann series did not terminate in {max_iter} steps")
    for it in range(1, max_iter + 1):
        g = (S0 + J(f)).truncate(N)
        if g == f:
            return FixedPointResult(f, it, hist)
        if hist is not None:
            hist.append(g)
        f = g
    raise ContractivityError(f"no stabilization within {max_iter} iterations")


def solve_linear_graded(S1: Multiseries, rhs: Multiseries) -> Multiseries:
    """Solve R = rhs - S1*R when every monomial of S1 is < 1.

    Coefficients are filled in decreasing monomial order; each needs only
    strictly larger ones, the same causality that makes the Neumann
    iteration freeze.
    """
    S1, rhs = S1._align(rhs)
    for v in S1.terms:
        if lex_sign(v) >= 0:
            raise ContractivityError("operator is not contractive (term >= 1)")
    lower = rhs.lower
    N = rhs.N
    # window compatible with products by S1
    lo = tuple(min(a, b) for a, b in zip(lower, _vadd(lower, S1.lower)))
    if lo != lower:
        raise MultiseriesError("S1 must have nonnegative lower bound")
    if N is None:
        raise MultiseriesError("graded solve needs a truncated right-hand side")
    if S1.N is not None:
        N = min(N, S1.N + sum(lower))
    win = window(rhs.gens, lower, N)
    R: Dict[Val, object] = {}
    st = list(S1.terms.items())
    for v in win.order:
        acc = rhs.terms.get(v, 0)
        for v1, c1 in st:
            w = tuple(x - y for x, y in zip(v, v1))
            r = R.get(w)
            if r is not None:
                acc = acc - c1 * r
        if not _is_zero(acc):
            R[v] = acc
    return Multiseries(rhs.gens, R, N, lower, _checked=True)


# ---------------------------------------------------------------- field structure


class ProductForm:
    def __init__(self, c, k1, S1):
        self.c = c
        self.k1 = k1
        self.S1 = S1

    def __iter__(self):
        return iter((self.c, self.k1, self.S1))


def product_form(S: Multiseries, N: Optional[int] = None) -> ProductForm:
    """S = c * mu_{k1} * (1 + S1) with every term of S1 small.

    When some k - k1 has negative entries the generator list is extended by
    the monomials of the minimizer set of {k - k1}, so that S1 has a
    nonnegative index lattice.  Indices k1 refer to the (possibly extended)
    generator list of S1.  For an exact S the truncation N of S1 (relative to
    the dominant term) must be given.
    """
    if S.is_zero():
        raise ZeroDivisionError("product form of zero")
    c, k1 = S.dominant()
    if S.N is None:
        if N is None:
            raise MultiseriesError("product form of an exact series needs N")
        start = N
    else:
        start = S.N - sum(k1) if N is None else min(N, S.N - sum(k1))
    offsets = {k: tuple(a - b for a, b in zip(k, k1)) for k in S.coeffs if k != k1}
    gens = S.gens
    neg = [o for o in offsets.values() if any(x < 0 for x in o)]
    if not neg:
        coeffs = {o: _div(S.coeffs[k], c) for k, o in offsets.items()}
        N1 = _consistent_truncation(S, gens, [], k1, start)
        S1 = Multiseries.from_coeffs(gens, coeffs, N1)
        return ProductForm(c, k1, S1)
    mins = sorted(m for m in minimizer_set(list(offsets.values())) if any(x < 0 for x in m))
    new_vecs = [S.gens.exponent(m) for m in mins]
    labels = None
    if S.gens.labels:
        labels = [f"mu{m}" for m in mins]
    ext = gens.extend(new_vecs, labels)
    # positions of the new generators
    slot = {tuple(ext.vectors[i]): i for i in range(len(ext))}
    M0 = len(gens)
    coeffs = {}
    for k, o in offsets.items():
        nk = [0] * len(ext)
        if all(x >= 0 for x in o):
            nk[:M0] = o
        else:
            m = next(m for m in mins if all(a <= b for a, b in zip(m, o)))
            r = tuple(b - a for a, b in zip(m, o))
            nk[:M0] = r
            nk[slot[S.gens.exponent(m)]] += 1
        coeffs[tuple(nk)] = coeffs.get(tuple(nk), 0) + _div(S.coeffs[k], c)
    k1e = tuple(k1) + (0,) * (len(ext) - M0)
    pos = list(range(M0))
    N1 = _consistent_truncation(S, ext, pos, k1e, start)
    S1 = Multiseries.from_coeffs(ext, coeffs, N1)
    return ProductForm(c, k1e, S1)


def _consistent_truncation(S: Multiseries, gens: GeneratorSet, pos, k1, start: int) -> int:
    """Largest n <= start such that every class known to a lower-0 series of
    truncation n over `gens` corresponds (after multiplying by mu_{k1}) to a
    monomial known in S."""
    if S.N is None:
        return max(start, 0)
    Sg = S if not pos else S.embed(gens, pos)
    vk1 = gens.valuation(k1)
    n = max(start, 0)
    win = window(gens, (0,) * len(gens), n)
    for v, k in win.rep.items():
        if not Sg.known(_vadd(v, vk1)):
            d = win.dmax[v] if win.dmax else sum(k)
            n = min(n, math.ceil(d - 1e-9) - 1)
    return max(n, 0)


def reciprocal(S: Multiseries, N: Optional[int] = None) -> Multiseries:
    """S^{-1}, exact to truncation, via product form and a graded solve of
    R = 1 - S1*R.  A single exact monomial inverts exactly; other exact
    series need the relative order N."""
    if S.is_zero():
        raise ZeroDivisionError("reciprocal of zero series")
    if S.N is None and len(S.terms) == 1:
        c, k1 = S.dominant()
        return Multiseries.monomial(S.gens, tuple(-x for x in k1), None, _div(1, c))
    c, k1, S1 = product_form(S, N)
    one = Multiseries.one(S1.gens, S1.N)
    R = solve_linear_graded(S1, one)
    inv = R.scale(_div(1, c))
    return inv.shift(tuple(-x for x in k1))


def divide(a: Multiseries, b: Multiseries, N: Optional[int] = None) -> Multiseries:
    return a * reciprocal(b, N)


# ---------------------------------------------------------------- sums


def _require_small(S: Multiseries):
    if any(x < 0 for x in S.lower):
        raise MultiseriesError("infinite sums need a nonnegative index lattice")
    if not S.is_zero() and S.known((0,) * S.gens.dim) and S.constant_term() != 0:
        raise MultiseriesError("mag(S) >= 1: series has a constant term")
    for v in S.terms:
        if lex_sign(v) >= 0:
            raise MultiseriesError("mag(S) >= 1")


def infinite_sum(c, S: Multiseries, N: Optional[int] = None) -> Multiseries:
    """sum_n c_n S^n for small S; c is a sequence or a callable n -> c_n."""
    _require_small(S)
    if N is None:
        N = S.N
    if N is None:
        raise MultiseriesError("infinite sum needs a truncation order")
    get = c if callable(c) else (lambda n: c[n])
    out = Multiseries.one(S.gens, N, c=get(0))
    p = Multiseries.one(S.gens, N)
    for n in range(1, N + 1):
        p = (p * S).truncate(N)
        if p.is_zero():
            break
        cn = get(n)
        if not _is_zero(cn):
            out = out + p.scale(cn)
    return out.truncate(N)


def infinite_sum_multi(c: Callable[[Index], object], Ss: Sequence[Multiseries],
                       N: Optional[int] = None) -> Multiseries:
    """sum_k c_k S_1^{k_1} ... S_m^{k_m} over k in N^m, each S_i small."""
    Ss = list(Ss)
    base = Ss[0]
    for s in Ss[1:]:
        base, _ = base._align(s)
    Ss = [s._align(base)[0] for s in Ss]
    for s in Ss:
        _require_small(s)
    if N is None:
        N = min(s.N for s in Ss if s.N is not None)
    m = len(Ss)
    powers = []
    for s in Ss:
        pw = [Multiseries.one(s.gens, N)]
        for _ in range(N):
            nxt = (pw[-1] * s).truncate(N)
            pw.append(nxt)
            if nxt.is_zero():
                break
        powers.append(pw)
    out = Multiseries.zero(Ss[0].gens, N)
    for k in itertools.product(*[range(len(p)) for p in powers]):
        if sum(k) > N:
            continue
        ck = c(k)
        if _is_zero(ck):
            continue
        term = Multiseries.one(Ss[0].gens, N, c=ck)
        for i in range(m):
            if k[i]:
                term = (term * powers[i][k[i]]).truncate(N)
        out = out + term
    return out.truncate(N)


def blend(T: Multiseries, family: Callable[[Index], Multiseries]) -> Multiseries:
    """sum_k c_k mu_k family(k) (finitely many contributions per monomial)."""
    out = None
    for k, c in T.coeffs.items():
        fk = family(k)
        term = fk.scale(c)
        mono = Multiseries.monomial(T.gens, k, None)
        term = mono * term
        out = term if out is None else out + term
    if out is None:
        return Multiseries.zero(T.gens, T.N, T.lower)
    return out


def compo_n_operator(Stilde: Multiseries, coeff_series: Sequence[Multiseries]):
    """J(y) = Stilde + sum_{n>=2} coeff_series[n-2] * y^n (a contractive map)."""
    def J(y):
        out = Stilde
        p = y * y
        for cs in coeff_series:
            out = out + cs * p
            p = p * y
        return out
    return J
