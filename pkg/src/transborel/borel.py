"""Numeric Borel-Laplace summation for scalar normal-form ODEs.

Scalar equation (same convention as formal_ode):

    f' + lam f - (beta/x) f = F0(x) + sum g_kl x^{-k} f^l

Borel variable p, B(x^{-k}) = P_k(p) = p^{k-1}/(k-1)!, products become
convolutions.  Sector 0 (F = B f~_0):

    F = (lam - p)^{-1} [ B F0 + beta (1*F) + sum g_kl P_k * F^{*l} ]

Sector k >= 1 with y_k = x^{-2k} f~_k, Y_k = B y_k:

    Y_k = (lam(1-k) - p)^{-1} [ R_k - (2k + (k-1) beta)(1*Y_k) + G*Y_k ]

where G = B(sum g_kl l x^{-k} f~_0^{l-1}) and R_k collects the products of
lower sectors.  Y_1 = p Q is marched through the undifferentiated relation
-p^2 Q + 2(1*(sQ)) = G*(sQ), Q(0) = 1.

Everything is solved by marching along rays p_j = j h e^{i phi}; convolution
causality makes each new value depend only on values closer to 0 (plus a
small implicit endpoint term).  Integrals use end-corrected Gregory weights
(order 8 by default, order 2 is the plain trapezoid rule).
"""
from __future__ import annotations

import cmath
import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .formal_ode import (NormalFormScalarODE, solve_exponential_corrections,
                         solve_power_series)


class BorelError(Exception):
    pass


class GridError(BorelError):
    pass


class SingularRayError(BorelError):
    pass


class CertificateError(BorelError):
    pass


class MarginError(BorelError):
    pass


class ResurgenceFitError(BorelError):
    pass


NU_LADDER = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
LATERAL = 0.8          # default half-opening of the lateral rays on a Stokes line
H_DEFAULT = 1.0 / 256


# ---------------------------------------------------------------- quadrature


def _bernoulli(n):
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(math.comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B


@lru_cache(maxsize=None)
def gregory_corrections(m: int) -> Tuple[Fraction, ...]:
    """End corrections a_0..a_{m-1} (exact) added to unit weights at each end.

    Fixed by exactness for j^k, k < m, at one end (Euler-Maclaurin end terms);
    m = 1 gives the trapezoid rule.
    """
    if m < 1:
        raise ValueError("m >= 1")
    B = _bernoulli(m + 1)
    rhs = [Fraction(-1, 2)] + [B[k + 1] / (k + 1) for k in range(1, m)]
    A = [[Fraction(j) ** k if (j or k) else Fraction(1) for j in range(m)] + [rhs[k]]
         for k in range(m)]
    for c in range(m):
        piv = next(r for r in range(c, m) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        for r in range(m):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return tuple(A[k][m] / A[k][k] for k in range(m))


def _m_of(order: int) -> int:
    return 1 if order <= 2 else int(order)


@lru_cache(maxsize=16)
def newton_cotes(n: int) -> Tuple[Fraction, ...]:
    """Closed Newton-Cotes weights on nodes 0..n (exact for degree n)."""
    A = [[Fraction(j) ** k if (j or k) else Fraction(1) for j in range(n + 1)]
         + [Fraction(n) ** (k + 1) / (k + 1)] for k in range(n + 1)]
    for c in range(n + 1):
        piv = next(r for r in range(c, n + 1) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        for r in range(n + 1):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return tuple(A[k][n + 1] / A[k][k] for k in range(n + 1))


@lru_cache(maxsize=4096)
def _weights_cached(n: int, m: int) -> np.ndarray:
    if n == 0:
        return np.zeros(1)
    if 1 < m and n < 2 * m - 1:
        # too few nodes for the end corrections: Newton-Cotes on at most two
        # blocks of <= 8 steps
        w = np.zeros(n + 1)
        cut = n if n <= 8 else (n + 1) // 2
        w[:cut + 1] += [float(c) for c in newton_cotes(cut)]
        if cut < n:
            w[cut:] += [float(c) for c in newton_cotes(n - cut)]
        return w
    me = min(m, (n + 1) // 2)
    w = np.ones(n + 1)
    for j, a in enumerate(gregory_corrections(me)):
        w[j] += float(a)
        w[n - j] += float(a)
    return w


def quad_weights(n: int, order: int = 8) -> np.ndarray:
    """Unit-step weights for the integral over [0, n] from samples at 0..n."""
    w = _weights_cached(n, _m_of(order))
    w.flags.writeable = False
    return w


def _conv_at(a, b, n, m, scale):
    """scale * sum_j w_j a_j b_{n-j}."""
    if n == 0:
        return 0j
    w = _weights_cached(n, m)
    return scale * np.dot(w * a[:n + 1], b[n::-1])


def _conv_split(a, b, n, m):
    """(interior, w_end) with sum_j w_j a_j b_{n-j} = interior + w_end(a_0 b_n + a_n b_0)."""
    w = _weights_cached(n, m)
    if n == 1:
        return 0j, w[0]
    return np.dot(w[1:n] * a[1:n], b[n - 1:0:-1]), w[0]


def conv_full(a, b, h, direction=1.0, order=8):
    """All node values of the convolution of two sampled functions."""
    m = _m_of(order)
    L = len(a) - 1
    out = np.zeros(L + 1, dtype=complex)
    s = h * direction
    for n in range(1, L + 1):
        out[n] = _conv_at(a, b, n, m, s)
    return out


# ---------------------------------------------------------------- Borel series


class BorelSeries:
    """Y(p) = sum_j taylor[j] p^j, i.e. taylor[k-1] = y_k/(k-1)!; poly = {k<=0: c}."""

    def __init__(self, taylor, poly=None):
        self.taylor = list(taylor)
        self.poly = dict(poly or {})

    def __call__(self, p):
        p = np.asarray(p, dtype=complex)
        out = np.zeros_like(p)
        for c in reversed(self.taylor):
            out = out * p + complex(c)
        return out

    def radius_estimate(self) -> float:
        """Root-test estimate from the tail of the Taylor coefficients."""
        a = [(j, abs(complex(c))) for j, c in enumerate(self.taylor) if c != 0]
        if len(a) < 4:
            return math.inf
        tail = a[len(a) // 2:]
        vals = [math.exp(-math.log(v) / j) for j, v in tail if j > 0 and v > 0]
        if not vals:
            return math.inf
        r = min(vals[-3:])
        return r if r < 1e12 else math.inf

    def exact(self) -> bool:
        return all(isinstance(c, (int, Fraction)) for c in self.taylor)

    def polynomial_value(self, x):
        return sum(complex(c) * x ** (-k) for k, c in self.poly.items())

    def __repr__(self):
        return f"BorelSeries({self.taylor[:5]}..., poly={self.poly})"


def borel_transform(coeffs, K=None) -> BorelSeries:
    """Term map x^{-k} -> p^{k-1}/(k-1)!; k <= 0 terms are returned as the polynomial part.

    coeffs is a list (index = k) or a dict {k: c}.
    """
    items = coeffs.items() if isinstance(coeffs, dict) else enumerate(coeffs)
    poly, pos = {}, {}
    for k, c in items:
        if c == 0:
            continue
        if k <= 0:
            poly[k] = c
        else:
            pos[k] = c
    top = max(pos) if pos else 0
    if K is not None:
        top = min(top, K)
    taylor = [0] * top
    for k, c in pos.items():
        if k <= top:
            taylor[k - 1] = (Fraction(c) / math.factorial(k - 1)
                             if isinstance(c, (int, Fraction)) else c / math.factorial(k - 1))
    return BorelSeries(taylor, poly)


def _smul(a, b, N):
    """Product of coefficient lists in powers of 1/x, truncated at N."""
    out = [0] * (N + 1)
    for i, x in enumerate(a[:N + 1]):
        if x == 0:
            continue
        for j, y in enumerate(b[:N + 1 - i]):
            if y != 0:
                out[i + j] += x * y
    return out


def _shift(a, k, N):
    return ([0] * k + list(a))[:N + 1]


# ---------------------------------------------------------------- ray samples


@dataclass
class RaySamples:
    values: np.ndarray
    h: float
    angle: float = 0.0
    branch: str = ""
    nu: Optional[float] = None
    cert: dict = field(default_factory=dict)
    poly: dict = field(default_factory=dict)
    order: int = 8
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    @property
    def L(self) -> int:
        return len(self.values) - 1

    @property
    def direction(self) -> complex:
        return cmath.exp(1j * self.angle)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.L + 1) * self.h

    @property
    def p(self) -> np.ndarray:
        return self.t * self.direction

    def same_grid(self, other: "RaySamples") -> bool:
        return (self.L == other.L and abs(self.h - other.h) < 1e-15
                and abs(cmath.exp(1j * (self.angle - other.angle)) - 1) < 1e-12)

    def _check(self, other):
        if not self.same_grid(other):
            raise GridError("ray samples live on different grids")

    def like(self, values, **kw) -> "RaySamples":
        d = dict(h=self.h, angle=self.angle, branch=self.branch, nu=self.nu,
                 order=self.order)
        d.update(kw)
        return RaySamples(values, **d)

    def __add__(self, other):
        self._check(other)
        return self.like(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.like(self.values - other.values)

    def scale(self, c):
        return self.like(self.values * c)

    def growth_constant(self, nu=None) -> float:
        """Smallest M with |F(t)| <= M e^{nu t} on the samples."""
        nu = self.nu if nu is None else nu
        if nu is None:
            raise CertificateError("no growth rate recorded")
        return float(np.max(np.abs(self.values) * np.exp(-nu * self.t)))

    def sidecar(self) -> dict:
        return {"angle": self.angle, "h": self.h, "L": self.L, "nu": self.nu,
                "branch": self.branch, "order": self.order, "label": self.label,
                "poly": {str(k): str(v) for k, v in self.poly.items()},
                "cert": _jsonable(self.cert)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "re_p", "im_p", "re_Y", "im_Y"])
        for j, (p, y) in enumerate(zip(self.p, self.values)):
            w.writerow([j, repr(float(p.real)), repr(float(p.imag)), repr(float(y.real)), repr(float(y.imag))])
        return buf.getvalue()

    def save(self, path_csv: str):
        with open(path_csv, "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(path_csv.rsplit(".", 1)[0] + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path_csv: str) -> "RaySamples":
        with open(path_csv.rsplit(".", 1)[0] + ".json") as fh:
            meta = json.load(fh)
        rows = list(csv.DictReader(open(path_csv)))
        vals = np.array([complex(float(r["re_Y"]), float(r["im_Y"])) for r in rows])
        return cls(vals, meta["h"], meta["angle"], meta["branch"], meta["nu"],
                   meta.get("cert", {}), order=meta.get("order", 8),
                   label=meta.get("label", ""))


def _jsonable(d):
    if isinstance(d, dict):
        return {str(k): _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    if isinstance(d, complex):
        return [d.real, d.imag]
    if isinstance(d, (np.floating, np.integer)):
        return d.item()
    if isinstance(d, Fraction):
        return str(d)
    return d


def sample(fun: Callable, angle=0.0, h=H_DEFAULT, L=256, **kw) -> RaySamples:
    """Samples of a callable on a ray (convenience for closed forms)."""
    p = np.arange(L + 1) * h * cmath.exp(1j * angle)
    return RaySamples(np.asarray(fun(p), dtype=complex), h, angle, **kw)


def convolve(f: RaySamples, g: RaySamples) -> RaySamples:
    """(f*g)(p) = int_0^p f(s) g(p-s) ds at every node of the common ray."""
    f._check(g)
    return f.like(conv_full(f.values, g.values, f.h, f.direction, f.order),
                  nu=None, cert={}, branch=f.branch)


@dataclass
class WeightedNormParams:
    nu: float
    angle: float = 0.0


def weighted_norm(f: RaySamples, params, growth: Optional[Tuple[float, float]] = None) -> float:
    """int_0^inf |f(t e^{i phi})| e^{-nu t} dt: quadrature plus tail bound.

    growth = (M, nu_f) with |f| <= M e^{nu_f t} beyond the samples; defaults
    to the certificate stored on f.  Without one the tail is left out and a
    warning is issued.
    """
    nu = params.nu if isinstance(params, WeightedNormParams) else float(params)
    w = quad_weights(f.L, f.order)
    core = f.h * float(np.dot(w, np.abs(f.values) * np.exp(-nu * f.t)))
    if growth is None:
        growth = f.cert.get("growth")
    if growth is None:
        warnings.warn("weighted_norm: no growth certificate, tail unbounded", RuntimeWarning)
        return core
    M, nuf = growth
    if nuf >= nu:
        warnings.warn("weighted_norm: growth rate exceeds nu, tail unbounded", RuntimeWarning)
        return math.inf
    P = f.L * f.h
    return core + M * math.exp(-(nu - nuf) * P) / (nu - nuf)


# ---------------------------------------------------------------- certificates


def _ray_distance(point: complex, angle: float) -> float:
    """Distance from point to the ray {t e^{i angle}, t >= 0}."""
    d = cmath.exp(1j * angle)
    t = (point * d.conjugate()).real
    if t <= 0:
        return abs(point)
    return abs(point - t * d)


def _sector0_terms(eq: NormalFormScalarODE) -> Dict[Tuple[int, int], complex]:
    """g with beta folded in as the (1, 1) term (beta 1*F = beta P_1*F)."""
    terms = {kl: complex(c) for kl, c in eq.g.items()}
    if eq.beta != 0:
        terms[(1, 1)] = terms.get((1, 1), 0) + complex(eq.beta)
    return terms


def contraction_certificate(eq: NormalFormScalarODE, angle: float, nu: float) -> dict:
    """Bound for the sector-0 map N(F) = (lam-p)^{-1}[BF0 + sum g P_k*F^{*l}] in L1_nu.

    Uses ||P_k||_nu = nu^{-k} and ||f*g|| <= ||f|| ||g||.  With
    R = 2||BF0||/d1 the map sends the R-ball to itself and is a contraction
    on it when K = max(image ratio, Lipschitz) < 1.
    """
    lam = complex(eq.lam)
    d1 = _ray_distance(lam, angle)
    if d1 < 1e-12:
        return {"nu": nu, "K": math.inf, "d1": d1, "R": math.inf, "ok": False}
    bf0 = sum(abs(complex(c)) * nu ** (-k) for k, c in eq.forcing.items())
    terms = _sector0_terms(eq)
    R = max(2 * bf0 / d1, 1e-300)
    img = (bf0 + sum(abs(c) * nu ** (-k) * R ** l for (k, l), c in terms.items())) / d1
    lip = sum(abs(c) * nu ** (-k) * l * R ** (l - 1) for (k, l), c in terms.items()) / d1
    K = max(img / R, lip)
    return {"nu": nu, "K": K, "ratio": img / R, "lipschitz": lip, "d1": d1, "R": R,
            "BF0": bf0, "ok": K < 1}


def choose_nu(eq, angle, ladder=NU_LADDER) -> dict:
    """Smallest nu on the ladder whose certificate passes."""
    for nu in ladder:
        c = contraction_certificate(eq, angle, nu)
        if c["ok"]:
            return c
    raise CertificateError(f"contraction certificate fails for every nu in {ladder}: "
                           f"K({ladder[-1]}) = {contraction_certificate(eq, angle, ladder[-1])['K']:.3g}")


def majorant_rho(eq: NormalFormScalarODE, lam_nu: float, nu: float, d: float = 1.0) -> float:
    """Growth rate rho of ||Y_k||_nu <= const rho^k from the majorant equation

        psi = lam_nu z + lam_nu psi + sum_l A_l psi^l,  A_l = sum_k |g_kl| nu^{-k} / d

    rho = 1/z*, z* the radius of the branch psi(z) (dz/dpsi = 0)."""
    if lam_nu >= 1:
        return math.inf
    A = {}
    for (k, l), c in eq.g.items():
        if l >= 2:
            A[l] = A.get(l, 0.0) + abs(complex(c)) * nu ** (-k) / d
    if not A:
        return 0.0

    def z(psi):
        return (psi * (1 - lam_nu) - sum(a * psi ** l for l, a in A.items())) / lam_nu

    def dz(psi):
        return ((1 - lam_nu) - sum(l * a * psi ** (l - 1) for l, a in A.items())) / lam_nu

    lo, hi = 0.0, 1.0
    while dz(hi) > 0:
        hi *= 2
        if hi > 1e12:
            return 0.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if dz(mid) > 0:
            lo = mid
        else:
            hi = mid
    zs = z(lo)
    return 1.0 / zs if zs > 0 else math.inf


# ---------------------------------------------------------------- formal data


class _Formal:
    """Exact formal data reused by the marching (germs of every auxiliary array)."""

    def __init__(self, eq: NormalFormScalarODE, K: int, N: int, gauge=1):
        self.eq, self.K, self.N = eq, K, N
        if K > 0:
            fam = solve_exponential_corrections(eq, K, N, gauge)
            self.fam = fam
            f = {k: fam.series((k,)) for k in range(K + 1)}
        else:
            self.fam = None
            f = {0: solve_power_series(eq, N)}
        self.f = f
        # y_k = x^{-2k} f~_k as lists in powers of 1/x
        self.y = {k: _shift(f[k], 2 * k, N) for k in f}
        self.lmax = eq.nonlinear_degree()

    def pow0(self, l):
        out = [1] + [0] * self.N
        for _ in range(l):
            out = _smul(out, self.y[0], self.N)
        return out

    def G_series(self):
        out = [0] * (self.N + 1)
        for (k, l), c in self.eq.g.items():
            s = _shift(self.pow0(l - 1), k, self.N)
            for j, v in enumerate(s):
                out[j] += c * l * v
        return out

    def sector_powers(self, kmax):
        """SP[l][j] = [ytilde^l]_j (lists), with SP[l][kmax] computed with y_kmax = 0."""
        y = dict(self.y)
        y[kmax] = [0] * (self.N + 1)
        SP = {1: {j: y[j] for j in range(kmax + 1)}}
        for l in range(2, self.lmax + 1):
            SP[l] = {}
            for j in range(kmax + 1):
                acc = [0] * (self.N + 1)
                for i in range(j + 1):
                    pr = _smul(y[i], SP[l - 1][j - i], self.N)
                    acc = [a + b for a, b in zip(acc, pr)]
                SP[l][j] = acc
        return SP

    def R_series(self, k):
        SP = self.sector_powers(k)
        out = [0] * (self.N + 1)
        for (kp, l), c in self.eq.g.items():
            s = _shift(SP[l][k], kp, self.N)
            for j, v in enumerate(s):
                out[j] += c * v
        return out


def _germ_values(series, p):
    return borel_transform(series)(p)


# ---------------------------------------------------------------- continuation


def _resolve_ray(eq, angle, branch, lateral):
    """Actual marching angle and path descriptor for a requested ray/branch."""
    lam = complex(eq.lam)
    arg = cmath.phase(lam)
    on_line = abs(cmath.exp(1j * (angle - arg)) - 1) < 1e-9
    if branch in ("+", "-"):
        if not on_line:
            return angle, branch, f"ray {angle:.6g} ({branch} requested off the Stokes line)"
        th = arg + (lateral if branch == "+" else -lateral)
        return th, branch, f"lateral ray arg p = {th:.6g} ({'above' if branch == '+' else 'below'} the singularities k*lambda)"
    if on_line:
        raise SingularRayError(f"ray arg p = {angle:.6g} runs through the singularities "
                               f"k*lambda; request branch '+' or '-'")
    return angle, "", f"ray {angle:.6g}"


def _nodes(h, L, angle):
    d = cmath.exp(1j * angle)
    return np.arange(L + 1) * h * d, d


def continue_Y0(eq: NormalFormScalarODE, angle=0.0, h=H_DEFAULT, L=None, branch=None,
                nu=None, P=16.0, order=8, lateral=LATERAL, germ_order=40, certify=True,
                formal: Optional[_Formal] = None) -> RaySamples:
    """Sector-0 Borel transform F = B f~_0 marched along a ray.

    The first 2m-1 nodes come from the Taylor germ; later nodes solve the
    Borel equation with the newest value obtained by a short scalar
    iteration of the endpoint terms.
    """
    ang, br, path = _resolve_ray(eq, angle, branch, lateral)
    cert = {}
    if certify:
        cert = choose_nu(eq, ang) if nu is None else contraction_certificate(eq, ang, nu)
        if not cert["ok"]:
            raise CertificateError(f"contraction certificate fails: K(nu={cert['nu']}) = {cert['K']:.4g}")
        nu = cert["nu"]
    if L is None:
        L = int(math.ceil(P / h))
    m = _m_of(order)
    p, d = _nodes(h, L, ang)
    s = h * d
    lam = complex(eq.lam)
    formal = formal or _Formal(eq, 0, germ_order)
    terms = _sector0_terms(eq)
    lmax = max([l for (_, l) in terms] + [1])
    ks = sorted({k for (k, _) in terms if k >= 1} | {1})
    Pk = {k: p ** (k - 1) / math.factorial(k - 1) for k in ks}
    BF0 = np.zeros(L + 1, dtype=complex)
    for k, c in eq.forcing.items():
        BF0 += complex(c) * p ** (k - 1) / math.factorial(k - 1)
    F = np.zeros(L + 1, dtype=complex)
    Fp = {l: np.zeros(L + 1, dtype=complex) for l in range(2, lmax + 1)}
    nseed = min(2 * m - 1, L + 1)
    ps = p[:nseed]
    F[:nseed] = _germ_values(formal.y[0], ps)
    for l in Fp:
        Fp[l][:nseed] = _germ_values(formal.pow0(l), ps)

    def pw(l):
        return F if l == 1 else Fp[l]

    for n in range(nseed, L + 1):
        w = _weights_cached(n, m)
        w0 = w[0]
        inner_pow = {l: np.dot(w[1:n] * F[1:n], pw(l - 1)[n - 1:0:-1]) for l in Fp}
        inner_k = {}
        for (k, l) in terms:
            if k >= 1:
                X = pw(l)
                inner_k[(k, l)] = np.dot(w[1:n] * Pk[k][1:n], X[n - 1:0:-1])
        v = F[n - 1] if n > 0 else 0
        for it in range(60):
            F[n] = v
            for l in range(2, lmax + 1):
                prev = pw(l - 1)
                Fp[l][n] = s * (inner_pow[l] + w0 * (F[0] * prev[n] + F[n] * prev[0]))
            rhs = BF0[n]
            for (k, l), c in terms.items():
                X = pw(l)
                if k == 0:
                    rhs += c * X[n]
                else:
                    rhs += c * s * (inner_k[(k, l)] + w0 * (Pk[k][0] * X[n] + Pk[k][n] * X[0]))
            vn = rhs / (lam - p[n])
            if abs(vn - v) <= 1e-15 * (1 + abs(vn)):
                v = vn
                break
            v = vn
        else:
            raise BorelError(f"endpoint iteration did not settle at node {n}")
        F[n] = v
        for l in range(2, lmax + 1):
            prev = pw(l - 1)
            Fp[l][n] = s * (inner_pow[l] + w0 * (F[0] * prev[n] + F[n] * prev[0]))
    out = RaySamples(F, h, ang, br, nu, dict(cert), order=order, label="Y0")
    out.cert["path"] = path
    if certify:
        out.cert["growth"] = (out.growth_constant(nu), nu)
        out.cert["norm_bound"] = cert["R"]
    out._powers = Fp  # reused by the sector equations
    return out


def _G_samples(eq, formal, Y0: RaySamples):
    """G = B(sum g_kl l x^{-k} f~_0^{l-1}) on the ray of Y0."""
    L, h, m = Y0.L, Y0.h, _m_of(Y0.order)
    p, d = Y0.p, Y0.direction
    nseed = min(2 * m - 1, L + 1)
    powers = getattr(Y0, "_powers", {})
    G = np.zeros(L + 1, dtype=complex)
    for (k, l), c in eq.g.items():
        if l == 1:
            X = None
        elif l == 2:
            X = Y0.values
        else:
            X = powers.get(l - 1)
            if X is None:
                raise BorelError("missing convolution powers of Y0")
        if X is None:
            G += complex(c) * p ** (k - 1) / math.factorial(k - 1)
        elif k == 0:
            G += complex(c) * l * X
        else:
            Pk = p ** (k - 1) / math.factorial(k - 1)
            G += complex(c) * l * conv_full(Pk, X, h, d, Y0.order)
    G[:nseed] = _germ_values(formal.G_series(), p[:nseed])
    if abs(G[0]) > 1e-12:
        raise BorelError("B(G) must vanish at 0 (linear part not normalized)")
    return G


def continue_Yk(eq: NormalFormScalarODE, lower: Dict[int, RaySamples], k: int,
                formal: Optional[_Formal] = None, germ_order=40, G=None) -> RaySamples:
    """Sector-k Borel transform Y_k = B(x^{-2k} f~_k) on the ray of lower[0]."""
    if k < 1:
        raise ValueError("k >= 1")
    missing = [j for j in range(k) if j not in lower]
    if missing:
        raise BorelError(f"continue_Yk({k}) needs lower sectors {missing}")
    Y0 = lower[0]
    for j in range(1, k):
        Y0._check(lower[j])
    L, h, m = Y0.L, Y0.h, _m_of(Y0.order)
    p, d = Y0.p, Y0.direction
    s = h * d
    nseed = min(2 * m - 1, L + 1)
    if formal is None or formal.K < k or formal.fam is None:
        formal = _Formal(eq, k, germ_order)
    if G is None:
        G = _G_samples(eq, formal, Y0)
    lam = complex(eq.lam)
    beta = complex(eq.beta)
    Y = np.zeros(L + 1, dtype=complex)
    Y[:nseed] = _germ_values(formal.y[k], p[:nseed])
    if k == 1:
        Q = np.zeros(L + 1, dtype=complex)
        Q[0] = 1.0
        Q[1:nseed] = Y[1:nseed] / p[1:nseed]
        sQ = p * Q
        for n in range(nseed, L + 1):
            w = _weights_cached(n, m)
            one = s * np.dot(w[:n], sQ[:n])
            gconv = s * np.dot(w[1:n + 1] * G[1:n + 1], sQ[n - 1::-1])
            denom = p[n] * (p[n] - 2 * s * w[n])
            Q[n] = (2 * one - gconv) / denom
            sQ[n] = p[n] * Q[n]
        Y = sQ.copy()
        Y[:nseed] = _germ_values(formal.y[1], p[:nseed])
        out = Y0.like(Y, label="Y1", cert={"path": Y0.cert.get("path", "")})
        out.Q = Q
        return out
    # R_k from lower sectors: convolution powers of ytilde with y_k = 0
    SPs = formal.sector_powers(k)
    lmax = formal.lmax
    vals = {j: (lower[j].values if j < k else np.zeros(L + 1, dtype=complex))
            for j in range(k + 1)}
    SP = {1: vals}
    for l in range(2, lmax + 1):
        SP[l] = {}
        for j in range(k + 1):
            acc = np.zeros(L + 1, dtype=complex)
            for i in range(j + 1):
                a, b = vals[i], SP[l - 1][j - i]
                if not (np.any(a) and np.any(b)):
                    continue
                acc += conv_full(a, b, h, d, Y0.order)
            acc[:nseed] = _germ_values(SPs[l][j], p[:nseed])
            SP[l][j] = acc
    R = np.zeros(L + 1, dtype=complex)
    for (kp, l), c in eq.g.items():
        X = SP[l][k]
        if kp == 0:
            R += complex(c) * X
        else:
            Pk = p ** (kp - 1) / math.factorial(kp - 1)
            R += complex(c) * conv_full(Pk, X, h, d, Y0.order)
    mu = lam * (1 - k)
    cc = 2 * k + (k - 1) * beta
    for n in range(nseed, L + 1):
        w = _weights_cached(n, m)
        one = s * np.dot(w[:n], Y[:n])
        gconv = s * np.dot(w[1:n + 1] * G[1:n + 1], Y[n - 1::-1])
        Y[n] = (R[n] - cc * one + gconv) / (mu - p[n] + cc * s * w[n])
    return Y0.like(Y, label=f"Y{k}", cert={"path": Y0.cert.get("path", "")})


def continue_sectors(eq: NormalFormScalarODE, K: int, angle=0.0, h=H_DEFAULT, L=None,
                     branch=None, nu=None, P=16.0, order=8, lateral=LATERAL,
                     germ_order=40) -> Dict[int, RaySamples]:
    """Y_0..Y_K on one ray (shared formal germs and G)."""
    formal = _Formal(eq, max(K, 0), germ_order)
    Y0 = continue_Y0(eq, angle, h, L, branch, nu, P, order, lateral, germ_order,
                     formal=formal)
    out = {0: Y0}
    if K >= 1:
        G = _G_samples(eq, formal, Y0) if eq.g else np.zeros(Y0.L + 1, dtype=complex)
        for k in range(1, K + 1):
            out[k] = continue_Yk(eq, out, k, formal=formal, G=G)
    return out


def small_p_exponent(Y: RaySamples, t_lo=0.02, t_hi=0.08) -> float:
    """Slope of log|Y| against log|p| on a small-p window."""
    t = Y.t
    sel = (t >= t_lo) & (t <= t_hi) & (np.abs(Y.values) > 0)
    if sel.sum() < 3:
        raise BorelError("not enough samples near p = 0")
    return float(np.polyfit(np.log(t[sel]), np.log(np.abs(Y.values[sel])), 1)[0])


# ---------------------------------------------------------------- Laplace


@dataclass
class LaplaceValue:
    value: complex
    tail: float

    def __complex__(self):
        return complex(self.value)


def laplace(f: RaySamples, x, nu=None, bound=None, detail=False):
    """int_0^{inf e^{i phi}} e^{-px} F(p) dp + polynomial part.

    The truncation tail is bounded by R e^{-(c-nu)P} with c = Re(x e^{i phi})
    and R an L1_nu bound on F (the contraction radius when recorded), else
    by M e^{-(c-nu)P}/(c-nu) from the a posteriori growth constant.
    """
    x = complex(x)
    nu = f.nu if nu is None else nu
    c = (x * f.direction).real
    if nu is None:
        nu = 0.0
    if c <= nu:
        raise MarginError(f"Re(x e^(i phi)) = {c:.4g} <= nu = {nu:.4g}: Laplace integral not certified")
    w = quad_weights(f.L, f.order)
    val = f.h * f.direction * np.dot(w, np.exp(-f.p * x) * f.values)
    for k, a in f.poly.items():
        val += complex(a) * x ** (-k)
    P = f.L * f.h
    if bound is None:
        bound = f.cert.get("norm_bound")
    if bound is not None:
        tail = bound * math.exp(-(c - nu) * P)
    else:
        M = f.growth_constant(nu) if f.nu is not None or nu else float(np.max(np.abs(f.values)))
        tail = M * math.exp(-(c - nu) * P) / (c - nu)
    if detail:
        return LaplaceValue(complex(val), tail)
    return complex(val)


# ---------------------------------------------------------------- transseries sums


def sum_transseries(x, C, Ys: Dict[int, RaySamples], eq: NormalFormScalarODE,
                    detail=False):
    """f = L Y_0 + sum_k C^k xi^k x^{2k} L Y_k, xi = e^{-lam x} x^beta.

    Returns (value, error bound); the bound adds the Laplace tails and a
    geometric estimate of the first omitted sector.
    """
    x = complex(x)
    xi = cmath.exp(-complex(eq.lam) * x) * x ** complex(eq.beta)
    lv = laplace(Ys[0], x, detail=True)
    val, err = lv.value, lv.tail
    K = max(Ys)
    last = abs(lv.value)
    for k in range(1, K + 1):
        lk = laplace(Ys[k], x, nu=Ys[0].nu, detail=True)
        term = C ** k * xi ** k * x ** (2 * k) * lk.value
        val += term
        err += abs(C * xi) ** k * abs(x) ** (2 * k) * lk.tail
        last = abs(term)
    if C != 0 and K >= 1:
        ratio = abs(C * xi) * 4
        err += last * ratio / max(1 - ratio, 1e-3) if ratio < 1 else math.inf
    return (complex(val), err) if detail else complex(val)


FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
FD6 = np.array([0, -1 / 60, 3 / 20, -3 / 4, 0, 3 / 4, -3 / 20, 1 / 60, 0])


def ode_residual(eq: NormalFormScalarODE, f, fp, x):
    """f' + lam f - (beta/x) f - F0 - sum g x^{-k} f^l."""
    r = fp + complex(eq.lam) * f - complex(eq.beta) / x * f
    r -= sum(complex(c) * x ** (-k) for k, c in eq.forcing.items())
    r -= sum(complex(c) * x ** (-k) * f ** l for (k, l), c in eq.g.items())
    return r


def residual_check(fun: Callable, eq: NormalFormScalarODE, xs, delta=0.05, tol=None):
    """max |ODE residual| over xs, derivative by 8th order central differences.

    With tol given, raises when the 6th/8th order derivative estimates
    disagree by more than tol/10 (step too large for the tolerance).
    """
    worst = 0.0
    for x in xs:
        x = complex(x)
        vals = np.array([fun(x + (j - 4) * delta) for j in range(9)])
        d8 = np.dot(FD8, vals) / delta
        if tol is not None:
            d6 = np.dot(FD6, vals) / delta
            if abs(d8 - d6) > tol / 10:
                raise BorelError(f"finite-difference step {delta} too large for tolerance {tol}")
        worst = max(worst, abs(ode_residual(eq, vals[4], d8, x)))
    return worst


# ---------------------------------------------------------------- balanced average


def balanced_average(plus: RaySamples, minus: RaySamples, mixed: Sequence[RaySamples] = (),
                     Jmax=2, alpha=0.5) -> RaySamples:
    """Y^ba = Y^+ + sum_{j=1}^{Jmax} alpha^j (Y^- - Y^{-(j-1)+}).

    mixed[i] is the continuation Y^{-i+} (below the first i singularities,
    above the rest); mixed[0] defaults to plus.  The certificate records the
    last term's size and a geometric estimate of the omitted remainder.
    """
    mixed = list(mixed)
    if not mixed:
        mixed = [plus]
    if len(mixed) < Jmax:
        raise BorelError(f"balanced average to Jmax={Jmax} needs {Jmax} continuations, got {len(mixed)}")
    for y in [minus] + mixed:
        plus._check(y)
    out = plus.values.copy()
    norms = []
    for j in range(1, Jmax + 1):
        term = alpha ** j * (minus.values - mixed[j - 1].values)
        out += term
        norms.append(float(np.max(np.abs(term))))
    rem = 0.0
    if len(norms) >= 2 and norms[-2] > 0:
        q = norms[-1] / norms[-2]
        rem = norms[-1] * q / (1 - q) if q < 1 else math.inf
    elif norms:
        rem = norms[-1]
    cert = {"Jmax": Jmax, "alpha": alpha, "term_sup": norms, "remainder_estimate": rem}
    return plus.like(out, branch="ba", cert=cert, label=plus.label + "^ba")


@dataclass
class BalancedValue:
    value: complex
    tail: float
    terms: List[complex]


def balanced_laplace(x, S, yp, ym, f1m, f2m=None, lam=1, beta=0, Jmax=2, alpha=0.5):
    """Laplace transform of the balanced average on the Stokes line.

    yp, ym: lateral sums L Y0^+-; f1m, f2m: sectors x^{2k} L Y_k^- below.
    The j-th term L(Y^- - Y^{-(j-1)+}) is expressed through the lateral
    sums and the resurgence relation Y^{-j+} - Y^{-(j-1)+} = (-S)^j
    [Y_j^-(p - j)]'' (one exponential shift e^{-jx} per step):
        j = 1: ym - yp
        j = 2: ym - yp + S xi f1m
    Terms j > 2 are bounded by alpha^j |S xi|^j times the sector size.
    """
    x = complex(x)
    xi = cmath.exp(-complex(lam) * x) * x ** complex(beta)
    T = [ym - yp]
    if Jmax >= 2:
        T.append(ym - yp + S * xi * f1m)
    if Jmax > 2:
        raise BorelError("balanced_laplace implements Jmax <= 2")
    val = yp + sum(alpha ** (j + 1) * t for j, t in enumerate(T))
    size = abs(f2m) if f2m is not None else abs(f1m) ** 2
    tail = 2 * alpha ** (Jmax + 1) * abs(S * xi) ** (Jmax) * max(size, 1.0) * abs(S * xi)
    return BalancedValue(complex(val), tail, T)


# ---------------------------------------------------------------- Stokes constants


@dataclass
class StokesEstimate:
    S1: complex
    betaPrime: object
    m: int
    fitResidual: float
    S1_route2: Optional[complex] = None
    agreement: Optional[float] = None
    halfjump: Optional[complex] = None
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable({"S1": self.S1, "S1_route2": self.S1_route2, "betaPrime": str(self.betaPrime),
                          "m": self.m, "fitResidual": self.fitResidual, "agreement": self.agreement,
                          "halfjump": self.halfjump, "detail": self.detail})


def _log_cut(z):
    """log z with arg in (0, 2pi) (cut along the positive real axis)."""
    z = np.asarray(z, dtype=complex)
    return np.log(np.abs(z)) + 1j * np.mod(np.angle(z), 2 * np.pi)


def _pow_cut(z, g):
    return np.exp(g * _log_cut(z))


def _principal_Y0(eq, points, h, order, formal):
    """Principal-sheet Y0 at each point (straight ray from 0)."""
    out = []
    for q in points:
        r = abs(q)
        n = max(int(math.ceil(r / h)), 2 * _m_of(order))
        Y = continue_Y0(eq, cmath.phase(q), r / n, L=n, order=order, certify=False,
                        formal=formal)
        out.append(Y.values[-1])
    return np.array(out)


def stokes_route1(eq: NormalFormScalarODE, radii=(0.35, 0.5), nang=24, M=30, h=H_DEFAULT,
                  order=8, N=60, formal=None, fit_beta=None):
    """S1 from the singular part of the principal-sheet Y0 near p = lam = 1.

    Y0(1+z) = c * Sing(z) + sum_{n<=M} b_n z^n fitted by least squares on
    circles |z| = radii, arg z in [pi/4, 7pi/4], with the cut on z > 0.
    Integer beta:  Sing = log(z) W(z) + sum_{j<=beta} f1j (-1)^{beta-j}(beta-j)!/z^{beta-j+1},
                   W = sum_{j>beta} f1j z^{j-beta-1}/(j-beta-1)!,   S1 = -2 pi i c.
    Otherwise:     Sing = sum_j f1j z^{j+g}/Gamma(j+g+1), g = -beta-1 (or fitted),
                   S1 = c (1 - e^{2 pi i g}).
    The jump across the cut is then S1 * B(x^beta f~_1)(z).
    """
    if complex(eq.lam) != 1:
        raise BorelError("stokes_route1 expects lambda normalized to 1")
    formal = formal if formal is not None and formal.K >= 1 and formal.N >= N else _Formal(eq, 1, N)
    f1 = [complex(c) for c in formal.f[1]]
    beta = eq.beta
    psis = np.linspace(math.pi / 4, 7 * math.pi / 4, nang)
    z = np.concatenate([r * np.exp(1j * psis) for r in radii])
    data = _principal_Y0(eq, 1 + z, h, order, formal)
    rmax = max(radii)

    def sing(zz, g=None):
        if isinstance(beta, Fraction) and beta.denominator == 1 and g is None:
            b = int(beta)
            Lz = _log_cut(zz)
            W = np.zeros_like(zz)
            poles = np.zeros_like(zz)
            for j, c in enumerate(f1):
                if j > b:
                    W += c * zz ** (j - b - 1) / math.factorial(j - b - 1)
                else:
                    n = b - j
                    poles += c * (-1) ** n * math.factorial(n) / zz ** (n + 1)
            return Lz * W + poles
        g = -float(beta) - 1 if g is None else g
        out = np.zeros_like(zz)
        for j, c in enumerate(f1):
            out += c * _pow_cut(zz, j + g) / math.gamma(j + g + 1)
        return out

    def fit(g=None):
        A = np.empty((len(z), M + 2), dtype=complex)
        A[:, 0] = sing(z, g)
        for n in range(M + 1):
            A[:, n + 1] = (z / rmax) ** n
        sol, *_ = np.linalg.lstsq(A, data, rcond=None)
        res = np.linalg.norm(A @ sol - data) / np.linalg.norm(data)
        return sol[0], res

    integer = isinstance(beta, Fraction) and beta.denominator == 1
    if integer and not fit_beta:
        c, res = fit()
        S = -2j * math.pi * c
        bp = "unset"
    else:
        from scipy.optimize import minimize_scalar
        g0 = -float(beta) - 1
        if fit_beta:
            r = minimize_scalar(lambda g: fit(g)[1], bracket=(g0 - 0.05, g0 + 0.05), tol=1e-10)
            g = float(r.x)
        else:
            g = g0
        c, res = fit(g)
        S = c * (1 - cmath.exp(2j * math.pi * g))
        bp = g + 1
    return complex(S), float(res), bp


def stokes_route2(eq: NormalFormScalarODE, x=10.0, h=H_DEFAULT, lateral=LATERAL, order=8,
                  K=2, P=None, germ_order=40):
    """S1 from the jump of lateral Laplace sums at real x.

    y^+ - y^- = sum_k S^k xi^k f~_k^- (the + sum is the - transseries with
    C = S), solved for S by Newton's method from S = (y^+ - y^-)/(xi f~_1).
    """
    x = float(x)
    out = {}
    for br in "+-":
        ang, _, _ = _resolve_ray(eq, cmath.phase(complex(eq.lam)), br, lateral)
        cert = choose_nu(eq, ang)
        c = x * math.cos(ang)
        if c <= cert["nu"]:
            raise MarginError(f"x = {x} too small for the lateral ray (Re(x e^(i phi)) = {c:.3g} <= nu = {cert['nu']})")
        PP = P or min(60.0, max(8.0, 37.0 / (c - cert["nu"])))
        out[br] = continue_sectors(eq, K, cmath.phase(complex(eq.lam)), h, None, br, None, PP,
                                   order, lateral, germ_order)
    xi = cmath.exp(-complex(eq.lam) * x) * x ** complex(eq.beta)
    sums = {br: {k: laplace(Y, x, nu=out[br][0].nu) for k, Y in out[br].items()} for br in "+-"}
    yp, ym = sums["+"][0], sums["-"][0]
    fk = {k: x ** (2 * k) * sums["-"][k] for k in range(1, K + 1)}
    fk_avg = {k: x ** (2 * k) * (sums["-"][k] + sums["+"][k]) / 2 for k in range(1, K + 1)}
    D = yp - ym
    S = D / (xi * fk[1])
    for _ in range(50):
        g = sum(S ** k * xi ** k * fk[k] for k in fk) - D
        dg = sum(k * S ** (k - 1) * xi ** k * fk[k] for k in fk)
        dS = g / dg
        S -= dS
        if abs(dS) < 1e-15 * abs(S):
            break
    return complex(S), {"yp": yp, "ym": ym, "fk_minus": fk, "fk_avg": fk_avg, "xi": xi,
                        "samples": out}


def stokes_measure(eq: NormalFormScalarODE, x=10.0, h=H_DEFAULT, order=8, lateral=LATERAL,
                   radii=(0.35, 0.5), nang=24, M=30, N=60, threshold=1e-6, fit_beta=None):
    """Both Stokes-constant routes and their agreement.

    Route 1: singular part of Y0 at p = 1 (Borel plane).  Route 2: jump of
    the lateral Laplace sums at real x.  The half jump C_ba = S1/2 is read
    off from the balanced average  L Y0^ba - y^- = C_ba xi f~_1 + O(xi^2).
    """
    m = eq.m
    S1, res, bp = stokes_route1(eq, radii, nang, M, h, order, N, fit_beta=fit_beta)
    if res > threshold:
        raise ResurgenceFitError(f"resurgence fit residual {res:.3g} above {threshold}")
    S2, info = stokes_route2(eq, x, h, lateral, order)
    scale = max(abs(S1), abs(S2))
    agree = abs(S1 - S2) / scale if scale > 1e-12 else 0.0
    bal = balanced_laplace(x, S1, info["yp"], info["ym"], info["fk_minus"][1],
                           info["fk_minus"].get(2), eq.lam, eq.beta)
    half = (bal.value - info["ym"]) / (info["xi"] * info["fk_minus"][1])
    detail = {"x": x, "yp": info["yp"], "ym": info["ym"], "balanced": bal.value,
              "balanced_tail": bal.tail, "lateral": lateral, "h": h}
    return StokesEstimate(S1, bp, m, res, S2, agree, half, detail)
