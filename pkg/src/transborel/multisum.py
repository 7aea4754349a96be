"""Mixed-level (rank two) laboratory for the erfmix equation

    D f = f'' + (2x + 1) f' + 2(1 + x) f = 1/x

whose power series solution mixes factorial (e^{-x}) and sqrt-factorial
(e^{-x^2}) divergence.  Coefficient equation at x^{-n} for f = sum c_n x^{-n}:

    2 c_{n+1} + (2 - 2n) c_n - (n-1) c_{n-1} + (n-1)(n-2) c_{n-2} = r_n

Borel transform in x (F = sum c_n p^{n-1}/(n-1)!) turns D f = r into

    2F' - pF = R(p)/(1 - p),   F(0) = c_1,   R = B(r - r_0),  2c_1 = r_0 - 2c_0

so F = e^{p^2/4}[c_1 + (1/2) int_0^p e^{-s^2/4} R(s)/(1-s) ds]: a pole of the
integrand at p = 1 gives n! growth, a nonzero coefficient of e^{p^2/4} at
infinity gives the level-two (x^2) divergence.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .borel import BorelSeries, RaySamples, borel_transform, quad_weights, _m_of


class MultisumError(Exception):
    pass


class InsufficientDataError(MultisumError):
    pass


class DecompositionError(MultisumError):
    pass


# ---------------------------------------------------------------- recurrence


@dataclass
class RecurrenceState:
    coeffs: List[Fraction]
    initial: tuple

    def __getitem__(self, n):
        return self.coeffs[n]

    def __len__(self):
        return len(self.coeffs)


def recrel_coeffs(n: int) -> RecurrenceState:
    """c_0..c_n from c_{k+1} = (k-1)[c_k + c_{k-1}/2 - (k-2)c_{k-2}/2], c_0 = c_1 = 0, c_2 = 1/2."""
    if n < 3:
        raise ValueError("n >= 3")
    h = Fraction(1, 2)
    c = [Fraction(0), Fraction(0), h]
    for k in range(2, n):
        c.append((k - 1) * (c[k] + h * c[k - 1] - h * (k - 2) * c[k - 2]))
    return RecurrenceState(c, (c[0], c[1], c[2]))


def erfmix_series(rhs: Dict[int, object], N: int) -> List[Fraction]:
    """Power series solution of D f = sum_k rhs[k] x^{-k} (k >= 0), c_0..c_N.

    Solves the coefficient equation forward in n; independent of the
    recurrence loop and used for the decomposition pieces.
    """
    r = {int(k): Fraction(v) for k, v in rhs.items()}
    if any(k < 0 for k in r):
        raise MultisumError("right side must be O(1)")
    c = [Fraction(0)] * (N + 1)
    for n in range(0, N):
        acc = r.get(n, Fraction(0)) - (2 - 2 * n) * c[n]
        if n >= 1:
            acc += (n - 1) * c[n - 1]
        if n >= 2:
            acc -= (n - 1) * (n - 2) * c[n - 2]
        c[n + 1] = acc / 2
    return c


def growth_exponent(coeffs, n_lo=None, n_hi=None, min_points=10) -> float:
    """theta in log|c_n| ~ theta log Gamma(n+1) + A + B n (least squares).

    1 for n!, 1/2 for sqrt(n!), 0 for geometric growth.  Zero entries are
    skipped; too few nonzero entries raise InsufficientDataError.
    """
    c = list(coeffs)
    if len(c) < 20:
        raise InsufficientDataError("growth fit needs >= 20 coefficients")
    n_lo = len(c) // 2 if n_lo is None else n_lo
    n_hi = len(c) - 1 if n_hi is None else min(n_hi, len(c) - 1)
    pts = [(n, _logabs(c[n])) for n in range(max(n_lo, 1), n_hi + 1) if c[n] != 0]
    if len(pts) < min_points:
        raise InsufficientDataError(f"only {len(pts)} nonzero coefficients in [{n_lo},{n_hi}]")
    n = np.array([q[0] for q in pts], float)
    y = np.array([q[1] for q in pts])
    A = np.column_stack([np.array([math.lgamma(k + 1) for k in n]), np.ones_like(n), n])
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(sol[0])


def _logabs(c) -> float:
    if isinstance(c, Fraction):
        c = abs(c)
        return _logint(c.numerator) - _logint(c.denominator)
    return math.log(abs(c))


def _logint(n: int) -> float:
    b = n.bit_length()
    if b < 1000:
        return math.log(n)
    s = b - 900
    return math.log(n >> s) + s * math.log(2)


def borel_ratios(coeffs, n_hi=None) -> List[float]:
    """|b_{n+1}/b_n| for the Borel coefficients b_n = c_n/(n-1)! (nonzero pairs)."""
    c = list(coeffs)
    n_hi = len(c) - 1 if n_hi is None else n_hi
    b = {n: Fraction(c[n]) / math.factorial(n - 1) for n in range(1, n_hi + 1) if c[n] != 0}
    return [float(abs(b[n + 1] / b[n])) for n in sorted(b) if n + 1 in b]


# ---------------------------------------------------------------- Borel plane


def borel_pole_amplitude(coeffs, n=None) -> float:
    """c_n/(n-2)!: tends to R(1)/2 (the n! amplitude) for erfmix-type series."""
    c = list(coeffs)
    n = len(c) - 1 if n is None else n
    return float(Fraction(c[n]) / math.factorial(n - 2))


def superexp_amplitude(a, b, part=2, cutoff=30.0) -> float:
    """Coefficient of e^{p^2/4} at p -> +inf (principal value through p = 1).

    part 2: D f = a + 1/x + b/x^2  ->  F(0) = a/2, R = 1 + b p
    part 1: D f = -a - b/x^2       ->  F(0) = -a/2, R = -b p
    """
    from scipy.integrate import quad
    if part == 2:
        c1, R0, R1 = a / 2, 1.0, b
    else:
        c1, R0, R1 = -a / 2, 0.0, -b
    # R(s)/(1-s) = -(R0 + R1 s)/(s - 1): PV via the Cauchy weight
    f = lambda s: -math.exp(-s * s / 4) * (R0 + R1 * s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pv, _ = quad(f, 0, cutoff, weight="cauchy", wvar=1.0, epsabs=1e-14, epsrel=1e-13,
                     limit=200)
    return c1 + 0.5 * pv


@dataclass
class DecompositionResult:
    a: object
    b: object
    part1: List[Fraction]
    part2: List[Fraction]
    theta1: Optional[float]
    theta2: Optional[float]
    part2_borel_ratio_max: float
    objective: float
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def reconstruction_exact(self, original=None) -> bool:
        orig = original or recrel_coeffs(len(self.part1) - 1).coeffs
        return all(p + q == o for p, q, o in zip(self.part1, self.part2, orig))

    def to_dict(self):
        return {"a": _num(self.a), "b": _num(self.b), "theta1": self.theta1,
                "theta2": self.theta2, "part2_borel_ratio_max": self.part2_borel_ratio_max,
                "objective": self.objective, "seed": self.seed, "N": len(self.part1) - 1,
                "diagnostics": self.diagnostics}


def _num(v):
    if isinstance(v, Fraction):
        return {"exact": str(v), "float": float(v)}
    return {"float": float(v)}


def _snap(v, tol):
    """Nearest small-denominator rational when within tol, else None."""
    fr = Fraction(v).limit_denominator(64)
    return fr if abs(float(fr) - v) < tol else None


def decompose(N=80, bounds=((-5.0, 5.0), (-5.0, 5.0)), seed=0, force=None,
              window=(40, 80), snap_tol=1e-9) -> DecompositionResult:
    """Split the mixed-equation series as part1 + part2 with

        D part1 = -a - b x^{-2}   (target: sqrt(n!) growth, x^2-Borel summable)
        D part2 = a + x^{-1} + b x^{-2}   (target: x-Borel transform without e^{p^2/4})

    The search minimizes  A1^2 + K2^2  by Nelder-Mead from a seeded start,
    A1 = n! amplitude of part1 (c_N/(N-2)!), K2 = e^{p^2/4} amplitude of
    part2; exact-looking values are snapped to rationals and a is then
    refined from K2 = 0.  force=(a, b) skips the search.
    """
    from scipy.optimize import brentq, minimize
    (alo, ahi), (blo, bhi) = bounds
    if not (alo < ahi and blo < bhi):
        raise DecompositionError(f"bad bounds {bounds}")
    orig = recrel_coeffs(N).coeffs
    u = erfmix_series({0: -1}, N)          # D u = -1
    v = erfmix_series({2: -1}, N)          # D v = -x^-2
    Au, Av = borel_pole_amplitude(u, N), borel_pole_amplitude(v, N)
    scale = max(abs(Au), abs(Av), 1e-300)
    diag = {}
    if force is None:
        rng = np.random.default_rng(seed)
        x0 = np.array([rng.uniform(alo, ahi), rng.uniform(blo, bhi)])

        def obj(z):
            a, b = z
            A1 = (a * Au + b * Av) / scale
            K2 = superexp_amplitude(a, b, 2)
            pen = sum(max(0.0, lo - t) + max(0.0, t - hi) for t, (lo, hi) in zip(z, bounds))
            return A1 * A1 + K2 * K2 + 1e3 * pen

        res = minimize(obj, x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-26, "maxiter": 4000, "maxfev": 8000})
        a, b = float(res.x[0]), float(res.x[1])
        diag.update({"start": x0.tolist(), "nm_iterations": int(res.nit), "nm_value": float(res.fun)})
        if not (alo <= a <= ahi and blo <= b <= bhi) or res.fun > 1e-12:
            raise DecompositionError(f"search failed: (a, b) = ({a:.6g}, {b:.6g}), objective {res.fun:.3g}")
        bs = _snap(b, snap_tol)
        if bs is not None:
            b = bs
            a = brentq(lambda t: superexp_amplitude(t, float(b), 2), alo, ahi, xtol=1e-15)
        as_ = _snap(a, snap_tol)
        if as_ is not None:
            a = as_
        diag["snapped_b"] = isinstance(b, Fraction)
        diag["snapped_a"] = isinstance(a, Fraction)
    else:
        a, b = force
    fa, fb = (a if isinstance(a, Fraction) else Fraction(a)), (b if isinstance(b, Fraction) else Fraction(b))
    part1 = [fa * x + fb * y for x, y in zip(u, v)]
    part2 = [o - q for o, q in zip(orig, part1)]
    lo, hi = window
    try:
        th1 = growth_exponent(part1, lo, hi)
    except InsufficientDataError:
        th1 = None
    th2 = growth_exponent(part2, lo, hi)
    ratios = borel_ratios(part2, min(80, N))
    objective = (float(a) * Au + float(b) * Av) ** 2 / scale ** 2 + superexp_amplitude(float(a), float(b)) ** 2
    diag.update({"A1": (float(a) * Au + float(b) * Av), "K2": superexp_amplitude(float(a), float(b)),
                 "K1": superexp_amplitude(float(a), float(b), 1), "window": list(window)})
    return DecompositionResult(a, b, part1, part2, th1, th2, max(ratios) if ratios else 0.0,
                               objective, seed, diag)


# ---------------------------------------------------------------- Borel in x^2


@dataclass
class X2Borel:
    """Borel transform in z = x^2 with x^{-n} = z^{-n/2} -> q^{n/2-1}/Gamma(n/2).

    even: BorelSeries in q (x^{-2m} -> q^{m-1}/(m-1)!)
    odd:  q^{-1/2}/sqrt(pi) * sum_m odd.taylor[m] q^m with
          odd.taylor[m] = c_{2m+1} 4^m m!/(2m)!   (Gamma(m+1/2) = (2m)! sqrt(pi)/(4^m m!))
    """
    even: BorelSeries
    odd: BorelSeries
    diagnostics: dict

    def __call__(self, q):
        q = np.asarray(q, dtype=complex)
        out = self.even(q) if self.even.taylor else np.zeros_like(q)
        if self.odd.taylor:
            out = out + q ** -0.5 / math.sqrt(math.pi) * self.odd(q)
        return out


def borel_x2(coeffs) -> X2Borel:
    c = list(coeffs)
    even = {m: c[2 * m] for m in range(1, (len(c) - 1) // 2 + 1) if c[2 * m] != 0}
    ev = borel_transform(even)
    od = []
    for m in range(0, (len(c) - 2) // 2 + 1):
        n = 2 * m + 1
        if n < len(c):
            od.append(Fraction(c[n]) * 4 ** m * math.factorial(m) / math.factorial(2 * m))
    while od and od[-1] == 0:
        od.pop()
    ob = BorelSeries(od)
    diag = {"even_radius": ev.radius_estimate() if ev.taylor else None,
            "odd_radius": ob.radius_estimate() if od else None,
            "even_ratio_max": _ratio_max(ev.taylor), "odd_ratio_max": _ratio_max(od),
            "odd_empty": not any(od), "even_empty": not any(ev.taylor)}
    return X2Borel(ev, ob, diag)


def _ratio_max(t):
    r = [abs(float(t[j + 1] / t[j])) for j in range(len(t) - 1) if t[j] != 0 and t[j + 1] != 0]
    return max(r) if r else 0.0


# ---------------------------------------------------------------- Borel-plane identity


def verify_borelt1(N=30, grid=None, ray_angle=0.2, tol=1e-9) -> dict:
    """Checks 2F' - pF = 1/(1-p), F(0) = 0 for F = B(recrel series).

    germ: exact rational identity for the Taylor coefficients up to order N;
    grid: residual of the summed germ on p in [0, 0.8] (derivative from the
    germ); growth: F continued along arg p = ray_angle by integrating the
    Borel equation, fit of log|F| against |p|^2 (positive slope, cos(2 theta)/4).
    """
    from scipy.integrate import solve_ivp
    c = recrel_coeffs(N + 2).coeffs
    F = borel_transform(c)
    a = F.taylor + [0] * 3
    germ = []
    for j in range(N - 1):
        lhs = 2 * (j + 1) * a[j + 1] - (a[j - 1] if j >= 1 else 0)
        germ.append(lhs - 1)
    germ_ok = all(g == 0 for g in germ)
    F0 = a[0]
    # grid check with a longer germ
    cg = recrel_coeffs(160).coeffs
    Fg = borel_transform(cg)
    dF = BorelSeries([(j + 1) * t for j, t in enumerate(Fg.taylor[1:])])
    p = np.linspace(0, 0.8, 81) if grid is None else np.asarray(grid)
    res = np.max(np.abs(2 * dF(p) - p * Fg(p) - 1 / (1 - p)))
    # super-exponential growth along a ray
    d = np.exp(1j * ray_angle)
    t0 = 0.3
    y0 = complex(Fg(t0 * d))

    def rhs(t, y):
        pp = t * d
        return [d * (pp * y[0] + 1 / (1 - pp)) / 2]

    sol = solve_ivp(rhs, (t0, 12.0), [y0], rtol=1e-11, atol=1e-14, dense_output=True,
                    method="DOP853")
    ts = np.linspace(6, 12, 31)
    ys = np.abs(sol.sol(ts)[0])
    slope = float(np.polyfit(ts ** 2, np.log(ys), 1)[0])
    out = {"germ_ok": germ_ok, "germ_order": N, "F0": F0, "grid_residual": float(res),
           "growth_slope": slope, "expected_slope": math.cos(2 * ray_angle) / 4,
           "ok": germ_ok and F0 == 0 and res < tol and slope > 0}
    if not out["ok"]:
        raise MultisumError(f"Borel-plane identity check failed: {out}")
    return out


# ---------------------------------------------------------------- acceleration


@dataclass
class AccelKernelParams:
    """alpha: acceleration exponent; c: contour abscissa (None: the saddle
    (alpha z1/z2)^{1/(1-alpha)} capped at 1, which avoids the e^{z2 c}
    cancellation at large z2)."""
    alpha: float = 0.5
    c: Optional[float] = None
    limlst: int = 200

    def __post_init__(self):
        if not (0 < self.alpha < 1):
            raise MultisumError("alpha must lie in (0, 1)")
        if self.c is not None and self.c <= 0:
            raise MultisumError("contour abscissa must be positive")

    def abscissa(self, zeta1, zeta2) -> float:
        if self.c is not None:
            return self.c
        sad = (self.alpha * zeta1 / zeta2) ** (1 / (1 - self.alpha))
        return min(max(sad, 1e-8), 1.0)


def accel_kernel(zeta1, zeta2, params: AccelKernelParams = None, detail=False, tol=1e-6):
    """C_alpha(zeta1, zeta2) = (1/2 pi i) int_{c-i inf}^{c+i inf} e^{zeta2 z - zeta1 z^alpha} dz.

    By conjugate symmetry this is (e^{zeta2 c}/pi) int_0^inf Re[e^{i zeta2 y} E(y)] dy,
    E = e^{-zeta1 (c+iy)^alpha}, evaluated as two Fourier integrals (QUADPACK
    QAWF: cycle-by-cycle integration with extrapolation of the tail).
    """
    from scipy.integrate import quad
    params = params or AccelKernelParams()
    z1, z2, al = float(zeta1), float(zeta2), params.alpha
    if z1 <= 0 or z2 <= 0:
        raise MultisumError("zeta1, zeta2 must be positive")
    c = params.abscissa(z1, z2)
    E = lambda y: np.exp(-z1 * (c + 1j * y) ** al)
    a, ea = quad(lambda y: E(y).real, 0, np.inf, weight="cos", wvar=z2, limlst=params.limlst)
    b, eb = quad(lambda y: E(y).imag, 0, np.inf, weight="sin", wvar=z2, limlst=params.limlst)
    pref = math.exp(z2 * c) / math.pi
    val, err = pref * (a - b), pref * (ea + eb)
    if err > tol * max(1.0, abs(val)):
        raise MultisumError(f"kernel tail not converged: error estimate {err:.3g}")
    return (val, err) if detail else val


def accel_kernel_half(zeta1, zeta2):
    """Closed form of C_{1/2}: zeta1 / (2 sqrt(pi)) zeta2^{-3/2} e^{-zeta1^2/(4 zeta2)}."""
    z1 = np.asarray(zeta1, dtype=float)
    z2 = np.asarray(zeta2, dtype=float)
    return z1 / (2 * math.sqrt(math.pi)) * z2 ** -1.5 * np.exp(-z1 * z1 / (4 * z2))


def kernel_scaling_defect(zeta1, zeta2, lam, params: AccelKernelParams = None) -> float:
    """|C(z1, z2) - lam C(z1 lam^alpha, z2 lam)|; zero by z -> lam z in the contour."""
    params = params or AccelKernelParams()
    return abs(accel_kernel(zeta1, zeta2, params)
               - lam * accel_kernel(zeta1 * lam ** params.alpha, zeta2 * lam, params))


def laplace_dual(zeta1, x, params: AccelKernelParams = None, cut=40.0) -> float:
    """int_0^inf e^{-x zeta2} C_alpha(zeta1, zeta2) d zeta2 (should be e^{-zeta1 x^alpha})."""
    from scipy.integrate import quad
    params = params or AccelKernelParams()
    val, _ = quad(lambda z2: math.exp(-x * z2) * accel_kernel(zeta1, z2, params, tol=1e-3),
                  0, cut / x, limit=200)
    return val


def accelerate(phi, alpha, zeta2, h_min_ratio=8.0, s_nodes=96, s_max=7.0):
    """(A_alpha phi)(zeta2) = int_0^inf C_alpha(s, zeta2) phi(s) ds at the points zeta2.

    phi: RaySamples on arg p = 0 (Gregory quadrature on its grid) or a callable.
    alpha = 1/2 uses the closed-form kernel; for a callable the substitution
    s = 2 sqrt(zeta2) t gives (2/sqrt(pi zeta2)) int t e^{-t^2} phi(2 sqrt(zeta2) t) dt.
    Other alpha use the numeric contour kernel on the sample grid.
    """
    zs = np.atleast_1d(np.asarray(zeta2, dtype=float))
    out = np.zeros(len(zs), dtype=complex)
    if callable(phi) and not isinstance(phi, RaySamples):
        if abs(alpha - 0.5) > 1e-15:
            raise MultisumError("callable input supported for alpha = 1/2 only")
        t, w = np.polynomial.legendre.leggauss(s_nodes)
        t = (t + 1) * s_max / 2
        w = w * s_max / 2
        for i, z in enumerate(zs):
            out[i] = 2 / math.sqrt(math.pi * z) * np.sum(w * t * np.exp(-t * t) * phi(2 * math.sqrt(z) * t))
        return out
    if abs(phi.angle) > 1e-14:
        raise MultisumError("acceleration integrates along arg p = 0")
    s = phi.t
    w = quad_weights(phi.L, phi.order) * phi.h
    for i, z in enumerate(zs):
        if math.sqrt(z) < h_min_ratio * phi.h:
            raise MultisumError(f"kernel width sqrt({z:.3g}) not resolved by step {phi.h}")
        if abs(alpha - 0.5) < 1e-15:
            K = np.zeros_like(s)
            K[1:] = accel_kernel_half(s[1:], z)
        else:
            K = np.array([accel_kernel(si, z, AccelKernelParams(alpha)) if si > 0 else 0.0
                          for si in s])
        integrand = K * phi.values
        tail = abs(integrand[-1])
        if tail > 1e-10 * max(1.0, float(np.max(np.abs(integrand)))):
            raise MultisumError(f"growth of phi not compensated by the kernel at zeta2 = {z:.3g}")
        out[i] = np.dot(w, integrand)
    return out


def multisum_level2(F: Callable, x, qmax=None, u_nodes=96, s_nodes=96, s_max=7.0):
    """L_2 A_{1/2} F at x:  int_0^qmax e^{-x^2 q} (A_{1/2}F)(q) dq with q = u^2.

    2u (A F)(u^2) = (4/sqrt(pi)) int_0^inf t e^{-t^2} F(2ut) dt is smooth in u,
    so a Gauss-Legendre product rule in (u, t) is used.  Returns (value, tail)
    where tail estimates the part beyond qmax.
    """
    x = float(x)
    umax = math.sqrt(qmax) if qmax else math.sqrt(45.0) / x
    u, wu = np.polynomial.legendre.leggauss(u_nodes)
    u = (u + 1) * umax / 2
    wu = wu * umax / 2
    t, wt = np.polynomial.legendre.leggauss(s_nodes)
    t = (t + 1) * s_max / 2
    wt = wt * s_max / 2
    inner = np.array([4 / math.sqrt(math.pi) * np.sum(wt * t * np.exp(-t * t) * F(2 * ui * t))
                      for ui in u])
    val = np.sum(wu * np.exp(-x * x * u * u) * inner)
    tail = abs(inner[-1]) * math.exp(-x * x * umax * umax) / (2 * x * x * umax)
    return complex(val), tail


# ---------------------------------------------------------------- erfmix end to end


def erfmix_residual(f: Callable, x, delta=0.05) -> float:
    """|f'' + (2x+1) f' + 2(1+x) f - 1/x| with 8th order central differences."""
    d1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    d2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
    v = np.array([f(x + (j - 4) * delta) for j in range(9)])
    fp = np.dot(d1, v) / delta
    fpp = np.dot(d2, v) / delta ** 2
    return abs(fpp + (2 * x + 1) * fp + 2 * (1 + x) * v[4] - 1 / x)


def part1_borel_x(dec: DecompositionResult, nterms=400) -> Callable:
    """Entire x-Borel transform of part1, summed from its exact Taylor coefficients."""
    c = erfmix_series({0: -Fraction(dec.a), 2: -Fraction(dec.b)}, nterms)
    taylor = [float(Fraction(c[n]) / math.factorial(n - 1)) for n in range(1, nterms + 1)]
    bs = BorelSeries(taylor)
    return lambda p: bs(p)


def part2_borel_x(dec: DecompositionResult) -> Callable:
    """x-Borel transform of part2 on p >= 0 with K2 = 0 (principal value at p = 1):

        F2(p) = -(1/2) e^{p^2/4} PV int_p^inf e^{-s^2/4} (1 + b s)/(1 - s) ds
    """
    from scipy.integrate import quad
    b = float(dec.b)
    g = lambda s: -math.exp(-s * s / 4) * (1 + b * s)

    def F2(p):
        p = float(p)
        hi = p + 40.0
        if abs(p - 1) < 1e-9:
            raise MultisumError("F2 is singular at p = 1")
        if p < 1:
            val, _ = quad(g, p, hi, weight="cauchy", wvar=1.0, epsabs=1e-15, limit=400)
        else:
            val, _ = quad(lambda s: g(s) / (s - 1), p, hi, epsabs=1e-15, limit=400)
        return -0.5 * math.exp(p * p / 4) * val

    return F2


def erfmix_multisum(dec: DecompositionResult, x, qmax=0.75):
    """Multisum of the erfmix series at real x from the decomposition.

    part1: L_2 A_{1/2} B_1 (the x^2 level); part2: plain Laplace of its
    x-Borel transform along R+ (principal value at the log point p = 1).
    Returns (f, parts).
    """
    from scipy.integrate import quad
    F1 = part1_borel_x(dec)
    f1, tail1 = multisum_level2(F1, x, qmax=qmax)
    F2 = part2_borel_x(dec)
    pmax = min(60.0 / x, 20.0)
    f2a, _ = quad(lambda p: math.exp(-p * x) * F2(p), 0, 1, epsabs=1e-14, limit=200)
    f2b, _ = quad(lambda p: math.exp(-p * x) * F2(p), 1, pmax, epsabs=1e-14, limit=200)
    f2 = f2a + f2b
    return complex(f1).real + f2, {"f1": f1, "f1_tail": tail1, "f2": f2}
