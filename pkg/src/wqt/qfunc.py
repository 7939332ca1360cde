"""q-products, elliptic theta building blocks and structure functions.

Conventions:
    (z; q)_inf = prod_{j>=0} (1 - z q^j)
    Theta_q(z) = (z;q)(q/z;q)(q;q) = sum_n (-1)^n q^{n(n-1)/2} z^n
    [u]_r      = x^{u^2/r - u} Theta_{x^{2r}}(x^{2u})

Structure functions f_{i,j} are kept in two forms: a truncated power-series
window (exact Taylor coefficients, obtained by exponentiating the truncated
log series) and a pointwise meromorphic evaluator built from the factorized
infinite product, valid away from poles.  The symmetric weight s(z) is a
two-sided window; on parameter ranges where its defining products converge
factor-by-factor on the unit circle the window can also be assembled by
series convolution, which serves as a cross-check.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .params import DEGENERACY_EPS, DegenerateParameterError, ParamPoint
from .windows import LaurentWindow


def qpoch(z: complex, q: complex, nmax: int) -> complex:
    """Truncated q-Pochhammer product (z; q)_nmax."""
    if abs(q) >= 1.0:
        raise ValueError(f"|q| must be < 1, got {abs(q)}")
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    out = 1.0 + 0j
    zq = complex(z)
    for _ in range(nmax):
        out *= 1.0 - zq
        zq *= q
    return out


def theta_big(z: complex, q: complex, nmax: int | None = None) -> complex:
    """Theta_q(z) = (z;q)(q/z;q)(q;q), truncated products."""
    if z == 0:
        raise ValueError("Theta_q(0) is undefined")
    if nmax is None:
        nmax = max(8, int(math.log(1e-16) / math.log(abs(q))) + 1)
    return qpoch(z, q, nmax) * qpoch(q / z, q, nmax) * qpoch(q, q, nmax)


def theta_u(u: complex, p: ParamPoint, modulus: complex | None = None) -> complex:
    """[u]_modulus = x^{u^2/modulus - u} Theta_{x^{2 modulus}}(x^{2u})."""
    mod = p.r if modulus is None else modulus
    q = p.xp(2 * mod)
    if abs(q) >= 1.0:
        raise ValueError("need |x^{2 modulus}| < 1")
    nmax = p.nmax(q)
    return p.xp(u * u / mod - u) * theta_big(p.xp(2 * u), q, nmax)


def qpoch_arr(z: np.ndarray, q: complex, nmax: int) -> np.ndarray:
    """Vectorized truncated q-Pochhammer over an array of arguments."""
    out = np.ones_like(z, dtype=complex)
    qj = 1.0 + 0j
    for _ in range(nmax):
        out *= 1.0 - z * qj
        qj *= q
    return out


def theta_u_arr(u: np.ndarray, p: ParamPoint, modulus: complex | None = None) -> np.ndarray:
    """Vectorized [u]_modulus over an array of arguments."""
    mod = p.r if modulus is None else modulus
    q = p.xp(2 * mod)
    nmax = p.nmax(q)
    lx = math.log(p.x)
    zu = np.exp(2 * u * lx)
    pref = np.exp((u * u / mod - u) * lx)
    return pref * qpoch_arr(zu, q, nmax) * qpoch_arr(q / zu, q, nmax) * qpoch(q, q, nmax)


def theta_w_window(sigma: int, a: complex, p: ParamPoint, width: int | None = None) -> LaurentWindow:
    """Window of [sigma*(u2-u1) + a]_r in w = z2/z1 = x^{2(u2-u1)}.

    The common factor x^{(u2-u1)^2/r}, identical for every theta with
    argument +-(u2-u1) + const, is dropped; callers match its multiplicity
    across an identity before comparing windows.
    """
    assert sigma in (+1, -1)
    width = p.kz if width is None else width
    q = p.q
    const = p.xp(a * a / p.r - a)
    coeffs = {}
    for n in range(-width, width + 1):
        c = (-1) ** n * q ** (n * (n - 1) / 2) * p.xp(2 * a * n) * const
        if abs(c) > 1e-60 * abs(const):
            coeffs[sigma * n] = c
    offset = sigma * (a / p.r - 0.5)
    return LaurentWindow(offset, coeffs, width)


def _f_exponents(i: int, j: int, p: ParamPoint, m: int) -> complex:
    """m-th log-series coefficient of f_{i,j} (coefficient of z^m, incl. 1/m)."""
    x = p.x
    lo, hi = min(i, j), max(i, j)
    d1 = 1 - x ** (2 * m)
    d2 = 1 - p.xp(2 * p.s * m)
    if abs(d1) < DEGENERACY_EPS or abs(d2) < DEGENERACY_EPS:
        raise DegenerateParameterError(f"f_{{{i},{j}}} log-series denominator vanishes at m={m}")
    num = (
        (1 - p.xp(2 * p.r * m))
        * (1 - p.xp(-2 * (p.r - 1) * m))
        * (1 - x ** (2 * m * lo))
        * (1 - p.xp(2 * m * (p.s - hi)))
    )
    return num * x ** (abs(i - j) * m) / (m * d1 * d2)


def struct_f(i: int, j: int, p: ParamPoint, kz: int | None = None) -> LaurentWindow:
    """Structure function f_{i,j}(z) as a power-series window (offset 0).

    Coefficients are exact: only log-series terms of order <= kz contribute
    to Taylor coefficients up to kz.
    """
    kz = p.kz if kz is None else kz
    if not (1 <= i <= p.N and 1 <= j <= p.N):
        if not (i >= 0 and j >= 0):
            raise ValueError("indices must be nonnegative")
    if i == 0 or j == 0:
        return LaurentWindow.constant(1.0, kz)
    log_c = [0j] + [_f_exponents(i, j, p, m) for m in range(1, kz + 1)]
    out = [1.0 + 0j] + [0j] * kz
    for n in range(1, kz + 1):
        acc = 0j
        for m in range(1, n + 1):
            acc += m * log_c[m] * out[n - m]
        out[n] = acc / n
    return LaurentWindow(0.0, {n: out[n] for n in range(kz + 1)}, kz)


def struct_f_value(i: int, j: int, w: complex, p: ParamPoint) -> complex:
    """Meromorphic value of f_{i,j} at w via the factorized product.

    Uses (1-x^{2m Min})/(1-x^{2m}) = sum_{a<Min} x^{2am} to factor the log
    series into pure geometric pieces, each exponentiating to a binomial.
    """
    if i == 0 or j == 0:
        return 1.0 + 0j
    lo, hi = min(i, j), max(i, j)
    base = abs(i - j)
    ladder = p.xp(2 * p.s)
    kmax = p.nmax(ladder)
    # (exponent shift, sign) pairs from (1-x^{2r})(1-x^{2-2r}) x (1-x^{2(s-hi)})
    pieces = []
    for e1, s1 in ((0, +1), (2 * p.r, -1), (2 - 2 * p.r, -1), (2, +1)):
        for e2, s2 in ((0, +1), (2 * (p.s - hi), -1)):
            pieces.append((e1 + e2, s1 * s2))
    out = 1.0 + 0j
    for a in range(lo):
        for k in range(kmax):
            shift = p.xp(base + 2 * a + 2 * p.s * k)
            for e, sgn in pieces:
                fac = 1.0 - p.xp(e) * shift * w
                if sgn > 0:
                    if abs(fac) < DEGENERACY_EPS:
                        raise DegenerateParameterError(f"f_{{{i},{j}}} evaluated at a pole, w={w}")
                    out /= fac
                else:
                    out *= fac
    return out


def fused_g(i: int, j: int, p: ParamPoint, kz: int | None = None) -> LaurentWindow:
    """g_{i,j} window by fusing shifted copies of g_{1,1} = f_{1,1}."""
    kz = p.kz if kz is None else kz
    if i == 0 or j == 0:
        return LaurentWindow.constant(1.0, kz)
    g11 = struct_f(1, 1, p, kz)
    gi1 = LaurentWindow.constant(1.0, kz)
    for t in range(i):
        gi1 = gi1.mul(g11.scale_arg(p.xp(-i + 1 + 2 * t)), out_kz=kz)
    out = LaurentWindow.constant(1.0, kz)
    for t in range(j):
        out = out.mul(gi1.scale_arg(p.xp(-j + 1 + 2 * t)), out_kz=kz)
    return out


def fused_g_value(i: int, j: int, w: complex, p: ParamPoint) -> complex:
    """Pointwise g_{i,j}(w) from shifted f_{1,1} factors."""
    if i == 0 or j == 0:
        return 1.0 + 0j
    out = 1.0 + 0j
    for ti in range(i):
        for tj in range(j):
            out *= struct_f_value(1, 1, p.xp(-i + 1 + 2 * ti) * p.xp(-j + 1 + 2 * tj) * w, p)
    return out


def const_c(p: ParamPoint) -> complex:
    """Central constant of the quadratic relations."""
    den = 1 - p.x ** 2
    if abs(den) < DEGENERACY_EPS:
        raise DegenerateParameterError("1 - x^2 vanishes")
    return -(1 - p.xp(2 * p.r)) * (1 - p.xp(-2 * p.r + 2)) / den


def delta_fn(z: complex, p: ParamPoint) -> complex:
    """Auxiliary rational factor multiplying nested delta terms."""
    den = (1 - p.x * z) * (1 - z / p.x)
    if abs(den) < DEGENERACY_EPS:
        raise DegenerateParameterError(f"delta_fn pole at z={z}")
    return (1 - p.xp(2 * p.r - 1) * z) * (1 - p.xp(1 - 2 * p.r) * z) / den


# ---------------------------------------------------------------------------
# symmetric weight s(z)
# ---------------------------------------------------------------------------

def _s_half_factors(p: ParamPoint):
    """(numerator coefficients, denominator coefficients) of the z-side product."""
    num = (1.0 + 0j, p.xp(2 * p.s - 2 * p.r))
    den = (p.xp(2 * p.s - 2), p.xp(-2 * p.r + 2))
    return num, den


def s_value(z: complex, p: ParamPoint) -> complex:
    """Pointwise s(z) = s(1/z) via truncated q-products (meromorphic value)."""
    pp = p.xp(2 * p.s)
    nmax = p.nmax(pp)
    num, den = _s_half_factors(p)
    out = 1.0 + 0j
    for zz in (z, 1 / z):
        for c in num:
            out *= qpoch(c * zz, pp, nmax)
        for c in den:
            d = qpoch(c * zz, pp, nmax)
            if abs(d) < DEGENERACY_EPS:
                raise DegenerateParameterError(f"s(z) evaluated at a pole, z={z}")
            out /= d
    return out


def s_weight(p: ParamPoint, kz: int | None = None, samples: int | None = None) -> LaurentWindow:
    """Two-sided window of s(z) from its Laurent expansion on |z| = 1.

    Coefficients come from uniform circle samples and an inverse DFT; the
    annulus of analyticity around |z|=1 makes this exact up to wrap-around,
    which decays geometrically in the sample count.
    """
    kz = p.kz if kz is None else kz
    m = samples if samples is not None else max(128, 1 << (4 * kz - 1).bit_length())
    theta = 2 * np.pi * (np.arange(m) + 0.5) / m
    zs = np.exp(1j * theta)
    vals = np.array([s_value(z, p) for z in zs])
    # inverse DFT at shifted nodes: s_n = mean(vals * z^{-n})
    coeffs = {}
    for n in range(-kz, kz + 1):
        c = complex(np.mean(vals * np.exp(-1j * n * theta)))
        coeffs[n] = c
    return LaurentWindow(0.0, coeffs, kz)


def s_series_converges(p: ParamPoint) -> bool:
    """True when every s(z) factor expands convergently on |z| = 1.

    Numerator Pochhammers are entire in their argument; only the inverted
    factors 1/(cz; p) limit convergence, to |z| < 1/|c|.
    """
    _, den = _s_half_factors(p)
    return all(abs(c) < 1.0 for c in den)


def s_weight_factor_series(p: ParamPoint, kz: int | None = None) -> LaurentWindow:
    """s(z) window by expanding each Pochhammer factor and convolving.

    Only valid when the factor series converge on the unit circle
    (s_series_converges); used as an independent cross-check there.
    """
    if not s_series_converges(p):
        raise DegenerateParameterError("factor series diverge on |z|=1 at these parameters")
    kz = p.kz if kz is None else kz
    pp = p.xp(2 * p.s)
    depth = 4 * kz + 8
    num, den = _s_half_factors(p)

    def poch_series(c, inverse):
        out = [0j] * (depth + 1)
        out[0] = 1.0 + 0j
        for k in range(1, depth + 1):
            if inverse:
                out[k] = c ** k / _prod_pp(k, pp)
            else:
                out[k] = (-1) ** k * pp ** (k * (k - 1) / 2) * c ** k / _prod_pp(k, pp)
        return out

    half = [1.0 + 0j] + [0j] * depth
    for c in num:
        half = _conv(half, poch_series(c, inverse=False))
    for c in den:
        half = _conv(half, poch_series(c, inverse=True))
    coeffs = {}
    for n in range(-kz, kz + 1):
        acc = 0j
        for l in range(depth + 1):
            kk = n + l
            if 0 <= kk <= depth:
                acc += half[kk] * half[l]
        coeffs[n] = acc
    return LaurentWindow(0.0, coeffs, kz)


def _prod_pp(k: int, pp: complex) -> complex:
    out = 1.0 + 0j
    for i in range(1, k + 1):
        out *= 1 - pp ** i
    return out


def _conv(a, b):
    n = len(a)
    out = [0j] * n
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j in range(n - i):
            out[i + j] += ai * b[j]
    return out


def _s_half_value(w: complex, p: ParamPoint) -> complex:
    """The z-side half of s, i.e. the product over factors in w only."""
    pp = p.xp(2 * p.s)
    nmax = p.nmax(pp)
    num, den = _s_half_factors(p)
    out = 1.0 + 0j
    for c in num:
        out *= qpoch(c * w, pp, nmax)
    for c in den:
        out /= qpoch(c * w, pp, nmax)
    return out


def s_pole_pairs(p: ParamPoint, kmax: int | None = None):
    """Residues of s(z) at the r-dependent pole families.

    Entries (w_in, res_in, w_out, res_out) for k = 0, 1, ...:
    w_in = x^{2r-2-2sk} (from the z-side denominator) and its mirror
    w_out = x^{2-2r+2sk}; kmax defaults to the number of members with
    non-negligible residue weight inside the standard truncation budget.
    """
    out = []
    pp = p.xp(2 * p.s)
    nmax = p.nmax(pp)
    c_den = p.xp(2 - 2 * p.r)
    kmax = max(2, p.nmax(pp) // 4) if kmax is None else kmax
    for k in range(kmax + 1):
        w0 = p.xp(2 * p.r - 2 - 2 * p.s * k)
        # d/dw of (x^{2-2r} w; pp)_inf at w0, where its k-th factor vanishes
        tail = 1.0 + 0j
        for i in range(1, k + 1):
            tail *= 1 - pp ** (-i)
        deriv = -c_den * pp ** k * tail * qpoch(pp, pp, nmax)
        num, den = _s_half_factors(p)
        res0 = _s_half_value(1 / w0, p) * qpoch(num[0] * w0, pp, nmax) * qpoch(num[1] * w0, pp, nmax)
        res0 /= qpoch(den[0] * w0, pp, nmax) * deriv
        w1 = 1 / w0
        res1 = -res0 * w1 * w1
        out.append((w0, res0, w1, res1))
    return out


def s_crossed_poles(p: ParamPoint):
    """Pole pairs of s(z) with the inner member past the unit circle
    (kept for diagnostics; the charge assembly tracks poles against its own
    extraction radius)."""
    return [e for e in s_pole_pairs(p) if (2 * p.r - 2 - 2 * p.s * 0).real > 0 and abs(e[0]) < 1][:1]
