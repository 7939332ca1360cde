"""Oscillator algebra, weight-lattice zero modes and truncated Fock spaces.

Weights live in the span of the barred basis vectors eb_i = e_i - (1/N)sum e_j
and are stored as integer coefficient vectors over (eb_1, ..., eb_N); since
sum_i eb_i = 0 the coefficients only matter modulo the all-ones vector.
Basis states are creation monomials over a vacuum |l, k>, encoded as sorted
tuples of (color, mode) with mode > 0 standing for beta^{color}_{-mode}.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .params import DEGENERACY_EPS, DegenerateParameterError, ParamPoint


@dataclass(frozen=True)
class WeightVector:
    """Integer combination of the barred basis vectors eb_i."""

    n: tuple  # length-N integer tuple

    @classmethod
    def zero(cls, N: int) -> "WeightVector":
        return cls(tuple(0 for _ in range(N)))

    @classmethod
    def eps_bar(cls, i: int, N: int) -> "WeightVector":
        v = [0] * N
        v[(i - 1) % N] = 1
        return cls(tuple(v))

    @classmethod
    def alpha(cls, i: int, N: int) -> "WeightVector":
        """Simple root alpha_i = eb_i - eb_{i+1}, cyclically (alpha_N wraps)."""
        v = [0] * N
        v[(i - 1) % N] += 1
        v[i % N] -= 1
        return cls(tuple(v))

    @property
    def N(self) -> int:
        return len(self.n)

    def __add__(self, other: "WeightVector") -> "WeightVector":
        return WeightVector(tuple(a + b for a, b in zip(self.n, other.n)))

    def __sub__(self, other: "WeightVector") -> "WeightVector":
        return WeightVector(tuple(a - b for a, b in zip(self.n, other.n)))

    def __neg__(self) -> "WeightVector":
        return WeightVector(tuple(-a for a in self.n))

    def scaled(self, c: int) -> "WeightVector":
        return WeightVector(tuple(c * a for a in self.n))

    def dot(self, other: "WeightVector") -> float:
        """Inner product using (eb_i, eb_j) = delta_ij - 1/N."""
        sa, sb = sum(self.n), sum(other.n)
        return float(np.dot(self.n, other.n)) - sa * sb / self.N

    def eta(self) -> "WeightVector":
        """Dynkin rotation eb_i -> eb_{i+1} (cyclic index shift)."""
        return WeightVector((self.n[-1],) + self.n[:-1])

    def canonical(self) -> tuple:
        """Representative modulo the all-ones null vector."""
        m = min(self.n)
        return tuple(a - m for a in self.n)

    def same_as(self, other: "WeightVector") -> bool:
        return self.canonical() == other.canonical()


@dataclass(frozen=True)
class Sector:
    l: WeightVector
    k: WeightVector

    @classmethod
    def vacuum(cls, N: int) -> "Sector":
        return cls(WeightVector.zero(N), WeightVector.zero(N))

    def key(self) -> tuple:
        return (self.l.canonical(), self.k.canonical())

    def eta(self) -> "Sector":
        return Sector(self.l.eta(), self.k.eta())


def p_eigenvalue(lam: WeightVector, sec: Sector, p: ParamPoint) -> complex:
    """Eigenvalue of P_lambda on |l, k>."""
    cl = (p.r / (p.r - 1)) ** 0.5 if isinstance(p.r, float) else np.sqrt(p.r / (p.r - 1))
    ck = p.sqrt_rm1_over_r()
    cl = 1.0 / ck  # sqrt(r/(r-1)) on the same branch as sqrt((r-1)/r)
    return cl * lam.dot(sec.l) - ck * lam.dot(sec.k)


def osc_bracket(i: int, m: int, j: int, n: int, p: ParamPoint) -> complex:
    """Commutator [beta^i_m, beta^j_n]; nonzero only when m + n = 0."""
    if m == 0 or n == 0:
        raise ValueError("oscillator modes are nonzero integers")
    if m + n != 0:
        return 0j
    br, bs = p.bracket(p.r * m), p.bracket(p.s * m)
    if abs(br) < DEGENERACY_EPS or abs(bs) < DEGENERACY_EPS:
        raise DegenerateParameterError(f"[rm] or [sm] vanishes at m={m}")
    if i == j:
        return m * p.bracket((p.r - 1) * m) * p.bracket((p.s - 1) * m) / (br * bs)
    sgn = 1 if i > j else -1
    return -m * p.bracket((p.r - 1) * m) * p.bracket(m) * p.xp(p.s * m * sgn) / (br * bs)


@lru_cache(maxsize=None)
def _bracket_matrix_cached(m: int, key) -> np.ndarray:
    p = _POINTS[key]
    return np.array([[osc_bracket(i, m, j, -m, p) for j in range(1, p.N + 1)] for i in range(1, p.N + 1)])


_POINTS: dict = {}


def bracket_matrix(m: int, p: ParamPoint) -> np.ndarray:
    """Matrix K(m) with K_ij = [beta^i_m, beta^j_{-m}], m > 0."""
    key = (p.x, p.r, p.s, p.N)
    _POINTS[key] = p
    return _bracket_matrix_cached(m, key)


def eta_on_oscillator(j: int, m: int, p: ParamPoint) -> tuple:
    """Image (color, multiplier) of beta^j_m under the Dynkin automorphism."""
    if not 1 <= j <= p.N:
        raise ValueError(f"color out of range: {j}")
    if j < p.N:
        return j + 1, p.xp(-2 * p.s * m / p.N)
    return 1, p.xp(2 * p.s * (p.N - 1) * m / p.N)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def monomial_level(mono: tuple) -> int:
    return sum(m for _, m in mono)


def monomial_key(pairs) -> tuple:
    """Canonical ordering: colors ascending, then modes descending."""
    return tuple(sorted(pairs, key=lambda cm: (cm[0], -cm[1])))


@dataclass
class FockVector:
    sector: Sector
    terms: dict  # monomial tuple -> complex

    @classmethod
    def vacuum(cls, sec: Sector) -> "FockVector":
        return cls(sec, {(): 1.0 + 0j})

    @classmethod
    def state(cls, sec: Sector, pairs, coeff: complex = 1.0) -> "FockVector":
        return cls(sec, {monomial_key(pairs): complex(coeff)})

    def scale(self, c: complex) -> "FockVector":
        return FockVector(self.sector, {k: c * v for k, v in self.terms.items()})

    def add_into(self, other: "FockVector", c: complex = 1.0):
        if other.sector.key() != self.sector.key():
            raise ValueError("sector mismatch in Fock vector addition")
        for k, v in other.terms.items():
            self.terms[k] = self.terms.get(k, 0j) + c * v

    def coeff(self, pairs) -> complex:
        return self.terms.get(monomial_key(pairs), 0j)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.terms.values()), default=0.0)

    def prune(self, eps: float = 0.0) -> "FockVector":
        self.terms = {k: v for k, v in self.terms.items() if abs(v) > eps}
        return self


def vector_residual(a: FockVector, b: FockVector, scale: float | None = None) -> float:
    keys = set(a.terms) | set(b.terms)
    sc = scale if scale is not None else max(a.max_abs(), b.max_abs(), 1e-30)
    return max((abs(a.terms.get(k, 0j) - b.terms.get(k, 0j)) / sc for k in keys), default=0.0)


@lru_cache(maxsize=None)
def basis_monomials(N: int, level: int) -> tuple:
    """All creation monomials of exactly the given level, canonical order."""
    if level == 0:
        return ((),)
    out = []

    def rec(rem, start_color, start_mode, acc):
        if rem == 0:
            out.append(monomial_key(acc))
            return
        for c in range(start_color, N + 1):
            mmax = rem
            for m in range(1, mmax + 1):
                if c == start_color and m > start_mode:
                    continue
                rec(rem - m, c, m, acc + [(c, m)])

    rec(level, 1, level, [])
    return tuple(sorted(set(out)))


def basis_up_to(N: int, cap: int) -> list:
    out = []
    for lev in range(cap + 1):
        out.extend(basis_monomials(N, lev))
    return out


def apply_oscillator(color: int, mode: int, v: FockVector, cap: int, p: ParamPoint) -> FockVector:
    """Apply a single beta^color_mode; mode < 0 creates, mode > 0 annihilates."""
    out = FockVector(v.sector, {})
    if mode < 0:
        m = -mode
        for mono, c in v.terms.items():
            if monomial_level(mono) + m > cap:
                continue
            key = monomial_key(mono + ((color, m),))
            out.terms[key] = out.terms.get(key, 0j) + c
        return out
    m = mode
    K = bracket_matrix(m, p)
    for mono, c in v.terms.items():
        seen = set()
        for idx, (cc, mm) in enumerate(mono):
            if mm != m or (cc, mm) in seen:
                continue
            seen.add((cc, mm))
            mult = sum(1 for q in mono if q == (cc, mm))
            rest = list(mono)
            rest.remove((cc, mm))
            key = tuple(rest)
            out.terms[key] = out.terms.get(key, 0j) + c * mult * K[color - 1, cc - 1]
    return out


def normal_order_apply(word, v: FockVector, cap: int, p: ParamPoint) -> FockVector:
    """Apply an oscillator word (leftmost factor acts last)."""
    cur = v
    for color, mode in reversed(list(word)):
        cur = apply_oscillator(color, mode, cur, cap, p)
    return cur


def eta_state(v: FockVector, p: ParamPoint) -> FockVector:
    """Dynkin rotation of a Fock vector: colors shift, sectors rotate."""
    out = FockVector(Sector(v.sector.l.eta(), v.sector.k.eta()), {})
    for mono, c in v.terms.items():
        fac = complex(c)
        pairs = []
        for color, m in mono:
            new_color, mult = eta_on_oscillator(color, -m, p)
            fac *= mult
            pairs.append((new_color, m))
        key = monomial_key(pairs)
        out.terms[key] = out.terms.get(key, 0j) + fac
    return out
