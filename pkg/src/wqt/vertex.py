"""Normal-ordered exponential operators: screening currents and the
fundamental operators entering the W-algebra generators.

A VertexDescriptor holds (i) one lattice shift e^{i a Q_mu}, (ii) a list of
zero-mode power factors (b z^e)^{c P_lambda + d}, and (iii) the oscillator
mode coupling m -> c_m (a color vector), representing

    V(z) = e^{i a Q_mu} * prod (b z^e)^{c P_lambda + d}
           * :exp( sum_{m != 0} (1/m) c_m . beta_m z^{-m} ):

Products are evaluated two ways: sequentially (honest ordered application
with a level cap on intermediate states) and as contraction * merged
normal-ordered operator, where the contraction resums the intermediate sum
into a scalar series.  Zero-mode powers inside merged products act at the
source sector; lattice shifts act last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .params import DEGENERACY_EPS, DegenerateParameterError, ParamPoint
from .fock import (FockVector, Sector, WeightVector, bracket_matrix,
                   monomial_key, monomial_level, p_eigenvalue)
from .windows import LaurentWindow


@dataclass(frozen=True)
class ZeroModeFactor:
    base: complex
    zexp: int                 # 0 or 1
    coeff: complex            # c in (b z^e)^{c P_lambda + d}
    weight: WeightVector | None
    const: complex            # d

    def exponent(self, sec: Sector, p: ParamPoint) -> complex:
        pe = p_eigenvalue(self.weight, sec, p) if self.weight is not None else 0.0
        return self.coeff * pe + self.const


@dataclass
class VertexDescriptor:
    label: str
    N: int
    qshift: tuple | None                 # (a, mu) of e^{i a Q_mu}
    dl: WeightVector
    dk: WeightVector
    zfactors: tuple
    mode_fn: object                      # callable m -> np.ndarray(N)
    _mode_cache: dict = field(default_factory=dict)

    def modes(self, m: int) -> np.ndarray:
        v = self._mode_cache.get(m)
        if v is None:
            v = self.mode_fn(m)
            self._mode_cache[m] = v
        return v

    def shifted_sector(self, sec: Sector) -> Sector:
        return Sector(sec.l + self.dl, sec.k + self.dk)

    def z_offset(self, sec: Sector, p: ParamPoint) -> complex:
        return sum((f.exponent(sec, p) for f in self.zfactors if f.zexp), 0j)

    def zconst(self, sec: Sector, p: ParamPoint, scale: complex = 1.0) -> complex:
        out = 1.0 + 0j
        for f in self.zfactors:
            b = f.base * (scale if f.zexp else 1.0)
            out *= b ** f.exponent(sec, p)
        return out


def _no_shift(N: int) -> WeightVector:
    return WeightVector.zero(N)


def make_lambda(j: int, p: ParamPoint) -> VertexDescriptor:
    """Fundamental operator carrying color j."""
    if not 1 <= j <= p.N:
        raise ValueError(f"color out of range: {j}")
    ebj = WeightVector.eps_bar(j, p.N)
    zf = (ZeroModeFactor(p.x, 0, -2 * p.sqrt_r_rm1(), ebj, 0.0),)

    def mode(m, _j=j, _p=p):
        v = np.zeros(_p.N, dtype=complex)
        v[_j - 1] = _p.xp(_p.r * m) - _p.xp(-_p.r * m)
        return v

    return VertexDescriptor(f"Lambda_{j}", p.N, None, _no_shift(p.N), _no_shift(p.N), zf, mode)


def make_screening(j: int, p: ParamPoint) -> VertexDescriptor:
    """Screening current F_j; j = N closes the cycle."""
    if not 1 <= j <= p.N:
        raise ValueError(f"screening index out of range: {j}")
    N = p.N
    b = p.sqrt_rm1_over_r()
    alpha_j = WeightVector.alpha(j, N)
    if j < N:
        zf = (ZeroModeFactor(p.xp((2 * p.s / N - 1) * j), 1, b, alpha_j, (p.r - 1) / p.r),)

        def mode(m, _j=j, _p=p):
            v = np.zeros(_p.N, dtype=complex)
            f = _p.xp(-2 * _p.s * _j * m / _p.N)
            v[_j - 1] = f
            v[_j] = -f
            return v
    else:
        zf = (
            ZeroModeFactor(p.xp(2 * p.s - N), 1, b, WeightVector.eps_bar(N, N), (p.r - 1) / (2 * p.r)),
            ZeroModeFactor(1.0, 1, -b, WeightVector.eps_bar(1, N), (p.r - 1) / (2 * p.r)),
        )

        def mode(m, _p=p):
            v = np.zeros(_p.N, dtype=complex)
            v[_p.N - 1] = _p.xp(-2 * _p.s * m)
            v[0] = -1.0
            return v

    return VertexDescriptor(
        f"F_{j}", N, (b, alpha_j), _no_shift(N), -alpha_j, zf, mode
    )


def _cvec(m: int, p: ParamPoint) -> np.ndarray:
    return np.array([p.xp((p.N - 2 * i + 1) * m) for i in range(1, p.N + 1)], dtype=complex)


def make_dwa_split(j: int, p: ParamPoint) -> tuple:
    """Split Lambda_j into the W-algebra part and the decoupled boson."""
    if not 1 <= j <= p.N:
        raise ValueError(f"color out of range: {j}")
    ebj = WeightVector.eps_bar(j, p.N)
    zf = (ZeroModeFactor(p.x, 0, -2 * p.sqrt_r_rm1(), ebj, 0.0),)

    def kappa(m, _p=p):
        bN = _p.bracket(_p.N * m)
        if abs(bN) < DEGENERACY_EPS:
            raise DegenerateParameterError(f"[Nm] vanishes at m={m}")
        return _p.bracket(m) / bN

    def mode_w(m, _j=j, _p=p):
        v = np.zeros(_p.N, dtype=complex)
        v[_j - 1] = 1.0
        v = v - kappa(m) * _cvec(m, _p)
        return (_p.xp(_p.r * m) - _p.xp(-_p.r * m)) * v

    def mode_z(m, _p=p):
        return (_p.xp(_p.r * m) - _p.xp(-_p.r * m)) * kappa(m) * _cvec(m, _p)

    lam_w = VertexDescriptor(f"LambdaDWA_{j}", p.N, None, _no_shift(p.N), _no_shift(p.N), zf, mode_w)
    zb = VertexDescriptor("Z", p.N, None, _no_shift(p.N), _no_shift(p.N), (), mode_z)
    return lam_w, zb


def eta_vertex(V: VertexDescriptor, p: ParamPoint) -> VertexDescriptor:
    """Exact image of a descriptor under the Dynkin automorphism."""
    from .fock import eta_on_oscillator

    def new_mode(m, _V=V, _p=p):
        old = _V.modes(m)
        v = np.zeros(_p.N, dtype=complex)
        for j in range(1, _p.N + 1):
            c, mult = eta_on_oscillator(j, m, _p)
            v[c - 1] += mult * old[j - 1]
        return v

    q = None if V.qshift is None else (V.qshift[0], V.qshift[1].eta())
    zf = tuple(
        ZeroModeFactor(f.base, f.zexp, f.coeff, None if f.weight is None else f.weight.eta(), f.const)
        for f in V.zfactors
    )
    return VertexDescriptor(
        "eta(" + V.label + ")", V.N, q, V.dl.eta(), V.dk.eta(), zf, new_mode
    )


# ---------------------------------------------------------------------------
# application to states
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _creation_patterns(N: int, max_level: int) -> tuple:
    """Creation multisets bucketed by level: tuple indexed by level, each a
    tuple of patterns ((color, mode, count), ...)."""
    items = [(c, m) for c in range(1, N + 1) for m in range(1, max_level + 1)]
    buckets = [[] for _ in range(max_level + 1)]

    def rec(idx, used, acc):
        buckets[used].append(tuple(acc))
        for i in range(idx, len(items)):
            c, m = items[i]
            k = 1
            while used + k * m <= max_level:
                rec(i + 1, used + k * m, acc + [(c, m, k)])
                k += 1

    rec(0, 0, [])
    return tuple(tuple(b) for b in buckets)


def _kept_submultisets(counts: list) -> list:
    """All sub-multisets (by per-factor kept counts) of a factored monomial."""
    out = [[]]
    for (c, m, P) in counts:
        nxt = []
        for partial in out:
            for k in range(P + 1):
                nxt.append(partial + [k])
        out = nxt
    return out


def _factored(mono: tuple) -> list:
    out = []
    for cm in mono:
        if out and out[-1][0] == cm[0] and out[-1][1] == cm[1]:
            out[-1][2] += 1
        else:
            out.append([cm[0], cm[1], 1])
    return [tuple(e) for e in out]


def _apply_osc(V: VertexDescriptor, terms: dict, cap: int, p: ParamPoint,
               scale: complex = 1.0) -> dict:
    """Oscillator part of V(scale*z) on a coefficient dict; zero modes are
    the caller's responsibility.  Returns {d: {monomial: coeff}}."""
    out: dict = {}
    lam_cache: dict = {}

    def lam(color, m):
        key = (color, m)
        val = lam_cache.get(key)
        if val is None:
            row = V.modes(m) @ bracket_matrix(m, p)
            val = row[color - 1] / m * scale ** (-m)
            lam_cache[key] = val
        return val

    cre_coeff_cache: dict = {}

    def cre(color, m):
        key = (color, m)
        val = cre_coeff_cache.get(key)
        if val is None:
            val = -V.modes(-m)[color - 1] / m * scale ** m
            cre_coeff_cache[key] = val
        return val

    patterns = _creation_patterns(p.N, cap)
    for mono, cin in terms.items():
        facs = _factored(mono)
        for keeps in _kept_submultisets(facs):
            kept_level = sum(k * f[1] for k, f in zip(keeps, facs))
            if kept_level > cap:
                continue
            coeff = cin
            kept_pairs = []
            deg = 0
            for k, (c, m, P) in zip(keeps, facs):
                rem = P - k
                if rem:
                    coeff *= math.comb(P, k) * lam(c, m) ** rem
                    deg -= rem * m
                kept_pairs.extend([(c, m)] * k)
            if coeff == 0:
                continue
            avail = cap - kept_level
            for plevel in range(avail + 1):
                for pat in patterns[plevel]:
                    cf = coeff
                    for c, m, k in pat:
                        cf *= cre(c, m) ** k / math.factorial(k)
                    key = monomial_key(kept_pairs + [(c, m) for c, m, k in pat for _ in range(k)])
                    d = deg + plevel
                    bucket = out.get(d)
                    if bucket is None:
                        bucket = {}
                        out[d] = bucket
                    bucket[key] = bucket.get(key, 0j) + cf
    return out


def apply_vertex(V: VertexDescriptor, v: FockVector, cap: int, p: ParamPoint,
                 scale: complex = 1.0) -> tuple:
    """Graded action of V(scale*z) on v, output levels <= cap.

    Returns (z_offset, {d: FockVector}); the total z-power of a term at
    integer grade d is z^{z_offset + d}.  Constants are folded in.
    """
    sec = v.sector
    gamma = V.z_offset(sec, p)
    zc = V.zconst(sec, p, scale)
    out_sec = V.shifted_sector(sec)
    graded = _apply_osc(V, v.terms, cap, p, scale)
    out = {}
    for d, bucket in graded.items():
        out[d] = FockVector(out_sec, {k: zc * c for k, c in bucket.items()})
    return gamma, out


def osc_down_blocks(V: VertexDescriptor, p: ParamPoint, l_max: int, cap_to: int) -> dict:
    """Graded matrices of the oscillator part of V(z) at unit scale, from
    each level l <= l_max down to levels <= cap_to.

    Key (l, d) maps to an ndarray [dim(l+d), dim(l)].  Entries at argument
    scale a are obtained by multiplying a block by a^d (every mode factor
    contributes its z-degree).  Cached on the descriptor instance.
    """
    from .fock import basis_monomials

    cache = getattr(V, "_block_cache", None)
    if cache is None:
        cache = {}
        V._block_cache = cache
    key = (p.x, p.r, p.s, p.N, l_max, cap_to)
    if key in cache:
        return cache[key]
    blocks: dict = {}
    for lev in range(l_max + 1):
        basis = basis_monomials(p.N, lev)
        tgt_index = {}
        for dd in range(-lev, cap_to - lev + 1):
            if 0 <= lev + dd <= cap_to:
                tgt_index[dd] = {m: i for i, m in enumerate(basis_monomials(p.N, lev + dd))}
        for col, mono in enumerate(basis):
            graded = _apply_osc(V, {mono: 1.0 + 0j}, cap_to, p, 1.0)
            for dd, bucket in graded.items():
                idx = tgt_index.get(dd)
                if idx is None:
                    continue
                blk = blocks.get((lev, dd))
                if blk is None:
                    blk = np.zeros((len(idx), len(basis)), dtype=complex)
                    blocks[(lev, dd)] = blk
                for k, c in bucket.items():
                    blk[idx[k], col] += c
    cache[key] = blocks
    return blocks


def apply_product(legs: list, v: FockVector, cap: int, p: ParamPoint) -> tuple:
    """Merged normal-ordered product of several legs applied to v.

    legs: list of (descriptor, scale); leg i is attached to variable z_i.
    All creation modes act left of all annihilation modes; zero-mode powers
    take their eigenvalues at the source sector; lattice shifts compose.
    Returns (offsets per leg, {degree tuple: FockVector}).
    """
    sec = v.sector
    nlegs = len(legs)
    offsets = tuple(V.z_offset(sec, p) for V, _ in legs)
    zc = 1.0 + 0j
    out_sec = sec
    for V, scale in legs:
        zc *= V.zconst(sec, p, scale)
        out_sec = Sector(out_sec.l + V.dl, out_sec.k + V.dk)

    lam_cache: dict = {}

    def lam(leg, color, m):
        key = (leg, color, m)
        val = lam_cache.get(key)
        if val is None:
            V, scale = legs[leg]
            row = V.modes(m) @ bracket_matrix(m, p)
            val = row[color - 1] / m * scale ** (-m)
            lam_cache[key] = val
        return val

    cre_cache: dict = {}

    def cre(leg, color, m):
        key = (leg, color, m)
        val = cre_cache.get(key)
        if val is None:
            V, scale = legs[leg]
            val = -V.modes(-m)[color - 1] / m * scale ** m
            cre_cache[key] = val
        return val

    single_patterns = _creation_patterns(p.N, cap)
    out: dict = {}

    def removal_assignments(P_rem):
        """Distribute P_rem identical removals over legs: lists of counts."""
        if nlegs == 1:
            return [(P_rem,)]
        res = []

        def rec(i, rem, acc):
            if i == nlegs - 1:
                res.append(tuple(acc + [rem]))
                return
            for k in range(rem + 1):
                rec(i + 1, rem - k, acc + [k])

        rec(0, P_rem, [])
        return res

    for mono, cin in v.terms.items():
        facs = _factored(mono)
        for keeps in _kept_submultisets(facs):
            kept_level = sum(k * f[1] for k, f in zip(keeps, facs))
            if kept_level > cap:
                continue
            base_terms = [(cin, tuple(0 for _ in range(nlegs)))]
            kept_pairs = []
            for k, (c, m, P) in zip(keeps, facs):
                kept_pairs.extend([(c, m)] * k)
                rem = P - k
                if rem == 0:
                    continue
                choose = math.comb(P, k)
                new_terms = []
                for coeff, degs in base_terms:
                    for assign in removal_assignments(rem):
                        cf = coeff * choose * _multinomial(rem, assign)
                        dg = list(degs)
                        ok = True
                        for leg, cnt in enumerate(assign):
                            if cnt:
                                cf *= lam(leg, c, m) ** cnt
                                dg[leg] -= cnt * m
                        new_terms.append((cf, tuple(dg)))
                base_terms = new_terms
            avail = cap - kept_level
            # creations: choose a single-leg pattern per leg, total level <= avail
            for coeff, degs in base_terms:
                _creation_fill(legs, nlegs, avail, single_patterns, coeff, degs,
                               kept_pairs, cre, out, out_sec, zc)
    return offsets, out


def _multinomial(n: int, counts) -> int:
    out = math.factorial(n)
    for c in counts:
        out //= math.factorial(c)
    return out


def _creation_fill(legs, nlegs, avail, patterns, coeff, degs, kept_pairs, cre,
                   out, out_sec, zc):
    def rec(leg, remaining, cf, dg, pairs):
        if leg == nlegs:
            key = monomial_key(pairs)
            dkey = tuple(dg)
            vec = out.get(dkey)
            if vec is None:
                vec = FockVector(out_sec, {})
                out[dkey] = vec
            vec.terms[key] = vec.terms.get(key, 0j) + zc * cf
            return
        for plevel in range(remaining + 1):
            for pat in patterns[plevel]:
                cf2 = cf
                for c, m, k in pat:
                    cf2 *= cre(leg, c, m) ** k / math.factorial(k)
                dg2 = list(dg)
                dg2[leg] += plevel
                rec(leg + 1, remaining - plevel, cf2,
                    dg2, pairs + [(c, m) for c, m, k in pat for _ in range(k)])

    rec(0, avail, coeff, list(degs), list(kept_pairs))


def sequential_product(legs: list, v: FockVector, mid_cap: int, out_cap: int,
                       p: ParamPoint) -> tuple:
    """Honest ordered product: rightmost leg acts first.

    legs: list of (descriptor, scale), leftmost first (operator order).
    Intermediate states are truncated at mid_cap, the final output at
    out_cap.  Returns (offsets per leg, {degree tuple: FockVector}).
    """
    states = {(): v}
    offsets = [0j] * len(legs)
    for pos in range(len(legs) - 1, -1, -1):
        V, scale = legs[pos]
        cap = out_cap if pos == 0 else mid_cap
        new_states: dict = {}
        off = None
        for degs, vec in states.items():
            gamma, graded = apply_vertex(V, vec, cap, p, scale)
            off = gamma
            for d, nv in graded.items():
                key = (d,) + degs
                tgt = new_states.get(key)
                if tgt is None:
                    new_states[key] = nv
                else:
                    tgt.add_into(nv)
        offsets[pos] = off if off is not None else 0j
        states = new_states
    return tuple(offsets), states


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------

def contraction_data(V1: VertexDescriptor, V2: VertexDescriptor, p: ParamPoint,
                     kz: int | None = None, s1: complex = 1.0, s2: complex = 1.0) -> tuple:
    """Scalar factor of V1(s1 z1) V2(s2 z2) against the merged product.

    Returns (window, g) with V1 V2 = zc * z1^g * C(z2/z1) * :V1 V2:, where
    the window already contains zc and the scale ratio and g is the
    zero-mode pairing exponent on z1.
    """
    kz = p.kz if kz is None else kz
    ratio = s2 / s1
    logc = [0j] * (kz + 1)
    for m in range(1, kz + 1):
        a = (V1.modes(m) @ bracket_matrix(m, p)) @ V2.modes(-m)
        logc[m] = -a / (m * m) * ratio ** m
    coeffs = [1.0 + 0j] + [0j] * kz
    for n in range(1, kz + 1):
        acc = 0j
        for m in range(1, n + 1):
            acc += m * logc[m] * coeffs[n - m]
        coeffs[n] = acc / n
    g = 0j
    zc = 1.0 + 0j
    if V2.qshift is not None:
        a2, mu2 = V2.qshift
        for f in V1.zfactors:
            if f.weight is None:
                continue
            e = f.coeff * a2 * f.weight.dot(mu2)
            if f.zexp:
                g += e
            zc *= (f.base * (s1 if f.zexp else 1.0)) ** e
    win = LaurentWindow(0.0, {n: zc * coeffs[n] for n in range(kz + 1)}, kz)
    return win, g


def contraction(V1: VertexDescriptor, V2: VertexDescriptor, p: ParamPoint,
                kz: int | None = None) -> LaurentWindow:
    """Contraction window in w = z2/z1; the zero-mode pairing exponent g is
    reported through the window offset (a factor z1^g = z2^g w^{-g})."""
    win, g = contraction_data(V1, V2, p, kz)
    win.offset = -g
    return win


# pointwise contraction values for fundamental-operator pairs -----------------

def _ladder_value(w: complex, p: ParamPoint, pieces, ladder: complex) -> complex:
    """prod_k prod_(e, sign) (1 - x^e * ladder^k * w)^{-sign}.

    Vanishing factors are fine in numerator position (sign -1); only an
    inverted factor hitting zero is a pole.
    """
    kmax = p.nmax(ladder)
    out = 1.0 + 0j
    for k in range(kmax):
        lk = ladder ** k
        for e, sgn in pieces:
            f = 1.0 - p.xp(e) * lk * w
            if sgn > 0:
                if abs(f) < DEGENERACY_EPS:
                    raise DegenerateParameterError(f"contraction evaluated at a pole, w={w}")
                out /= f
            else:
                out *= f
    return out


def lambda_pair_value(a: int, b: int, w: complex, p: ParamPoint) -> complex:
    """Pointwise contraction of Lambda_a(z1) Lambda_b(z2) at w = z2/z1.

    The diagonal case is the reciprocal structure function, evaluated in
    factorized form so its zeros are exact rather than divisions by zero.
    """
    if a == b:
        # inverse of f_{1,1}: same factor ladder with all signs flipped
        pieces = []
        for e1, s1 in ((0, +1), (2 * p.r, -1), (2 - 2 * p.r, -1), (2, +1)):
            for e2, s2 in ((0, +1), (2 * (p.s - 1), -1)):
                pieces.append((e1 + e2, -s1 * s2))
        return _ladder_value(w, p, pieces, p.xp(2 * p.s))
    if a > b:
        w = p.xp(2 * p.s) * w
    pieces = [(2 * p.r, +1), (2 * p.r - 2, -1), (2, -1), (-2, +1),
              (2 - 2 * p.r, +1), (-2 * p.r, -1)]
    return _ladder_value(w, p, pieces, p.xp(2 * p.s))


def screening_cycle_pair_value(w: complex, p: ParamPoint) -> complex:
    """Pointwise contraction of F_1(z1) F_N(z2) at N = 2, w = z2/z1."""
    if p.N != 2:
        raise ValueError("closed-cycle screening contraction implemented for N=2")
    pieces = [(p.s, +1), (2 - p.s, +1), (2 * p.r + p.s - 2, -1), (2 * p.r - p.s, -1)]
    return _ladder_value(w, p, pieces, p.q)


# ---------------------------------------------------------------------------
# graded two-variable elements and relation verifiers
# ---------------------------------------------------------------------------
# An "element family" is a dict {(a, b): FockVector} accompanied by a pair of
# complex offsets: the matrix element of the underlying product against a
# fixed in state reads  z1^(A1 + a) z2^(A2 + b) <.|vec>.

def elems_scale(elems: dict, c: complex) -> dict:
    return {k: v.scale(c) for k, v in elems.items()}


def elems_add(acc: dict, other: dict, c: complex = 1.0):
    for k, v in other.items():
        tgt = acc.get(k)
        if tgt is None:
            acc[k] = v.scale(c)
        else:
            tgt.add_into(v, c)
    return acc


def elems_mul_window(elems: dict, win: LaurentWindow, box: int) -> dict:
    """Multiply by a w-window (w = z2/z1): out(a-n, b+n) += c_n * in(a, b).

    Only output keys with max(|a|,|b|) <= box are kept.  The window offset is
    the caller's to track.
    """
    out: dict = {}
    for (a, b), vec in elems.items():
        for n, cn in win.coeffs.items():
            ka, kb = a - n, b + n
            if abs(ka) > box or abs(kb) > box:
                continue
            tgt = out.get((ka, kb))
            if tgt is None:
                out[(ka, kb)] = vec.scale(cn)
            else:
                tgt.add_into(vec, cn)
    return out


def elems_mul_delta(elems: dict, A: complex, box: int) -> dict:
    """Multiply by delta(A w) = sum_nu A^nu w^nu, keeping a box window."""
    out: dict = {}
    for (a, b), vec in elems.items():
        for ka in range(-box, box + 1):
            nu = a - ka
            kb = b + nu
            if abs(kb) > box:
                continue
            c = A ** nu
            tgt = out.get((ka, kb))
            if tgt is None:
                out[(ka, kb)] = vec.scale(c)
            else:
                tgt.add_into(vec, c)
    return out


def elems_shift(elems: dict, k: int) -> dict:
    """Re-index after absorbing an integer offset difference: the value at
    (a, b) moves to (a - k, b + k)."""
    if k == 0:
        return elems
    return {(a - k, b + k): vec for (a, b), vec in elems.items()}


def align_offset_pair(offs_l, offs_r, tol: float = 1e-9) -> int:
    """Integer k with offs_l = offs_r + (k, -k); raises when incompatible."""
    d1 = offs_l[0] - offs_r[0]
    d2 = offs_l[1] - offs_r[1]
    k = round(d1.real)
    if abs(d1 - k) > tol or abs(d2 + k) > tol:
        raise AssertionError(f"incompatible graded offsets: {d1}, {d2}")
    return k


def elems_residual(e1: dict, e2: dict, box: int, scale: float | None = None) -> float:
    keys = {k for k in set(e1) | set(e2) if abs(k[0]) <= box and abs(k[1]) <= box}
    if scale is None:
        scale = max(
            max((v.max_abs() for k, v in e1.items() if abs(k[0]) <= box and abs(k[1]) <= box), default=0.0),
            max((v.max_abs() for k, v in e2.items() if abs(k[0]) <= box and abs(k[1]) <= box), default=0.0),
            1e-30,
        )
    from .fock import vector_residual

    worst = 0.0
    for k in keys:
        va = e1.get(k)
        vb = e2.get(k)
        if va is None:
            worst = max(worst, vb.max_abs() / scale)
        elif vb is None:
            worst = max(worst, va.max_abs() / scale)
        else:
            worst = max(worst, vector_residual(va, vb, scale))
    return worst


def ordered_pair_elements(V1, s1, V2, s2, v, mid_cap, out_cap, p, prune=1e-22):
    """Elements of V1(s1 z1) V2(s2 z2) acting on v (V2 acts first).

    Returns (offset pair (A1, A2), {(a, b): FockVector}).
    """
    g2, graded2 = apply_vertex(V2, v, mid_cap, p, s2)
    out: dict = {}
    g1 = None
    for d2, vec in graded2.items():
        if prune:
            top = vec.max_abs()
            vec.prune(prune * top)
        g1, graded1 = apply_vertex(V1, vec, out_cap, p, s1)
        for d1, nv in graded1.items():
            key = (d1, d2)
            tgt = out.get(key)
            if tgt is None:
                out[key] = nv
            else:
                tgt.add_into(nv)
    if g1 is None:
        g1 = V1.z_offset(V2.shifted_sector(v.sector), p)
    return (g1, g2), out


@dataclass
class CheckResult:
    name: str
    residual: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


def _default_sectors(p: ParamPoint):
    N = p.N
    return [
        Sector.vacuum(N),
        Sector(WeightVector.alpha(1, N), WeightVector.eps_bar(2, N)),
    ]


def verify_exchange(j: int, p: ParamPoint, cap: int = 2, box: int = 4,
                    mid_cap: int | None = None, sectors=None, states=None) -> CheckResult:
    """Exchange relations for the screening pair (F_j, F_{j+1}) and for
    (F_j, F_j), compared as graded matrix elements with theta prefactors.

    Returns the worst relative residual over both relation families.
    """
    from .fock import basis_up_to
    from .qfunc import theta_w_window

    N = p.N
    mid_cap = (cap + box + 6) if mid_cap is None else mid_cap
    sectors = _default_sectors(p) if sectors is None else sectors
    Fj = make_screening(j, p)
    Fj1 = make_screening(j % N + 1, p)
    width = mid_cap + box + 4
    worst = 0.0
    for sec in sectors:
        basis = states if states is not None else basis_up_to(N, cap)
        for mono in basis:
            v = FockVector.state(sec, mono)
            # neighbor relation: [u2-u1+s/N] Fj(z1)Fj+1(z2) = [u1-u2+1-s/N] Fj+1(z2)Fj(z1).
            # At N = 2 the pair is adjacent on both sides of the cycle and the
            # prefactor is the product over both adjacencies.
            offs_l, el = ordered_pair_elements(Fj, 1.0, Fj1, 1.0, v, mid_cap, cap, p)
            offs_r, er_raw = ordered_pair_elements(Fj1, 1.0, Fj, 1.0, v, mid_cap, cap, p)
            er = {(a, b): vec for (b, a), vec in er_raw.items()}
            th_l = theta_w_window(+1, p.s / N, p, width)
            th_r = theta_w_window(-1, 1 - p.s / N, p, width)
            if N == 2:
                th_l = th_l.mul(theta_w_window(+1, 1 - p.s / N, p, width), out_kz=width)
                th_r = th_r.mul(theta_w_window(-1, p.s / N, p, width), out_kz=width)
            L = elems_mul_window(el, th_l, box + 2)
            R = elems_mul_window(er, th_r, box + 2)
            k = align_offset_pair((offs_l[0] - th_l.offset, offs_l[1] + th_l.offset),
                                  (offs_r[1] - th_r.offset, offs_r[0] + th_r.offset))
            worst = max(worst, elems_residual(L, elems_shift(R, k), box))
            # self relation: [u1-u2][u2-u1-1] Fj Fj = [u2-u1][u1-u2-1] (swapped)
            offs_l, el = ordered_pair_elements(Fj, 1.0, Fj, 1.0, v, mid_cap, cap, p)
            offs_r, er_raw = ordered_pair_elements(Fj, 1.0, Fj, 1.0, v, mid_cap, cap, p)
            er = {(a, b): vec for (b, a), vec in er_raw.items()}
            tl = theta_w_window(-1, 0.0, p, width).mul(theta_w_window(+1, -1.0, p, width), out_kz=width)
            tr = theta_w_window(+1, 0.0, p, width).mul(theta_w_window(-1, -1.0, p, width), out_kz=width)
            L = elems_mul_window(el, tl, box + 2)
            R = elems_mul_window(er, tr, box + 2)
            k = align_offset_pair((offs_l[0] - tl.offset, offs_l[1] + tl.offset),
                                  (offs_r[1] - tr.offset, offs_r[0] + tr.offset))
            worst = max(worst, elems_residual(L, elems_shift(R, k), box))
    return CheckResult(f"exchange F_{j}/F_{j % N + 1} N={N}", worst, 1e-8)


def verify_far_commute(i: int, j: int, p: ParamPoint, cap: int = 1, box: int = 3,
                       mid_cap: int | None = None) -> CheckResult:
    """Plain commutativity F_i(z1)F_j(z2) = F_j(z2)F_i(z1) for screenings at
    cyclic distance >= 2 (needs N >= 4 to be non-vacuous)."""
    from .fock import basis_up_to

    mid_cap = (cap + box + 4) if mid_cap is None else mid_cap
    Fi, Fj = make_screening(i, p), make_screening(j, p)
    worst = 0.0
    for sec in _default_sectors(p):
        for mono in basis_up_to(p.N, cap):
            v = FockVector.state(sec, mono)
            offs_l, el = ordered_pair_elements(Fi, 1.0, Fj, 1.0, v, mid_cap, cap, p)
            offs_r, er_raw = ordered_pair_elements(Fj, 1.0, Fi, 1.0, v, mid_cap, cap, p)
            er = {(a, b): vec for (b, a), vec in er_raw.items()}
            if abs(offs_l[0] - offs_r[1]) > 1e-9 or abs(offs_l[1] - offs_r[0]) > 1e-9:
                raise AssertionError("offset mismatch in far commutation")
            worst = max(worst, elems_residual(el, er, box))
    return CheckResult(f"far commute F_{i}/F_{j} N={p.N}", worst, 1e-9)


def delta_pairs(p: ParamPoint):
    """The (Lambda_a, F_j) pairs with delta-supported commutators, as
    (a, j, coefficient, delta position A):

        [Lambda_a(z1), F_j(z2)] = coefficient * delta(A z2/z1) * :Lambda_a F_j:

    with the normal ordering used throughout (zero-mode powers at the source
    sector).  The diagonal coefficient is (-1 + x^{-2r+2}); the off-diagonal
    and cycle-closing ones are (x^{2r-2} - 1), i.e. the same magnitude
    pattern rescaled by the zero-mode reordering constant x^{2r-2}."""
    diag = -1 + p.xp(-2 * p.r + 2)
    upper = p.xp(2 * p.r - 2) - 1
    out = []
    for j in range(1, p.N + 1):
        out.append((j, j, diag, p.xp(2 * p.s * j / p.N - p.r)))
        if j < p.N:
            out.append((j + 1, j, upper, p.xp(2 * p.s * j / p.N + p.r)))
    out.append((1, p.N, upper, p.xp(p.r)))
    return out


def verify_delta_commutator(j: int, p: ParamPoint, cap: int = 2, box: int = 4,
                            mid_cap: int | None = None, sectors=None) -> CheckResult:
    """Delta-function commutators between fundamental operators and the
    screening F_j, including vanishing for spectator colors."""
    from .fock import basis_up_to

    mid_cap = (cap + box + 4) if mid_cap is None else mid_cap
    sectors = _default_sectors(p) if sectors is None else sectors
    Fj = make_screening(j, p)
    table = {(a, jj): (cf, A) for a, jj, cf, A in delta_pairs(p)}
    worst = 0.0
    for a in range(1, p.N + 1):
        La = make_lambda(a, p)
        for sec in sectors:
            for mono in basis_up_to(p.N, cap):
                v = FockVector.state(sec, mono)
                offs_l, el = ordered_pair_elements(La, 1.0, Fj, 1.0, v, mid_cap, cap, p)
                offs_r, er_raw = ordered_pair_elements(Fj, 1.0, La, 1.0, v, mid_cap, cap, p)
                er = {(aa, bb): vec for (bb, aa), vec in er_raw.items()}
                comm = elems_add(dict(el), er, -1.0)
                entry = table.get((a, j))
                if entry is None:
                    rhs: dict = {}
                else:
                    cf, A = entry
                    offs_m, mer = apply_product([(La, 1.0), (Fj, 1.0)], v, cap, p)
                    if abs(offs_m[1] - offs_l[1]) > 1e-9:
                        raise AssertionError("offset mismatch against merged product")
                    rhs = elems_scale(elems_mul_delta(mer, A, box), cf)
                scale = max(
                    max((vv.max_abs() for vv in el.values()), default=0.0),
                    max((vv.max_abs() for vv in er.values()), default=0.0),
                    1e-30,
                )
                worst = max(worst, elems_residual(comm, rhs, box, scale))
    return CheckResult(f"delta commutators with F_{j} N={p.N}", worst, 1e-8)


def eta_image_law(V: VertexDescriptor, p: ParamPoint):
    """Identification of the Dynkin image of a registry operator.

    Returns (target descriptor, argument rescale, factor(sector) -> complex)
    with  eta(V(z)) = target(rescale * z) * factor,  the factor standing to
    the right (its zero-mode eigenvalues taken at the source sector).

    The oscillator rotation fixes these laws completely; the screening
    images come out at unchanged argument with a sector-dependent constant,
    the fundamental operators at rescaled argument with no constant.
    """
    N, b = p.N, (p.r - 1) / p.r
    sb = p.sqrt_rm1_over_r()
    c = (p.r - 1) / p.r
    kind, j = V.label.split("_")
    j = int(j)
    if kind == "Lambda":
        scale = p.xp(2 * p.s / N) if j < N else p.xp(2 * p.s / N - 2 * p.s)
        return make_lambda(j % N + 1, p), scale, lambda sec: 1.0 + 0j
    if kind != "F":
        raise ValueError(f"no image law for {V.label}")
    if j <= N - 2:
        alpha_next = WeightVector.alpha(j + 1, N)

        def fac(sec, _a=alpha_next):
            pv = p_eigenvalue(_a, sec, p)
            return p.xp((1 - 2 * p.s / N) * (sb * pv + c))
    elif j == N - 1:
        ebN, eb1 = WeightVector.eps_bar(N, N), WeightVector.eps_bar(1, N)

        def fac(sec, _n=ebN, _1=eb1):
            pn, p1 = p_eigenvalue(_n, sec, p), p_eigenvalue(_1, sec, p)
            return p.xp((2 * p.s - N) * (-sb * (pn + (N - 1) * p1) / N
                                         + c * (N - 2) / (2 * N)))
    else:
        eb1, a1 = WeightVector.eps_bar(1, N), WeightVector.alpha(1, N)

        def fac(sec, _1=eb1, _a=a1):
            p1, pa = p_eigenvalue(_1, sec, p), p_eigenvalue(_a, sec, p)
            return p.xp((2 * p.s - N) * (sb * (p1 - pa / N) + c * (N - 2) / (2 * N)))
    return make_screening(j % N + 1, p), 1.0, fac


def verify_eta_screenings(p: ParamPoint, cap: int = 1, sectors=None) -> CheckResult:
    """Dynkin transformation laws of the vertex operators, operationally.

    Checks (i) the automorphism property eta(V(z) v) = eta(V)(z) eta(v) and
    (ii) the identification of eta(V) with the registry image at its
    rescaled argument times the sector-dependent constant; at rank one this
    includes the clean pair swap of the two screenings.
    """
    from .fock import basis_up_to, eta_state, vector_residual

    sectors = _default_sectors(p) if sectors is None else sectors
    ops = [make_lambda(j, p) for j in range(1, p.N + 1)]
    ops += [make_screening(j, p) for j in range(1, p.N + 1)]
    worst = 0.0
    for V in ops:
        Vim = eta_vertex(V, p)
        target, scale, fac = eta_image_law(V, p)
        for sec in sectors:
            for mono in basis_up_to(p.N, cap):
                v = FockVector.state(sec, mono)
                ev = eta_state(v, p)
                g1, lhs = apply_vertex(V, v, cap, p)
                lhs = {d: eta_state(vec, p) for d, vec in lhs.items()}
                g2, mid = apply_vertex(Vim, ev, cap, p)
                g3, rhs = apply_vertex(target, ev, cap, p, scale)
                cst = fac(ev.sector)
                scale_ref = max(max((w.max_abs() for w in lhs.values()), default=0.0), 1e-30)
                for d in set(lhs) | set(mid) | set(rhs):
                    a = lhs.get(d)
                    m = mid.get(d)
                    rr = rhs.get(d)
                    zero = FockVector(a.sector if a else ev.sector, {})
                    worst = max(worst, vector_residual(a or zero, m or zero, scale_ref))
                    rs = (rr or zero).scale(cst)
                    worst = max(worst, vector_residual(a or zero, rs, scale_ref))
    return CheckResult(f"eta transformation laws N={p.N}", worst, 1e-8)
