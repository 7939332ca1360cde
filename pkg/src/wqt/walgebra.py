"""Generators T_j(z) built from ordered products of fundamental operators,
their quadratic exchange relations, mode algebra, and limits.

T_j(z) sums the normal-ordered products Lambda_{s_1}(x^{-j+1}z) ...
Lambda_{s_j}(x^{j-1}z) over ordered color subsets; each summand collapses to
a single vertex descriptor.  Products of two generators are evaluated both
sequentially (graded matrix elements, exact within level caps) and in
resummed form (pointwise contraction values times normal-ordered
polynomials), the latter supplying delta-term values by analytic
continuation to the delta support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .params import DegenerateParameterError, ParamPoint
from .fock import (FockVector, Sector, WeightVector, basis_up_to,
                   monomial_level, vector_residual)
from .qfunc import const_c, delta_fn, struct_f, fused_g, struct_f_value
from .vertex import (CheckResult, VertexDescriptor, ZeroModeFactor,
                     apply_product, apply_vertex, elems_add, elems_mul_window,
                     elems_residual, elems_scale, elems_shift,
                     lambda_pair_value, make_dwa_split, make_lambda,
                     ordered_pair_elements, _default_sectors)
from .windows import LaurentWindow


def merge_colors(colors, shifts, p: ParamPoint, flavor: str = "three") -> VertexDescriptor:
    """Single descriptor for :Lambda_{c_1}(a_1 z) ... Lambda_{c_k}(a_k z):."""
    if flavor == "three":
        parts = [make_lambda(c, p) for c in colors]
    elif flavor == "dwa":
        parts = [make_dwa_split(c, p)[0] for c in colors]
    else:
        raise ValueError(f"unknown flavor {flavor}")
    zf = tuple(f for d in parts for f in d.zfactors)

    def mode(m, _parts=parts, _shifts=tuple(shifts)):
        v = _parts[0].modes(m) * _shifts[0] ** (-m)
        for d, a in zip(_parts[1:], _shifts[1:]):
            v = v + d.modes(m) * a ** (-m)
        return v

    label = ("T" if flavor == "three" else "TDWA") + "".join(str(c) for c in colors)
    return VertexDescriptor(label, p.N, None, WeightVector.zero(p.N),
                            WeightVector.zero(p.N), zf, mode)


@dataclass
class TOperator:
    j: int
    flavor: str
    summands: list          # list of (colors tuple, VertexDescriptor)
    shifts: tuple           # argument scales common to all summands

    def descriptors(self):
        return [d for _, d in self.summands]


_T_CACHE: dict = {}


def build_T(j: int, p: ParamPoint, flavor: str = "three") -> TOperator:
    """Generator of weight j: sum over ordered color subsets of size j.

    Instances are cached per parameter point so the graded block matrices
    attached to the summand descriptors are shared across verifications.
    """
    if not 0 <= j:
        raise ValueError("j must be nonnegative")
    key = (p.x, p.r, p.s, p.N, j, flavor)
    hit = _T_CACHE.get(key)
    if hit is not None:
        return hit
    shifts = tuple(p.xp(-j + 1 + 2 * t) for t in range(j))
    summands = []
    if j <= p.N:
        for colors in combinations(range(1, p.N + 1), j):
            summands.append((colors, merge_colors(colors, shifts, p, flavor)))
    out = TOperator(j, flavor, summands, shifts)
    _T_CACHE[key] = out
    return out


def is_unit(T: TOperator) -> bool:
    """T_0 is the unit operator, T_{j>N} vanishes."""
    return T.j == 0


# ---------------------------------------------------------------------------
# graded products of two generators
# ---------------------------------------------------------------------------

def t_pair_elements(Ta: TOperator, sa: complex, Tb: TOperator, sb: complex,
                    v: FockVector, mid_cap: int, cap: int, p: ParamPoint) -> dict:
    """Sequential elements of Ta(sa z1) Tb(sb z2) on v: {(a, b): FockVector}.

    Tb acts first up to mid_cap; the second operator acts through cached
    graded block matrices (the fundamental-operator summands carry no
    lattice shifts, so their oscillator blocks are sector independent and a
    block at scale a is the unit-scale block times a^d).
    """
    from .fock import basis_monomials
    from .vertex import osc_down_blocks

    if is_unit(Tb):
        out: dict = {}
        if is_unit(Ta):
            return {(0, 0): v}
        for _, d in Ta.summands:
            g, graded = apply_vertex(d, v, cap, p, sa)
            for da, vec in graded.items():
                elems_add(out, {(da, 0): vec})
        return out
    first: dict = {}
    for _, d in Tb.summands:
        g, graded = apply_vertex(d, v, mid_cap, p, sb)
        for db, vec in graded.items():
            elems_add(first, {(db,): vec})
    out = {}
    if is_unit(Ta):
        return {(0, db): vec for (db,), vec in first.items()}
    sec = v.sector
    lin = min(monomial_level(m) for m in v.terms) if v.terms else 0
    basis_cache = {}
    for (db,), vec in first.items():
        lev = lin + db
        bas = basis_cache.get(lev)
        if bas is None:
            bas = basis_monomials(p.N, lev)
            basis_cache[lev] = bas
        idx = {m: i for i, m in enumerate(bas)}
        col = np.zeros(len(bas), dtype=complex)
        for k, c in vec.terms.items():
            col[idx[k]] = c
        for _, d in Ta.summands:
            zc = d.zconst(sec, p, sa)
            blocks = osc_down_blocks(d, p, mid_cap, cap)
            for da in range(-lev, cap - lev + 1):
                blk = blocks.get((lev, da))
                if blk is None:
                    continue
                res = blk @ col
                if not np.any(res):
                    continue
                fac = zc * sa ** da
                tgt = basis_monomials(p.N, lev + da)
                nv = FockVector(sec, {})
                for i2, c2 in enumerate(res):
                    if c2 != 0:
                        nv.terms[tgt[i2]] = fac * c2
                elems_add(out, {(da, db): nv})
    return out


def t_pair_value_matrix(Ta: TOperator, sa: complex, Tb: TOperator, sb: complex,
                        w0: complex, states: list, sec: Sector, cap: int,
                        p: ParamPoint):
    """Analytic value of the z2-ratio generating function of Ta(sa z1)Tb(sb z2).

    For each matrix element, sum_{d2} w0^{d2} [coefficient of z1^{d1} z2^{d2}],
    resummed over intermediate states via pointwise pair contractions.  Used
    to evaluate delta-supported terms at their support.  Returns
    {(in_index, out_monomial): value-dict}: a map in-index -> {(out mono): val}.
    """
    if is_unit(Ta) and is_unit(Tb):
        return [ {states[i]: 1.0 + 0j} for i in range(len(states)) ]
    out = []
    for mono in states:
        v = FockVector.state(sec, mono)
        acc: dict = {}
        if is_unit(Ta) or is_unit(Tb):
            T = Tb if is_unit(Ta) else Ta
            ss = sb if is_unit(Ta) else sa
            for _, d in T.summands:
                g, graded = apply_vertex(d, v, cap, p, ss)
                for dd, vec in graded.items():
                    fac = w0 ** dd if is_unit(Ta) else 1.0
                    doit = vec.scale(fac) if is_unit(Ta) else vec
                    # unit Tb: only d2 = 0 contributes, no w0 factor
                    for k, c in (doit.terms if is_unit(Ta) else vec.terms).items():
                        acc[k] = acc.get(k, 0j) + c * (1.0 if not is_unit(Ta) else 1.0)
            out.append(acc)
            continue
        for ca, da in Ta.summands:
            for cb, db_ in Tb.summands:
                cval = 1.0 + 0j
                for ia, col_a in enumerate(ca):
                    for ib, col_b in enumerate(cb):
                        arg = (Tb.shifts[ib] * sb) / (Ta.shifts[ia] * sa) * w0
                        cval *= lambda_pair_value(col_a, col_b, arg, p)
                offs, mer = apply_product([(da, sa), (db_, sb)], v, cap, p)
                for (d1, d2), vec in mer.items():
                    fac = cval * w0 ** d2
                    for k, c in vec.terms.items():
                        acc[k] = acc.get(k, 0j) + fac * c
        out.append(acc)
    return out


def t_pair_value_at(Ta, sa, Tb, sb, w0, mono, sec, cap, p, eps: float = 1e-5) -> dict:
    """Pole-safe analytic pair value at w0.

    Individual summand-pair contractions can have simple poles at delta
    supports that cancel in the color sum; averaging the values at
    w0 (1 +- eps) removes any uncancelled simple-pole part exactly and
    leaves an O(eps^2) error on the regular part.
    """
    va = t_pair_value_matrix(Ta, sa, Tb, sb, w0 * (1 + eps), [mono], sec, cap, p)[0]
    vb = t_pair_value_matrix(Ta, sa, Tb, sb, w0 * (1 - eps), [mono], sec, cap, p)[0]
    return {k: 0.5 * (va.get(k, 0j) + vb.get(k, 0j)) for k in set(va) | set(vb)}


def invert_window(win: LaurentWindow) -> LaurentWindow:
    """f(w) -> f(1/w) as a window (offset negated, indices mirrored)."""
    return LaurentWindow(-win.offset, {-n: c for n, c in win.coeffs.items()}, win.kz)


def verify_quadratic(i: int, j: int, p: ParamPoint, cap: int = 2, box: int = 5,
                     sectors=None, flavor: str = "three") -> CheckResult:
    """Quadratic relation between T_i and T_j, checked degree by degree.

    LHS: f_{i,j}(z2/z1) T_i(z1) T_j(z2) - f_{j,i}(z1/z2) T_j(z2) T_i(z1).
    RHS: the nested delta series with constants c, Delta(x^{2l+1}) and
    structure-function values; delta terms are evaluated through the
    analytic continuation of the paired product at the delta support.
    """
    if not (1 <= i <= j <= p.N):
        raise ValueError("need 1 <= i <= j <= N")
    # the swapped-ordering window needs intermediate levels past the compare
    # box; the cut tail shrinks geometrically in the extra depth
    mid_cap = cap + box + 5
    kzw = max(p.kz, mid_cap + cap + 2)
    sectors = _default_sectors(p) if sectors is None else sectors
    Ti, Tj = build_T(i, p, flavor), build_T(j, p, flavor)
    fij = struct_f(i, j, p, kzw)
    fji_inv = invert_window(struct_f(j, i, p, kzw))
    c0 = const_c(p)
    worst = 0.0
    for sec in sectors:
        states = basis_up_to(p.N, cap)
        for mono in states:
            v = FockVector.state(sec, mono)
            el = t_pair_elements(Ti, 1.0, Tj, 1.0, v, mid_cap, cap, p)
            er_raw = t_pair_elements(Tj, 1.0, Ti, 1.0, v, mid_cap, cap, p)
            er = {(a, b): vec for (b, a), vec in er_raw.items()}
            lhs = elems_mul_window(el, fij, box)
            lhs2 = elems_mul_window(er, fji_inv, box)
            cond = _abs_window_mags(el, fij, box)
            for k2, m2 in _abs_window_mags(er, fji_inv, box).items():
                cond[k2] = max(cond.get(k2, 0.0), m2)
            # RHS: sum over k of delta terms, each an A^b profile times the
            # analytic pair value at the delta support
            rhs: dict = {}
            lin = monomial_level(mono)
            for k in range(1, i + 1):
                pref = c0
                for l in range(1, k):
                    pref *= delta_fn(p.xp(2 * l + 1), p)
                Tik, Tjk = build_T(i - k, p, flavor), build_T(j + k, p, flavor)
                if not Tik.summands or not Tjk.summands:
                    continue
                for sign, A, s1, s2 in (
                    (+1, p.xp(j - i + 2 * k), p.xp(-k), p.xp(k)),
                    (-1, p.xp(-j + i - 2 * k), p.xp(k), p.xp(-k)),
                ):
                    fconst = struct_f_value(i - k, j + k, p.xp(-(j - i)) if sign > 0 else p.xp(j - i), p)
                    vals = t_pair_value_at(Tik, s1, Tjk, s2, 1.0 / A, mono, sec, cap, p)
                    for (a, b) in [(aa, bb) for aa in range(-box, box + 1) for bb in range(-box, box + 1)]:
                        lev = lin + a + b
                        if not 0 <= lev <= cap:
                            continue
                        vec = FockVector(sec, {kk: cc for kk, cc in vals.items()
                                               if monomial_level(kk) == lev})
                        if not vec.terms:
                            continue
                        elems_add(rhs, {(a, b): vec}, sign * pref * fconst * A ** b)
            worst = max(worst, _bidegree_residual(lhs, lhs2, rhs, box, cond))
    return CheckResult(f"quadratic T_{i} T_{j} N={p.N} ({flavor})", worst, 1e-8)


def _abs_window_mags(elems: dict, win: LaurentWindow, box: int) -> dict:
    """Conditioning scale of a window convolution: same contraction with all
    magnitudes replaced by absolute values."""
    out: dict = {}
    for (a, b), vec in elems.items():
        m = vec.max_abs()
        for n, cn in win.coeffs.items():
            ka, kb = a - n, b + n
            if abs(ka) > box or abs(kb) > box:
                continue
            out[(ka, kb)] = out.get((ka, kb), 0.0) + abs(cn) * m
    return out


def _bidegree_residual(lhs1: dict, lhs2: dict, rhs: dict, box: int,
                       cond: dict | None = None) -> float:
    """Max over bidegrees of |L1 - L2 - R| relative to the bidegree scale.

    The scale is max(|L1|, |L2|, |R|) per bidegree, raised to the
    conditioning estimate in `cond` when provided (sum of absolute values of
    the convolution inputs), so geometric cancellation inside a coefficient
    is judged against the size of what cancelled.
    """
    gscale = 1e-30
    for e in (lhs1, lhs2, rhs):
        for k, vv in e.items():
            if abs(k[0]) <= box and abs(k[1]) <= box:
                gscale = max(gscale, vv.max_abs())
    worst = 0.0
    keys = {k for k in set(lhs1) | set(lhs2) | set(rhs)
            if abs(k[0]) <= box and abs(k[1]) <= box}
    for k in keys:
        monos = set()
        parts = [e.get(k) for e in (lhs1, lhs2, rhs)]
        for vv in parts:
            if vv is not None:
                monos |= set(vv.terms)
        kscale = max(max((vv.max_abs() for vv in parts if vv is not None), default=0.0),
                     (cond.get(k, 0.0) if cond is not None else 0.0),
                     1e-9 * gscale)
        for mn in monos:
            d = sum(sg * (vv.terms.get(mn, 0j) if vv is not None else 0j)
                    for sg, vv in zip((1, -1, -1), parts))
            worst = max(worst, abs(d) / kscale)
    return worst


# ---------------------------------------------------------------------------
# mode matrices
# ---------------------------------------------------------------------------

@dataclass
class ModeMatrix:
    """Fourier modes T_n = [z^{-n}] T(z) as matrices on the capped basis."""

    cap: int
    basis: list
    index: dict
    blocks: dict  # n -> ndarray

    def mode(self, n: int) -> np.ndarray:
        dim = len(self.basis)
        return self.blocks.get(n, np.zeros((dim, dim), dtype=complex))


def t_matrix(T: TOperator, sec: Sector, cap: int, p: ParamPoint,
             scale: complex = 1.0) -> ModeMatrix:
    """Graded matrix of T(z) on the level-capped basis of one sector.

    The coefficient of z^{+d} maps level l to l + d and is stored as mode
    n = -d following T(z) = sum_n T_n z^{-n}.
    """
    basis = basis_up_to(p.N, cap)
    index = {m: k for k, m in enumerate(basis)}
    dim = len(basis)
    blocks: dict = {}
    for col, mono in enumerate(basis):
        v = FockVector.state(sec, mono)
        if is_unit(T):
            blocks.setdefault(0, np.zeros((dim, dim), dtype=complex))[col, col] = 1.0
            continue
        for _, d in T.summands:
            g, graded = apply_vertex(d, v, cap, p, scale)
            for dd, vec in graded.items():
                blk = blocks.setdefault(-dd, np.zeros((dim, dim), dtype=complex))
                for k, c in vec.terms.items():
                    row = index.get(k)
                    if row is not None:
                        blk[row, col] += c
    return ModeMatrix(cap, basis, index, blocks)


def gram_matrix(N: int, level: int, p: ParamPoint) -> np.ndarray:
    """Level pairing <vac| (adjoint of row monomial) (column monomial) |vac>,
    with the adjoint sending beta_{-m} to beta_{+m} (colors fixed)."""
    from .fock import basis_monomials, normal_order_apply

    basis = basis_monomials(N, level)
    sec = Sector.vacuum(N)
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for col, mono in enumerate(basis):
        v = FockVector.state(sec, mono)
        for row, out_mono in enumerate(basis):
            word = [(c, m) for c, m in out_mono]
            res = normal_order_apply(word, v, level, p)
            out[row, col] = res.terms.get((), 0j)
    return out


def verify_degeneration(p: ParamPoint, cap: int = 2, sectors=None) -> CheckResult:
    """At s = N the top generator T_N collapses to the unit operator.

    At finite truncation the collapse holds modulo the null ideal of the
    degenerate level pairing (the decoupled-boson directions pair to zero
    with everything), so the check is that Gram * (T_N - 1) vanishes
    block by block.
    """
    if abs(p.s - p.N) > 1e-12:
        raise ValueError("degeneration check requires s = N")
    sectors = _default_sectors(p) if sectors is None else sectors
    grams = {}
    from .fock import basis_monomials

    levels = {}
    pos = 0
    for lev in range(cap + 1):
        n = len(basis_monomials(p.N, lev))
        levels[lev] = (pos, pos + n)
        pos += n
        g = gram_matrix(p.N, lev, p)
        grams[lev] = g / max(np.max(np.abs(g)), 1e-30)
    worst = 0.0
    for sec in sectors:
        mm = t_matrix(build_T(p.N, p), sec, cap, p)
        dim = len(mm.basis)
        for n, blk in mm.blocks.items():
            diff = blk - (np.eye(dim) if n == 0 else 0.0)
            scale = max(np.max(np.abs(blk)), 1.0)
            for lev_in in range(cap + 1):
                lev_out = lev_in - n
                if not 0 <= lev_out <= cap:
                    continue
                i0, i1 = levels[lev_out]
                j0, j1 = levels[lev_in]
                proj = grams[lev_out] @ diff[i0:i1, j0:j1]
                worst = max(worst, float(np.max(np.abs(proj))) / scale)
        if 0 not in mm.blocks:
            worst = 1.0
    return CheckResult(f"degeneration T_{p.N} = 1 at s = N = {p.N}", worst, 1e-10)


def verify_deformed_virasoro_modes(p: ParamPoint, cap: int = 2, nmax: int = 2,
                                   sec: Sector | None = None) -> CheckResult:
    """Mode-form relation of the deformed Virasoro algebra at s = N = 2.

    [T_n, T_m] = -sum_{l>=1} f_l (T_{n-l} T_{m+l} - T_{m-l} T_{n+l})
                 + c ((q/t)^n - (t/q)^n) delta_{n+m,0}
    on the level-capped space, with f_l the Taylor coefficients of f_{1,1}.
    """
    if p.N != 2 or abs(p.s - 2) > 1e-12:
        raise ValueError("mode relation requires s = N = 2")
    sec = Sector.vacuum(2) if sec is None else sec
    big = 2 * cap + 2
    mm = t_matrix(build_T(1, p), sec, big, p)
    dim = len(mm.basis)
    fw = struct_f(1, 1, p, max(p.kz, 2 * big + 2))
    c0 = const_c(p)
    qt = p.q / p.t
    # restrict the comparison to rows/cols whose level leaves the l-sum exact
    keep = [k for k, m in enumerate(mm.basis) if monomial_level(m) <= cap]
    worst = 0.0
    scale = max(np.max(np.abs(mm.mode(n))) for n in range(-nmax, nmax + 1)) ** 2
    for n in range(-nmax, nmax + 1):
        for m in range(-nmax, nmax + 1):
            lhs = mm.mode(n) @ mm.mode(m) - mm.mode(m) @ mm.mode(n)
            rhs = np.zeros((dim, dim), dtype=complex)
            for l in range(1, big + 1):
                fl = fw[l]
                rhs -= fl * (mm.mode(n - l) @ mm.mode(m + l) - mm.mode(m - l) @ mm.mode(n + l))
            if n + m == 0:
                rhs += c0 * (qt ** n - qt ** (-n)) * np.eye(dim)
            diff = (lhs - rhs)[np.ix_(keep, keep)]
            worst = max(worst, float(np.max(np.abs(diff))) / scale)
    return CheckResult("deformed Virasoro mode relation s=N=2", worst, 1e-8)


def virasoro_limit_check(hs, beta: float, p_template=None, cap: int = 2) -> dict:
    """Conformal limit: extract Virasoro generators from T_n at s = N = 2.

    q = e^h, t = q^beta with h -> 0 along hs (Richardson-extrapolated in
    h^2); checks [L_1, L_{-1}] = 2 L_0 and extracts the central charge from
    the vacuum element of [L_2, L_{-2}] = 4 L_0 + C/2.
    """
    r = 1.0 / (1.0 - beta)
    cap_int = cap + 2  # commutators need headroom above the compared levels

    def l_matrices(h):
        x = math.exp(-abs(h) / (2 * r))
        p = ParamPoint(x=x, r=r, s=2.0, N=2)
        s = Sector.vacuum(2)
        mm = t_matrix(build_T(1, p), s, cap_int, p)
        # quotient by the null ideal of the degenerate level pairing, in the
        # h-independent basis built from the difference boson b_m = b^1_m - b^2_m
        from .fock import basis_monomials, monomial_key
        from itertools import combinations_with_replacement

        def b_partitions(level):
            res = []

            def rec(rem, mx, acc):
                if rem == 0:
                    res.append(list(acc))
                    return
                for m in range(min(rem, mx), 0, -1):
                    rec(rem - m, m, acc + [m])

            rec(level, level, [])
            return res

        cols = []
        ncompare = 0
        offset = {}
        pos = 0
        for lev in range(cap_int + 1):
            offset[lev] = pos
            pos += len(basis_monomials(2, lev))
        dim_full = pos
        for lev in range(cap_int + 1):
            basis = basis_monomials(2, lev)
            idx = {m: i for i, m in enumerate(basis)}
            for part in b_partitions(lev):
                vec = np.zeros(dim_full, dtype=complex)
                # expand prod_m (beta^1_{-m} - beta^2_{-m}) over color choices
                monos = {(): 1.0}
                for m in part:
                    nxt = {}
                    for key, cf in monos.items():
                        for color, sg in ((1, 1.0), (2, -1.0)):
                            k2 = monomial_key(list(key) + [(color, m)])
                            nxt[k2] = nxt.get(k2, 0.0) + sg * cf
                    monos = nxt
                for k, cf in monos.items():
                    vec[offset[lev] + idx[k]] = cf
                cols.append(vec)
                if lev <= cap:
                    ncompare += 1
        U = np.array(cols).T
        # level Gram pairing, block diagonal
        S = np.zeros((dim_full, dim_full), dtype=complex)
        for lev in range(cap_int + 1):
            g = gram_matrix(2, lev, p)
            i0 = offset[lev]
            S[i0:i0 + g.shape[0], i0:i0 + g.shape[1]] = g
        phi = U.conj().T @ S
        M = phi @ U
        Minv = np.linalg.inv(M)
        dim = U.shape[1]
        shift = (1 - beta) ** 2 / (4 * beta)
        out = {}
        for n in range(-cap, cap + 1):
            tn = Minv @ (phi @ mm.mode(n) @ U)
            ln = (tn - (2.0 if n == 0 else 0.0) * np.eye(dim)) / (beta * h * h)
            if n == 0:
                ln = ln - shift * np.eye(dim)
            out[n] = ln
        out["ncompare"] = ncompare
        return out

    def richardson(f, h):
        a, b = f(h), f(h / 2)
        return {n: (4 * b[n] - a[n]) / 3 if n != "ncompare" else a[n] for n in a}

    results = []
    for h in hs:
        L = richardson(l_matrices, h)
        nc = L["ncompare"]
        comm11 = (L[1] @ L[-1] - L[-1] @ L[1])[:nc, :nc]
        resid_alg = float(np.max(np.abs(comm11 - 2 * L[0][:nc, :nc])))
        comm22 = L[2] @ L[-2] - L[-2] @ L[2]
        c_est = 2 * (comm22[0, 0] - 4 * L[0][0, 0])
        results.append({"h": h, "algebra_resid": resid_alg, "central": complex(c_est)})
    c_target = 1 - 6 * (1 - beta) ** 2 / beta
    best = results[-1]
    return {
        "beta": beta,
        "target_central": c_target,
        "results": results,
        "central_error": abs(best["central"].real - c_target),
        "algebra_resid": best["algebra_resid"],
    }


def verify_dwa_z_commute(j: int, p: ParamPoint, cap: int = 2, box: int = 4,
                         sectors=None) -> CheckResult:
    """The W-algebra part of the split commutes with the decoupled boson:
    T_j^{DWA}(z1) Z(z2) = Z(z2) T_j^{DWA}(z1), graded-element comparison."""
    if not 1 <= j <= p.N - 1:
        raise ValueError("need 1 <= j <= N-1")
    mid_cap = cap + box + 1
    sectors = _default_sectors(p) if sectors is None else sectors
    Tj = build_T(j, p, flavor="dwa")
    zb = make_dwa_split(1, p)[1]
    worst = 0.0
    for sec in sectors:
        for mono in basis_up_to(p.N, cap):
            v = FockVector.state(sec, mono)
            el: dict = {}
            for _, d in Tj.summands:
                g2, graded2 = apply_vertex(zb, v, mid_cap, p)
                for d2, vec in graded2.items():
                    g1, graded1 = apply_vertex(d, vec, cap, p)
                    for d1, nv in graded1.items():
                        elems_add(el, {(d1, d2): nv})
            er: dict = {}
            for _, d in Tj.summands:
                g1, graded1 = apply_vertex(d, v, mid_cap, p)
                for d1, vec in graded1.items():
                    g2, graded2 = apply_vertex(zb, vec, cap, p)
                    for d2, nv in graded2.items():
                        elems_add(er, {(d1, d2): nv})
            worst = max(worst, elems_residual(el, er, box))
    return CheckResult(f"[T_{j}^DWA, Z] = 0 N={p.N}", worst, 1e-8)
