"""Truncated Laurent series with fractional exponent offsets.

A LaurentWindow represents w^offset * sum_{|n| <= kz} c_n w^n.  Offsets are
arbitrary complex numbers; two windows can be combined when their offsets
differ by an integer, in which case the integer is absorbed into the index.

A MultiWindow is the several-variable analogue, with one complex offset per
variable and integer exponent tuples as keys.  Products truncate back into
the window; that loss is by design and callers budget for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct

COEFF_EPS = 1e-300  # drop exact numerical zeros only


def _align_offset(off_a: complex, off_b: complex, tol: float = 1e-9) -> int:
    """Integer k with off_a = off_b + k, or raise if none exists."""
    d = off_a - off_b
    k = round(d.real)
    if abs(d - k) > tol:
        raise ValueError(f"incompatible window offsets: {off_a} vs {off_b}")
    return k


@dataclass
class LaurentWindow:
    offset: complex = 0.0
    coeffs: dict = field(default_factory=dict)  # int -> complex
    kz: int = 12

    @classmethod
    def constant(cls, c: complex, kz: int = 12) -> "LaurentWindow":
        return cls(0.0, {0: complex(c)} if c != 0 else {}, kz)

    def copy(self) -> "LaurentWindow":
        return LaurentWindow(self.offset, dict(self.coeffs), self.kz)

    def __getitem__(self, n: int) -> complex:
        return self.coeffs.get(n, 0j)

    def support(self):
        return sorted(self.coeffs)

    def scale(self, c: complex) -> "LaurentWindow":
        return LaurentWindow(self.offset, {n: c * v for n, v in self.coeffs.items()}, self.kz)

    def shift_index(self, k: int) -> "LaurentWindow":
        """Multiply by w^k, re-indexing (offset unchanged, indices move)."""
        return LaurentWindow(self.offset, {n + k: v for n, v in self.coeffs.items()}, self.kz)

    def scale_arg(self, a: complex) -> "LaurentWindow":
        """w -> a*w.  The a^offset factor is folded into the coefficients."""
        if a == 1:
            return self.copy()
        pref = a ** self.offset if self.offset != 0 else 1.0
        return LaurentWindow(
            self.offset,
            {n: v * pref * a ** n for n, v in self.coeffs.items()},
            self.kz,
        )

    def add(self, other: "LaurentWindow") -> "LaurentWindow":
        k = _align_offset(other.offset, self.offset)
        out = dict(self.coeffs)
        for n, v in other.coeffs.items():
            out[n + k] = out.get(n + k, 0j) + v
        return LaurentWindow(self.offset, out, max(self.kz, other.kz))

    def mul(self, other: "LaurentWindow", out_kz: int | None = None) -> "LaurentWindow":
        kz = out_kz if out_kz is not None else max(self.kz, other.kz)
        out: dict = {}
        for n1, v1 in self.coeffs.items():
            for n2, v2 in other.coeffs.items():
                n = n1 + n2
                if abs(n) <= kz:
                    out[n] = out.get(n, 0j) + v1 * v2
        return LaurentWindow(self.offset + other.offset, out, kz)

    def truncate(self, kz: int) -> "LaurentWindow":
        return LaurentWindow(self.offset, {n: v for n, v in self.coeffs.items() if abs(n) <= kz}, kz)

    def value(self, w: complex) -> complex:
        tot = 0j
        for n, v in self.coeffs.items():
            tot += v * w ** n
        if self.offset != 0:
            tot *= w ** self.offset
        return tot

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coeffs.values()), default=0.0)


def window_residual(a: LaurentWindow, b: LaurentWindow, n_range=None, floor: float = 1e-30) -> float:
    """Max relative coefficient difference after aligning integer offsets."""
    k = _align_offset(b.offset, a.offset)
    idx = set(a.coeffs) | {n + k for n in b.coeffs}
    if n_range is not None:
        idx = {n for n in idx if n_range[0] <= n <= n_range[1]}
    scale = max(a.max_abs(), b.max_abs(), floor)
    worst = 0.0
    for n in idx:
        worst = max(worst, abs(a[n] - b.coeffs.get(n - k, 0j)) / scale)
    return worst


@dataclass
class MultiWindow:
    nvars: int
    offsets: tuple = ()
    terms: dict = field(default_factory=dict)  # tuple[int,...] -> complex
    kz: int = 12

    def __post_init__(self):
        if not self.offsets:
            self.offsets = tuple(0j for _ in range(self.nvars))

    @classmethod
    def constant(cls, nvars: int, c: complex, kz: int = 12) -> "MultiWindow":
        zero = tuple(0 for _ in range(nvars))
        return cls(nvars, terms={zero: complex(c)} if c != 0 else {}, kz=kz)

    @classmethod
    def from_ratio(cls, nvars: int, win: LaurentWindow, j: int, k: int, kz: int = 12) -> "MultiWindow":
        """Embed a one-variable window in w = z_k / z_j (0-based j, k)."""
        if win.offset != 0:
            raise ValueError("ratio embedding expects integer-offset-free windows")
        terms = {}
        for n, v in win.coeffs.items():
            key = [0] * nvars
            key[k] += n
            key[j] -= n
            terms[tuple(key)] = v
        return cls(nvars, terms=terms, kz=kz)

    def copy(self) -> "MultiWindow":
        return MultiWindow(self.nvars, self.offsets, dict(self.terms), self.kz)

    def scale(self, c: complex) -> "MultiWindow":
        return MultiWindow(self.nvars, self.offsets, {t: c * v for t, v in self.terms.items()}, self.kz)

    def mul(self, other: "MultiWindow", out_kz: int | None = None) -> "MultiWindow":
        if other.nvars != self.nvars:
            raise ValueError("variable count mismatch")
        kz = out_kz if out_kz is not None else max(self.kz, other.kz)
        out: dict = {}
        for t1, v1 in self.terms.items():
            for t2, v2 in other.terms.items():
                t = tuple(a + b for a, b in zip(t1, t2))
                if all(abs(e) <= kz for e in t):
                    out[t] = out.get(t, 0j) + v1 * v2
        offs = tuple(a + b for a, b in zip(self.offsets, other.offsets))
        return MultiWindow(self.nvars, offs, out, kz)

    def coeff(self, key) -> complex:
        return self.terms.get(tuple(key), 0j)

    def max_abs(self) -> float:
        return max((abs(v) for v in self.terms.values()), default=0.0)
