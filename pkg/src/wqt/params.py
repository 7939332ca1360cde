"""Evaluation context: the deformation parameters and truncation orders.

Everything downstream is evaluated numerically at a fixed generic point
(x, r, s) with 0 < x < 1.  The derived parameters are q = x^{2r},
t = x^{2r-2} and the elliptic nome period tau = pi*i/log(x).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field


class DegenerateParameterError(ValueError):
    """A denominator that should be generically nonzero vanished."""


# magnitude below which a structural denominator counts as degenerate
DEGENERACY_EPS = 1e-12

# q-products are truncated once |q|^n drops below this
PRODUCT_TAIL_EPS = 1e-16


@dataclass(frozen=True)
class ParamPoint:
    """Fixed parameter point (x, r, s, N) with truncation orders.

    kq: power of x beyond which q-expansions are discarded.
    kz: half-width of one-variable Laurent windows.
    """

    x: float = 0.3
    r: complex = 2.5
    s: complex = 2.4
    N: int = 2
    kq: int = 28
    kz: int = 12

    def __post_init__(self):
        if not (0.0 < self.x < 1.0):
            raise ValueError(f"x must lie in (0, 1), got {self.x}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if self.kq < 1 or self.kz < 1:
            raise ValueError("truncation orders kq, kz must be >= 1")
        if abs(self.q) >= 1.0 or abs(self.x ** (2 * self.s)) >= 1.0:
            raise ValueError("need |x^{2r}| < 1 and |x^{2s}| < 1 for product truncation")

    @property
    def q(self) -> complex:
        return self.x ** (2 * self.r)

    @property
    def t(self) -> complex:
        return self.x ** (2 * self.r - 2)

    @property
    def tau(self) -> complex:
        return math.pi * 1j / math.log(self.x)

    def xp(self, a: complex) -> complex:
        """x raised to an arbitrary complex exponent (principal branch)."""
        if a == 0:
            return 1.0 + 0j
        return cmath.exp(a * math.log(self.x))

    def nmax(self, base: complex) -> int:
        """Number of product factors needed so |base|^n < PRODUCT_TAIL_EPS."""
        b = abs(base)
        if b >= 1.0:
            raise DegenerateParameterError(f"product base |{base}| >= 1 cannot be truncated")
        if b == 0.0:
            return 1
        return max(1, int(math.log(PRODUCT_TAIL_EPS) / math.log(b)) + 1)

    def bracket(self, a: complex) -> complex:
        """[a] = (x^a - x^{-a}) / (x - x^{-1})."""
        return (self.xp(a) - self.xp(-a)) / (self.x - 1.0 / self.x)

    def sqrt_rm1_over_r(self) -> complex:
        """Principal branch of sqrt((r-1)/r), fixed once per point."""
        self._check_r()
        return cmath.sqrt((self.r - 1) / self.r)

    def sqrt_r_rm1(self) -> complex:
        """Principal branch of sqrt(r(r-1))."""
        self._check_r()
        return cmath.sqrt(self.r * (self.r - 1))

    def _check_r(self):
        if abs(self.r) < DEGENERACY_EPS or abs(self.r - 1) < DEGENERACY_EPS:
            raise DegenerateParameterError("r in {0, 1} degenerates the zero-mode normalization")


DEFAULT_POINT = ParamPoint()
