"""Probability bounds for two-way and three-way online correlated selection.

Every function here is parametric in the two selector qualities ``gamma_a``
(first two-way selector) and ``gamma_b`` (second two-way selector).  Functions
accept floats or :class:`fractions.Fraction` values; with Fraction inputs the
arithmetic stays exact, which the test-suite uses to avoid false failures near
ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence, Union

Number = Union[float, Fraction]

#: Quality of the matching-based two-way selector that the package runs.
GAMMA_A = Fraction(1, 16)

#: Quality of the stronger two-way selector used in the published analysis.
#: Computed from its closed form, never stored as a truncated decimal.
GAMMA_B = (13 * math.sqrt(13) - 35) / 108

SLACK = 1e-12

HALF = Fraction(1, 2)
TWO_THIRDS = Fraction(2, 3)


class BoundsError(ValueError):
    """Raised for parameters outside the domain of a bound."""


def _one(x: Number) -> Number:
    # 1 in the arithmetic of ``x`` (Fraction stays Fraction, float stays float)
    return x * 0 + 1


# ---------------------------------------------------------------------------
# scalar bounds
# ---------------------------------------------------------------------------

def zeta_product(k: int, gamma: Number) -> Number:
    """Never-chosen bound of a two-way ``gamma``-selector on ``k`` consecutive pairs."""
    if k < 0:
        raise BoundsError(f"k must be non-negative, got {k}")
    return HALF**k * (1 - gamma) ** max(k - 1, 0) * _one(gamma)


def f_seq(k: int, gamma_b: Number = GAMMA_B) -> Number:
    """The recursion f_0 = f_1 = 1, f_k = f_{k-1} - gamma_b f_{k-2}."""
    if k < 0:
        raise BoundsError(f"k must be non-negative, got {k}")
    prev, cur = _one(gamma_b), _one(gamma_b)
    for _ in range(k - 1):
        prev, cur = cur, cur - gamma_b * prev
    return cur


def zeta_unweighted(k: int, gamma_b: Number = GAMMA_B) -> Number:
    """Single-run bound (1/2)^k f_k used by the unweighted matching analysis."""
    return HALF**k * f_seq(k, gamma_b)


def alpha_coef(x: int, gamma_a: Number = GAMMA_A) -> Number:
    return (1 - gamma_a) ** max(x - 1, 0) * _one(gamma_a)


def binom_pmf(k: int, x: int, r: Number) -> Number:
    """Binomial probability of ``x`` successes in ``k`` trials with success rate ``r``."""
    if not 0 <= x <= k:
        raise BoundsError(f"need 0 <= x <= k, got x={x}, k={k}")
    return math.comb(k, x) * r**x * (1 - r) ** (k - x)


def eta_pow_bound(k: int, delta1: Number, delta2: Number) -> Number:
    if k < 0:
        raise BoundsError(f"k must be non-negative, got {k}")
    return (
        TWO_THIRDS**k
        * (1 - delta1) ** max(k - 1, 0)
        * (1 - delta2) ** max(k - 2, 0)
        * _one(delta1)
    )


# ---------------------------------------------------------------------------
# symmetric distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetricDistribution:
    """A probability mass function on {0, ..., x} symmetric about x/2."""

    x: int
    mass: tuple

    def __post_init__(self):
        mass = tuple(self.mass)
        object.__setattr__(self, "mass", mass)
        if self.x < 0 or len(mass) != self.x + 1:
            raise BoundsError(f"mass must have x+1={self.x + 1} entries, got {len(mass)}")
        if any(m < -SLACK for m in mass):
            raise BoundsError("mass must be non-negative")
        if abs(sum(mass) - 1) > SLACK:
            raise BoundsError(f"mass sums to {float(sum(mass))!r}, not 1")
        for y in range(self.x // 2 + 1):
            if abs(mass[y] - mass[self.x - y]) > SLACK:
                raise BoundsError(f"mass is not symmetric at y={y}")

    def __getitem__(self, y: int):
        return self.mass[y]

    def __len__(self):
        return len(self.mass)


def d_of_q(x: int, q: Sequence[Number]) -> SymmetricDistribution:
    """Output-count distribution of a two-way selector given edge-count probabilities.

    ``q[i]`` is the probability that exactly ``i`` realized correlation edges
    have both endpoints among the ``x`` consecutive pairs.  Each such edge
    contributes exactly one selection of the element and the remaining
    ``x - 2i`` pairs choose it independently with probability 1/2.
    """
    q = list(q)
    if len(q) != x // 2 + 1:
        raise BoundsError(f"q must have floor(x/2)+1={x // 2 + 1} entries, got {len(q)}")
    if any(qi < -SLACK for qi in q) or abs(sum(q) - 1) > SLACK:
        raise BoundsError("q must be a probability vector")
    zero = q[0] * 0
    mass = [zero] * (x + 1)
    for i, qi in enumerate(q):
        if not qi:
            continue
        free = x - 2 * i
        scale = qi * HALF**free
        for j in range(free + 1):
            mass[i + j] += scale * math.comb(free, j)
    return SymmetricDistribution(x, tuple(mass))


def p_star(x: int, gamma_a: Number = GAMMA_A) -> SymmetricDistribution:
    """The flattest output-count distribution the first selector can produce."""
    if x < 0:
        raise BoundsError(f"x must be non-negative, got {x}")
    a = alpha_coef(x, gamma_a)
    q = [a] + ([1 - a] if x >= 2 else []) + [a * 0] * max(x // 2 - 1, 0)
    return d_of_q(x, q)


def binomial_half(x: int, exact: bool = False) -> SymmetricDistribution:
    one = Fraction(1) if exact else 1.0
    return d_of_q(x, [one] + [one * 0] * (x // 2))


def theta(x: int, p: SymmetricDistribution, gamma_b: Number = GAMMA_B) -> Number:
    """Sum over y of p(y) (1/2)^y (1 - gamma_b)^(y - 1)."""
    _check_support(x, p)
    return sum(p[y] * HALF**y * (1 - gamma_b) ** (y - 1) for y in range(x + 1))


def theta_prime(x: int, p: SymmetricDistribution, gamma_b: Number = GAMMA_B) -> Number:
    """Like :func:`theta` with the exponent clipped at zero."""
    _check_support(x, p)
    return sum(p[y] * HALF**y * (1 - gamma_b) ** max(y - 1, 0) for y in range(x + 1))


def _check_support(x, p):
    if p.x != x:
        raise BoundsError(f"distribution lives on {{0..{p.x}}}, expected {{0..{x}}}")


def centrally_dominates(
    p1: SymmetricDistribution, p2: SymmetricDistribution, slack: float = SLACK
) -> bool:
    """True iff ``p1`` is at least ``p2`` on a central band and at most ``p2`` outside it.

    Candidate bands are ``[x/2 - z, x/2 + z]``; only the set of integers they
    cover matters, so it suffices to try the bands covering the middle
    ``x - 2j + 1`` integers for every ``j`` from 0 (whole support) up to the
    empty band (odd ``x`` with ``z < 1/2``).
    """
    if p1.x != p2.x:
        raise BoundsError("distributions have different supports")
    x = p1.x
    for lo in range(0, x // 2 + 2):
        # integers in the band are lo..x-lo (empty when lo > x - lo)
        ok = True
        for y in range(x + 1):
            inside = lo <= y <= x - lo
            diff = p1[y] - p2[y]
            if inside and diff < -slack or not inside and diff > slack:
                ok = False
                break
        if ok:
            return True
    return False


# ---------------------------------------------------------------------------
# three-way bound
# ---------------------------------------------------------------------------

def eta_sum(k: int, gamma_a: Number = GAMMA_A, gamma_b: Number = GAMMA_B) -> Number:
    """Three-way never-chosen bound on ``k`` consecutive triples, by direct summation."""
    if k < 0:
        raise BoundsError(f"k must be non-negative, got {k}")
    total = 0 * _one(gamma_b)
    for x in range(k + 1):
        ps = p_star(x, gamma_a)
        inner = sum(
            ps[y] * zeta_product(k - x + y, gamma_b) for y in range(x + 1)
        )
        total += binom_pmf(k, x, TWO_THIRDS) * inner
    return total


def theta_closed(x: int, params: "BoundParams") -> Number:
    """Closed form of ``theta(x, p_star(x))``."""
    ga, gb = params.gamma_a, params.gamma_b
    if x == 0:
        return params.c1 + params.c2 - params.c3
    return params.c1 * ((3 - gb) / 4) ** x + params.c2 * ((3 - gb) * (1 - ga) / 4) ** x


def theta_prime_closed(x: int, params: "BoundParams") -> Number:
    if x == 0:
        return _one(params.gamma_b)
    ga, gb = params.gamma_a, params.gamma_b
    return theta_closed(x, params) - gb / ((1 - ga) * (1 - gb)) * ((1 - ga) / 2) ** x


def eta_closed(k: int, params: "BoundParams") -> Number:
    """Four-exponential closed form of :func:`eta_sum`."""
    if k < 0:
        raise BoundsError(f"k must be non-negative, got {k}")
    if k == 0:
        return _one(params.gamma_b)
    return (
        params.c1 * params.t1**k
        + params.c2 * params.t2**k
        - params.c3 * params.t3**k
        - params.c4 * params.t4**k
    )


def derive_deltas(gamma_a: Number = GAMMA_A, gamma_b: Number = GAMMA_B):
    """Solve (2/3)^2 (1-d1) = eta(2) and (2/3)^3 (1-d1)^2 (1-d2) = eta(3) for (d1, d2)."""
    eta2 = eta_sum(2, gamma_a, gamma_b)
    eta3 = eta_sum(3, gamma_a, gamma_b)
    if not 0 < eta2 <= TWO_THIRDS**2 or eta3 <= 0:
        raise BoundsError(f"eta(2)={eta2!r}, eta(3)={eta3!r} give no valid deltas")
    delta1 = 1 - eta2 / TWO_THIRDS**2
    delta2 = 1 - eta3 / (TWO_THIRDS**3 * (1 - delta1) ** 2)
    if delta2 < 0:
        raise BoundsError(f"eta(3)={eta3!r} exceeds (2/3)^3 (1-d1)^2")
    return delta1, delta2


# ---------------------------------------------------------------------------
# parameter bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundParams:
    """All scalar constants feeding the bounds and the factor-revealing LPs.

    ``mode`` records how the bundle was produced.  ``"paper"`` uses the
    published selector qualities (the second selector is then a selector this
    package does not run); ``"consistent"`` uses the 1/16 selector for both
    positions so every bound matches the executable algorithm.
    """

    gamma_a: float = float(GAMMA_A)
    gamma_b: float = GAMMA_B
    delta1: float = 0.0
    delta2: float = 0.0
    sigma_r2: float = 1.3
    sigma_d: float = 2.2
    mode: str = field(default="custom")

    def __post_init__(self):
        for name in ("gamma_a", "gamma_b"):
            g = getattr(self, name)
            if not 0 < g < 1:
                raise BoundsError(f"{name} must lie in (0, 1), got {g}")
        for name in ("delta1", "delta2"):
            d = getattr(self, name)
            if not 0 <= d < 1:
                raise BoundsError(f"{name} must lie in [0, 1), got {d}")
        if not 0 < self.sigma_r2 <= 1.5:
            raise BoundsError(f"sigma_r2 must lie in (0, 3/2], got {self.sigma_r2}")
        cap = 3 * self.sigma_r2 / (3 - self.sigma_r2)
        if not 0 < self.sigma_d <= cap:
            raise BoundsError(f"sigma_d must lie in (0, {cap}], got {self.sigma_d}")

    @classmethod
    def paper(cls, sigma_r2: float = 1.3, sigma_d: float = 2.2) -> "BoundParams":
        d1, d2 = derive_deltas(float(GAMMA_A), GAMMA_B)
        return cls(float(GAMMA_A), GAMMA_B, d1, d2, sigma_r2, sigma_d, mode="paper")

    @classmethod
    def consistent(cls, sigma_r2: float = 1.3, sigma_d: float = 2.2) -> "BoundParams":
        g = float(GAMMA_A)
        d1, d2 = derive_deltas(g, g)
        return cls(g, g, d1, d2, sigma_r2, sigma_d, mode="consistent")

    @classmethod
    def for_mode(cls, mode: str, **kw) -> "BoundParams":
        if mode == "paper":
            return cls.paper(**kw)
        if mode == "consistent":
            return cls.consistent(**kw)
        raise BoundsError(f"unknown mode {mode!r}")

    # closed-form coefficients of the three-way bound
    @cached_property
    def _common(self):
        ga, gb = self.gamma_a, self.gamma_b
        return (1 + gb) ** 2 / ((1 - ga) * (1 - gb) * (3 - gb) ** 2)

    @property
    def c1(self):
        return 8 / (3 - self.gamma_b) ** 2

    @property
    def c2(self):
        return self._common

    @property
    def c3(self):
        return self.gamma_a * self._common

    @property
    def c4(self):
        return self.gamma_b / ((1 - self.gamma_a) * (1 - self.gamma_b))

    @property
    def t1(self):
        return (2 - self.gamma_b) / 3

    @property
    def t2(self):
        ga, gb = self.gamma_a, self.gamma_b
        return (4 - 3 * ga - 2 * gb + ga * gb) / 6

    @property
    def t3(self):
        return (1 - self.gamma_b) / 6

    @property
    def t4(self):
        return (1 - self.gamma_a) / 3

    # bound functions bound to this parameter set
    def zeta(self, k: int) -> float:
        return zeta_product(k, self.gamma_b)

    def zeta_single_run(self, k: int) -> float:
        """Single consecutive-run bound of the second selector.

        The recursive refinement is a property of the published stronger
        selector only; any other quality falls back to the product bound.
        """
        if self.mode == "paper":
            return zeta_unweighted(k, self.gamma_b)
        return zeta_product(k, self.gamma_b)

    def eta(self, k: int) -> float:
        return eta_closed(k, self)

    def eta_pow(self, k: int) -> float:
        return eta_pow_bound(k, self.delta1, self.delta2)

    def as_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "gamma_a": self.gamma_a,
            "gamma_b": self.gamma_b,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "sigma_r2": self.sigma_r2,
            "sigma_d": self.sigma_d,
        }
        for name in ("c1", "c2", "c3", "c4", "t1", "t2", "t3", "t4"):
            out[name] = float(getattr(self, name))
        return out
