"""Stein factors for strongly log-concave targets.

Given a k-strongly log-concave density with M3(log p) <= l3 and
M4(log p) <= l4, the Stein solution u_h obeys

    M1(u_h) <= (2/k) M1(h)
    M2(u_h) <= (2 l3/k^2) M1(h) + (1/k) M2(h)
    M3(u_h) <= (6 l3^2/k^3 + l4/k^2) M1(h) + (3 l3/k^2) M2(h) + (2/(3k)) M3(h)

``classical_factors`` is the same triple evaluated at h with
M1 = M2 = M3 = 1, which scales the Stein set used by the discrepancy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InputError

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class SmoothnessBudget:
    k: float
    l3: float = 0.0
    l4: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise InputError(f"strong concavity k must be positive, got {self.k}")
        if not (math.isfinite(self.l3) and self.l3 >= 0 and math.isfinite(self.l4) and self.l4 >= 0):
            raise InputError(f"l3, l4 must be nonnegative, got {self.l3}, {self.l4}")


@dataclass(frozen=True)
class TestFunctionBudget:
    """Bounds on M1(h), M2(h), M3(h) for a test function h."""

    __test__ = False  # not a pytest class

    m1: float = 1.0
    m2: float = 1.0
    m3: float = 1.0

    def __post_init__(self):
        if min(self.m1, self.m2, self.m3) < 0:
            raise InputError("test-function bounds must be nonnegative")


@dataclass(frozen=True)
class SteinFactors:
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3) < 0:
            raise InputError("Stein factors must be nonnegative")

    def scaled(self, inflation: float) -> SteinFactors:
        return SteinFactors(self.c1 * inflation, self.c2 * inflation, self.c3 * inflation)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c1, self.c2, self.c3)

    def to_dict(self) -> dict:
        return asdict(self)


def solution_factor_bounds(budget: SmoothnessBudget, h: TestFunctionBudget) -> tuple[float, float, float]:
    """Bounds on (M1(u_h), M2(u_h), M3(u_h))."""
    k, l3, l4 = budget.k, budget.l3, budget.l4
    b1 = 2.0 / k * h.m1
    b2 = 2.0 * l3 / k**2 * h.m1 + h.m2 / k
    b3 = (6.0 * l3**2 / k**3 + l4 / k**2) * h.m1 + 3.0 * l3 / k**2 * h.m2 + 2.0 / (3.0 * k) * h.m3
    return b1, b2, b3


def classical_factors(budget: SmoothnessBudget) -> SteinFactors:
    k, l3, l4 = budget.k, budget.l3, budget.l4
    return SteinFactors(
        c1=2.0 / k,
        c2=2.0 * l3 / k**2 + 1.0 / k,
        c3=6.0 * l3**2 / k**3 + (l4 + 3.0 * l3) / k**2 + 2.0 / (3.0 * k),
    )


def logistic_factors(target) -> SteinFactors:
    """Closed-form factors for a logistic regression posterior.

    Written directly in terms of sigma2 and the covariate norm sums, so it
    doubles as a check on ``classical_factors(target.smoothness_constants())``.
    """
    s2 = target.sigma2
    if not (math.isfinite(s2) and s2 > 0):
        raise InputError(f"prior variance must be positive, got {s2}")
    cube, quart = target.norm_sums
    return SteinFactors(
        c1=2.0 * s2,
        c2=s2**2 * cube / (3.0 * SQRT3) + s2,
        c3=s2**3 * cube**2 / 18.0 + s2**2 * quart / 8.0 + s2**2 * cube / (2.0 * SQRT3) + 2.0 * s2 / 3.0,
    )


def factors_report(budget: SmoothnessBudget, factors: SteinFactors) -> dict:
    return {"c1": factors.c1, "c2": factors.c2, "c3": factors.c3, "k": budget.k, "l3": budget.l3, "l4": budget.l4}
