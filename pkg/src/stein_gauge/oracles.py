"""Test-function oracles and weighted difference inequalities.

``second_order_gap`` and ``third_order_gap`` return both sides of the
weighted Taylor-remainder inequalities used to control differences of
coupled diffusions, so property tests can assert ``lhs <= rhs`` on
arbitrary instances.  ``estimate_lipschitz_constant`` gives a lower
estimate of M_k(f) from central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError

FD_STEP_LOW = 1e-4
FD_STEP_HIGH = 1e-3


@dataclass(frozen=True)
class SmoothFunctionOracle:
    """A test function h with known derivative Lipschitz bounds.

    ``value`` maps ``(..., d)`` arrays to ``(...)``.  ``gradient`` is
    optional; when missing it is approximated by central differences.
    Bounds default to infinity, meaning "unknown".
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    m1: float = math.inf
    m2: float = math.inf
    m3: float = math.inf
    name: str = "h"

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return fd_gradient(self.value, x, FD_STEP_LOW)


def fd_gradient(f, x: np.ndarray, step: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        out[..., i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def fd_hessian(f, x: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Hessian of a scalar function at a single point."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    hess = np.empty((d, d))
    f0 = float(f(x))
    eye = np.eye(d) * step
    for i in range(d):
        hess[i, i] = (float(f(x + eye[i])) - 2 * f0 + float(f(x - eye[i]))) / step**2
        for j in range(i + 1, d):
            val = (
                float(f(x + eye[i] + eye[j]))
                - float(f(x + eye[i] - eye[j]))
                - float(f(x - eye[i] + eye[j]))
                + float(f(x - eye[i] - eye[j]))
            ) / (4 * step**2)
            hess[i, j] = hess[j, i] = val
    return hess


def _check_weights(lam: float, lam_p: float) -> None:
    if not (lam > 0 and lam_p > 0):
        raise InputError(f"weights must be positive, got {lam}, {lam_p}")


def _n(a) -> float:
    return float(np.linalg.norm(a))


def second_order_gap(h: SmoothFunctionOracle, lam, lam_p, x, y, xp, yp) -> tuple[float, float]:
    """Both sides of the weighted second-order difference bound (needs ``h.m2``)."""
    _check_weights(lam, lam_p)
    x, y, xp, yp = (np.asarray(a, dtype=float) for a in (x, y, xp, yp))
    diff = lam * (h(x) - h(y)) - lam_p * (h(xp) - h(yp))
    lin = float(h.grad(y) @ (lam * (x - y) - lam_p * (xp - yp)))
    lhs = abs(float(diff) - lin)
    rhs = 0.5 * h.m2 * (2 * lam_p * _n(y - yp) * _n(xp - yp) + lam * _n(x - y) ** 2 + lam_p * _n(xp - yp) ** 2)
    return lhs, _finite_or_zero(rhs)


def third_order_gap(h: SmoothFunctionOracle, lam, lam_p, x, y, z, w, xp, yp, zp, wp) -> tuple[float, float]:
    """Both sides of the weighted third-order difference bound (needs ``h.m2``, ``h.m3``)."""
    _check_weights(lam, lam_p)
    x, y, z, w, xp, yp, zp, wp = (np.asarray(a, dtype=float) for a in (x, y, z, w, xp, yp, zp, wp))
    second = lam * (h(x) - h(y) - (h(z) - h(w))) - lam_p * (h(xp) - h(yp) - (h(zp) - h(wp)))
    lin = float(h.grad(z) @ (lam * (x - y - (z - w)) - lam_p * (xp - yp - (zp - wp))))
    lhs = abs(float(second) - lin)

    m2_group = (
        _n(yp - xp) * _n(lam * (z - x) - lam_p * (zp - xp))
        + lam_p * _n(z - zp) * _n(xp - yp - (zp - wp))
        + lam * _n(z - x) * _n((y - x) - (yp - xp))
        + 0.5 * (lam * _n(x - y - (z - w)) * _n(x - y + z - w) + lam_p * _n(xp - yp - (zp - wp)) * _n(xp - yp + zp - wp))
    )
    m3_group = (
        0.5 * _n(yp - xp) * (2 * lam_p * _n(x - xp) * _n(zp - xp) + lam * _n(z - x) ** 2 + lam_p * _n(zp - xp) ** 2)
        + 0.5 * (lam * _n(z - x) * _n(y - x) ** 2 + lam_p * _n(zp - xp) * _n(yp - xp) ** 2)
        + (lam * _n(w - z) ** 3 + lam * _n(y - x) ** 3 + lam_p * _n(wp - zp) ** 3 + lam_p * _n(yp - xp) ** 3) / 6
    )
    rhs = _scaled(h.m2, m2_group) + _scaled(h.m3, m3_group)
    return lhs, rhs


def _scaled(bound: float, group: float) -> float:
    # an unknown (infinite) bound multiplying a vanishing group contributes nothing
    return 0.0 if group == 0.0 else bound * group


def _finite_or_zero(v: float) -> float:
    return 0.0 if math.isnan(v) else v


def estimate_lipschitz_constant(f, order: int, pairs) -> float:
    """Lower estimate of M_order(f) from probe pairs ``[(x, y), ...]``.

    ``f`` is scalar-valued on R^d (1-d inputs may be plain floats).  Order
    1 uses function values, order 2 central-difference gradients (step
    1e-4) and order 3 central-difference Hessians (step 1e-3) compared in
    operator norm.
    """
    if order not in (1, 2, 3):
        raise InputError(f"order must be 1, 2 or 3, got {order}")

    def scalar(p):
        return float(np.asarray(f(p), dtype=float).reshape(()))

    best = 0.0
    for x, y in pairs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        dist = _n(x - y)
        if dist == 0.0:
            continue
        if order == 1:
            gap = abs(scalar(x) - scalar(y))
        elif order == 2:
            gap = _n(fd_gradient(lambda p: np.array(scalar(p)), x, FD_STEP_LOW) - fd_gradient(lambda p: np.array(scalar(p)), y, FD_STEP_LOW))
        else:
            gap = float(np.linalg.norm(fd_hessian(scalar, x, FD_STEP_HIGH) - fd_hessian(scalar, y, FD_STEP_HIGH), 2))
        best = max(best, gap / dist)
    return best


# ---------------------------------------------------------------------------
# random cubic polynomials with closed-form derivative bounds


@dataclass(frozen=True)
class CubicPolynomial:
    """h(x) = c + <b, x> + x^T A x / 2 + T[x, x, x] / 6 with symmetric A and T.

    A cubic has unbounded Hessian, so ``m2`` is the bound valid on the ball
    of radius ``radius`` (every Taylor segment used by the gap inequalities
    stays in the convex hull of the points, hence in that ball).
    """

    c: float
    b: np.ndarray
    a: np.ndarray
    t: np.ndarray
    radius: float

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (
            self.c
            + x @ self.b
            + 0.5 * np.einsum("...i,ij,...j->...", x, self.a, x)
            + np.einsum("ijk,...i,...j,...k->...", self.t, x, x, x) / 6.0
        )

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.b + x @ self.a + 0.5 * np.einsum("ijk,...j,...k->...i", self.t, x, x)

    @property
    def m3(self) -> float:
        # Frobenius norm dominates the tensor operator norm
        return float(np.sqrt(np.sum(self.t**2)))

    @property
    def m2(self) -> float:
        return float(np.linalg.norm(self.a, 2)) + self.radius * self.m3

    def oracle(self) -> SmoothFunctionOracle:
        return SmoothFunctionOracle(self.value, self.gradient, m2=self.m2, m3=self.m3, name="cubic")


def _symmetrize3(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(t, p) for p in perms) / 6.0


def random_cubic(dim: int, rng: np.random.Generator, radius: float, degree: int = 3) -> CubicPolynomial:
    a = rng.standard_normal((dim, dim))
    t = _symmetrize3(rng.standard_normal((dim, dim, dim))) if degree >= 3 else np.zeros((dim, dim, dim))
    if degree < 2:
        a = np.zeros((dim, dim))
    return CubicPolynomial(
        c=float(rng.standard_normal()),
        b=rng.standard_normal(dim),
        a=0.5 * (a + a.T),
        t=t,
        radius=radius,
    )


@dataclass
class GapSuiteReport:
    instances: int
    second_violations: int
    third_violations: int
    worst_second_ratio: float
    worst_third_ratio: float
    equality_instances: int
    equality_max_deviation: float

    @property
    def passed(self) -> bool:
        return self.second_violations == 0 and self.third_violations == 0

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    # same absolute round-off allowance as the violation count
    return 0.0 if lhs <= 1e-12 else math.inf


def quadratic_equality_instance(dim: int, rng: np.random.Generator):
    """A pure quadratic and points for which the second-order bound is tight.

    The Hessian has eigenvalues +-m; x - y follows the +m eigenvector and
    x' - y the -m one, with y' = y.  In one dimension x' = y' = y.
    """
    m = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.ones(dim)
    signs[1::2] = -1.0
    a = (q * (m * signs)) @ q.T
    poly = CubicPolynomial(c=float(rng.standard_normal()), b=rng.standard_normal(dim), a=a, t=np.zeros((dim,) * 3), radius=0.0)
    oracle = SmoothFunctionOracle(poly.value, poly.gradient, m2=m, m3=0.0, name="quadratic")
    y = 2.0 * rng.standard_normal(dim)
    x = y + rng.uniform(0.1, 3.0) * q[:, 0]
    xp = y + rng.uniform(0.1, 3.0) * q[:, 1] if dim > 1 else y.copy()
    lam, lam_p = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=2))
    return oracle, float(lam), float(lam_p), x, y, xp, y.copy()


def verify_gap_inequalities(instances: int = 1000, seed: int = 0, equality_instances: int = 100, rtol: float = 1e-9) -> GapSuiteReport:
    """Random-instance sweep of both gap inequalities.

    Points are N(0, 4I), weights log-uniform on [0.1, 10], dimension in
    {1, 2, 3}, polynomials of degree <= 3.  A violation is lhs > rhs with
    relative slack ``rtol`` for floating-point rounding.
    """
    rng = np.random.default_rng(seed)
    sec_viol = third_viol = 0
    worst2 = worst3 = 0.0
    for _ in range(instances):
        dim = int(rng.integers(1, 4))
        pts = 2.0 * rng.standard_normal((8, dim))
        radius = float(np.max(np.linalg.norm(pts, axis=1)))
        poly = random_cubic(dim, rng, radius, degree=int(rng.integers(1, 4)))
        h = poly.oracle()
        lam, lam_p = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=2))
        lhs2, rhs2 = second_order_gap(h, lam, lam_p, pts[0], pts[1], pts[4], pts[5])
        lhs3, rhs3 = third_order_gap(h, lam, lam_p, *pts)
        worst2 = max(worst2, _ratio(lhs2, rhs2))
        worst3 = max(worst3, _ratio(lhs3, rhs3))
        sec_viol += lhs2 > rhs2 * (1 + rtol) + 1e-12
        third_viol += lhs3 > rhs3 * (1 + rtol) + 1e-12
    dev = 0.0
    for _ in range(equality_instances):
        oracle, lam, lam_p, x, y, xp, yp = quadratic_equality_instance(int(rng.integers(1, 4)), rng)
        lhs, rhs = second_order_gap(oracle, lam, lam_p, x, y, xp, yp)
        dev = max(dev, abs(lhs / rhs - 1.0))
    return GapSuiteReport(
        instances=instances,
        second_violations=int(sec_viol),
        third_violations=int(third_viol),
        worst_second_ratio=worst2,
        worst_third_ratio=worst3,
        equality_instances=equality_instances,
        equality_max_deviation=dev,
    )
