"""Conversions between the smooth function distance and classical metrics.

If d_s bounds the smooth function distance between two measures on R^d,
their L1-Wasserstein distance obeys

    W1 <= 3 max(d_s, (d_s sqrt(2) E[||G||]^2)^{1/3}),   G ~ N(0, I_d),

while d_s and the bounded-Lipschitz distance never exceed W1.  The proof
runs through Gaussian smoothing h_t(x) = E h(x + tG) of a 1-Lipschitz h,
whose derivatives obey M1 <= 1, M2 <= sqrt(2/pi)/t and M3 <= sqrt(2)/t^2;
``verify_smoothing_derivative_bounds`` checks those numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_hermitenorm

from .errors import InputError, NumericError

SQRT2 = math.sqrt(2.0)
DEFAULT_NODES = 160
MC_SAMPLES = 200_000


def expected_gaussian_norm(d: int) -> float:
    """E||G||_2 for a standard normal vector in R^d, via log-gamma."""
    if int(d) != d or d < 1:
        raise InputError(f"dimension must be a positive integer, got {d}")
    return SQRT2 * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))


def wasserstein_upper(d_smooth: float, d: int) -> float:
    if not d_smooth >= 0:
        raise InputError(f"smooth distance must be nonnegative, got {d_smooth}")
    eg = expected_gaussian_norm(d)
    return 3.0 * max(d_smooth, (d_smooth * SQRT2 * eg**2) ** (1.0 / 3.0))


def branch_crossover(d: int) -> float:
    """The d_s at which both branches of ``wasserstein_upper`` coincide."""
    return math.sqrt(SQRT2 * expected_gaussian_norm(d) ** 2)


def bounded_lipschitz_upper(w1_upper: float) -> float:
    # bounded-Lipschitz test functions have |h| <= 1, so the metric never exceeds 2
    return min(w1_upper, 2.0)


@dataclass
class OrderingReport:
    d_smooth: float
    d_bl: float
    w1: float
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def lower_bounds(d_smooth: float, d_bl: float, w1: float, tol: float = 0.0) -> OrderingReport:
    """Check max(d_bl, d_smooth) <= w1 for metrics of one pair of measures."""
    rep = OrderingReport(d_smooth, d_bl, w1)
    for name, val in (("d_smooth", d_smooth), ("d_bl", d_bl), ("w1", w1)):
        if val < 0:
            rep.violations.append(f"{name} is negative")
    if d_smooth > w1 + tol:
        rep.violations.append(f"d_smooth={d_smooth} exceeds w1={w1}")
    if d_bl > w1 + tol:
        rep.violations.append(f"d_bl={d_bl} exceeds w1={w1}")
    return rep


def wasserstein_1d_exact(a, b) -> float:
    """W1 between two equal-size, equal-weight samples on the line."""
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))
    if a.shape != b.shape:
        raise InputError(f"sample sizes differ ({a.size} vs {b.size}); resample to equal counts first")
    if a.size == 0:
        raise InputError("empty samples")
    return float(np.mean(np.abs(a - b)))


# ---------------------------------------------------------------------------
# Gaussian smoothing


@dataclass(frozen=True)
class SmoothedValue:
    value: float
    stderr: float


@dataclass(frozen=True, eq=False)
class _Rule:
    nodes: np.ndarray  # (N, d) standard-normal nodes
    weights: np.ndarray  # (N,) summing to 1
    exact: bool  # quadrature (True) or Monte Carlo


def gauss_hermite_rule(d: int, n: int = DEFAULT_NODES) -> _Rule:
    # scipy switches to an asymptotic method for large n, where Golub-Welsch overflows
    x, w = roots_hermitenorm(n)
    w = w / math.sqrt(2 * math.pi)
    if d == 1:
        return _Rule(x[:, None], w, True)
    if d == 2:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        ww = np.outer(w, w).ravel()
        keep = ww > 1e-300
        return _Rule(np.stack([xx.ravel(), yy.ravel()], 1)[keep], ww[keep], True)
    raise InputError("tensor Gauss-Hermite is only used for d <= 2")


def monte_carlo_rule(d: int, n: int = MC_SAMPLES, seed: int = 0) -> _Rule:
    rng = np.random.default_rng(seed)
    return _Rule(rng.standard_normal((n, d)), np.full(n, 1.0 / n), False)


def default_rule(d: int, nodes: int | None = None, seed: int = 0) -> _Rule:
    if d <= 2:
        return gauss_hermite_rule(d, nodes or DEFAULT_NODES)
    return monte_carlo_rule(d, nodes or MC_SAMPLES, seed)


class SmoothedFunction:
    """h_t(x) = E h(x + tG) evaluated with nodes anchored at a fixed point.

    The nodes sit at ``anchor + t * g_i``.  Evaluating at another x
    reweights them by the Gaussian likelihood ratio
    exp(<g_i, x - anchor>/t - ||x - anchor||^2 / (2 t^2)), so the estimate is
    an analytic function of x even when h has kinks, and finite differences
    near the anchor stay accurate.
    """

    def __init__(self, h, t: float, anchor, rule: _Rule):
        if not t > 0:
            raise InputError(f"smoothing scale must be positive, got {t}")
        self.t = float(t)
        self.anchor = np.atleast_1d(np.asarray(anchor, dtype=float))
        self.rule = rule
        vals = np.asarray(h(self.anchor + self.t * rule.nodes), dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise NumericError("test function returned non-finite values")
        self.values = vals

    def _weights(self, x: np.ndarray) -> np.ndarray:
        s = (x - self.anchor) / self.t
        return self.rule.weights * np.exp(self.rule.nodes @ s - 0.5 * s @ s)

    def __call__(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self._weights(x) @ self.values)

    def stderr(self, x) -> float:
        if self.rule.exact:
            return 0.0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.values.size
        terms = n * self._weights(x) * self.values
        return float(np.std(terms, ddof=1) / math.sqrt(n))


def smoothed_function(h, t: float, x, nodes: int | None = None, seed: int = 0) -> SmoothedValue:
    """E h(x + tG): Gauss-Hermite for d <= 2, Monte Carlo with a standard error otherwise."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sf = SmoothedFunction(h, t, x, default_rule(x.shape[0], nodes, seed))
    return SmoothedValue(sf(x), sf.stderr(x))


def fd_step(t: float) -> float:
    return max(1e-4, t * 1e-3)


def _derivatives(f, x: np.ndarray, eps: float):
    """Central-difference gradient, Hessian and third-derivative tensor of f at x."""
    d = x.shape[0]
    eye = np.eye(d) * eps

    def hess_at(p):
        hm = np.empty((d, d))
        f0 = f(p)
        for i in range(d):
            hm[i, i] = (f(p + eye[i]) - 2 * f0 + f(p - eye[i])) / eps**2
            for j in range(i + 1, d):
                hm[i, j] = hm[j, i] = (
                    f(p + eye[i] + eye[j]) - f(p + eye[i] - eye[j]) - f(p - eye[i] + eye[j]) + f(p - eye[i] - eye[j])
                ) / (4 * eps**2)
        return hm

    grad = np.array([(f(x + eye[i]) - f(x - eye[i])) / (2 * eps) for i in range(d)])
    hess = hess_at(x)
    if d == 1:
        third = np.array(
            [[[(f(x + 2 * eye[0]) - 2 * f(x + eye[0]) + 2 * f(x - eye[0]) - f(x - 2 * eye[0])) / (2 * eps**3)]]]
        )
    else:
        third = np.stack([(hess_at(x + eye[k]) - hess_at(x - eye[k])) / (2 * eps) for k in range(d)], axis=2)
        third = sum(np.transpose(third, p) for p in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]) / 3.0
    return grad, hess, third


def tensor_operator_norm(t3: np.ndarray, directions: int = 720, seed: int = 0) -> float:
    """sup over unit v of ||T[v]||_op, maximized over a set of directions."""
    d = t3.shape[0]
    if d == 1:
        return float(abs(t3[0, 0, 0]))
    if d == 2:
        ang = np.linspace(0, np.pi, directions, endpoint=False)
        vs = np.stack([np.cos(ang), np.sin(ang)], 1)
    else:
        vs = np.random.default_rng(seed).standard_normal((directions * d, d))
        vs /= np.linalg.norm(vs, axis=1, keepdims=True)
    mats = np.einsum("ijk,nk->nij", t3, vs)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (mats + np.transpose(mats, (0, 2, 1)))))))


@dataclass
class SmoothingReport:
    t: float
    m1: float
    m2: float
    m3: float
    tol: float
    probes: int

    @property
    def bounds(self) -> tuple[float, float, float]:
        return 1.0, math.sqrt(2 / math.pi) / self.t, SQRT2 / self.t**2

    @property
    def ratios(self) -> tuple[float, float, float]:
        b = self.bounds
        return self.m1 / b[0], self.m2 / b[1], self.m3 / b[2]

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 + self.tol for r in self.ratios)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "estimates": [self.m1, self.m2, self.m3],
            "bounds": list(self.bounds),
            "ratios": list(self.ratios),
            "tol": self.tol,
            "probes": self.probes,
            "passed": self.passed,
        }


def verify_smoothing_derivative_bounds(h, t: float, probes, tol: float = 0.02, nodes: int | None = None, seed: int = 0) -> SmoothingReport:
    """Finite-difference estimates of M1, M2, M3 of h_t, maximized over probes.

    ``h`` must be 1-Lipschitz.  Each probe anchors its own quadrature so the
    differences are taken of a smooth function.  ``tol`` is the relative
    allowance for quadrature and differencing error.
    """
    probes = np.asarray(probes, dtype=float)
    if probes.ndim == 1:
        probes = probes[:, None]
    d = probes.shape[1]
    rule = default_rule(d, nodes, seed)
    eps = fd_step(t)
    m1 = m2 = m3 = 0.0
    for p in probes:
        sf = SmoothedFunction(h, t, p, rule)
        grad, hess, third = _derivatives(sf, p, eps)
        m1 = max(m1, float(np.linalg.norm(grad)))
        m2 = max(m2, float(np.max(np.abs(np.linalg.eigvalsh(hess)))))
        m3 = max(m3, tensor_operator_norm(third))
    return SmoothingReport(t=t, m1=m1, m2=m2, m3=m3, tol=tol, probes=len(probes))


# ---------------------------------------------------------------------------
# certification report


@dataclass
class MetricReport:
    d_smooth_upper: float
    w1_upper: float
    bl_upper: float
    dim: int
    e_norm_g: float
    discrepancy: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "d_smooth_upper": self.d_smooth_upper,
            "w1_upper": self.w1_upper,
            "bl_upper": self.bl_upper,
            "dim": self.dim,
            "e_norm_g": self.e_norm_g,
            "discrepancy": self.discrepancy,
        }


def metric_report(d_smooth_upper: float, dim: int, discrepancy: dict | None = None) -> MetricReport:
    w1 = wasserstein_upper(d_smooth_upper, dim)
    return MetricReport(
        d_smooth_upper=d_smooth_upper,
        w1_upper=w1,
        bl_upper=bounded_lipschitz_upper(w1),
        dim=dim,
        e_norm_g=expected_gaussian_norm(dim),
        discrepancy=discrepancy or {},
    )


def certify(target, q, graph: str | None = None, inflation: float = 1.0, backend: str = "auto") -> MetricReport:
    """Graph Stein discrepancy of ``q`` lifted to Wasserstein and bounded-Lipschitz bounds."""
    from .discrepancy import discrepancy_report

    res = discrepancy_report(target, q, graph, inflation=inflation, backend=backend)
    if res.status != "optimal":
        raise NumericError(f"discrepancy program failed: {res.status}")
    return metric_report(res.value, q.dim, res.to_dict())
