"""Strongly log-concave target distributions.

A target is touched only through its log-density gradient, its Hessian
action and three smoothness constants; normalizing constants never appear.
Two concrete models are provided: a multivariate Gaussian and the
Bayesian logistic regression posterior under an isotropic Gaussian prior.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .errors import InputError, NumericError
from .factors import SmoothnessBudget

SQRT3 = math.sqrt(3.0)


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise InputError(f"expected points with trailing dimension {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite point passed to target")
    return x


class Target:
    """Base class: subclasses implement ``_grad``, ``_hess_action`` and ``_log_density``.

    All three operate on arrays of shape ``(..., d)`` without validation; the
    public methods validate and then delegate.  Simulation code calls the
    underscored versions directly in its inner loop.
    """

    dim: int

    @property
    def k(self) -> float:
        raise NotImplementedError

    @property
    def l3(self) -> float:
        raise NotImplementedError

    @property
    def l4(self) -> float:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _hess_action(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_log_p(self, x) -> np.ndarray:
        g = self._grad(_as_points(x, self.dim))
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient of log-density")
        return g

    def hess_log_p_action(self, x, v) -> np.ndarray:
        """Hessian-vector product ``Hess log p(x) @ v``."""
        return self._hess_action(_as_points(x, self.dim), _as_points(v, self.dim))

    def log_density(self, x) -> np.ndarray:
        """Unnormalized log-density."""
        return self._log_density(_as_points(x, self.dim))

    def smoothness_constants(self) -> SmoothnessBudget:
        return SmoothnessBudget(self.k, self.l3, self.l4)

    def mode_guess(self) -> np.ndarray:
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class GaussianTarget(Target):
    """N(mean, precision^{-1}); third and fourth log-derivatives vanish."""

    mean: np.ndarray
    precision: np.ndarray
    _k: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        prec = np.atleast_2d(np.array(self.precision, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or prec.shape != (d, d):
            raise InputError(f"mean shape {mean.shape} incompatible with precision shape {prec.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(prec))):
            raise InputError("Gaussian parameters must be finite")
        if not np.allclose(prec, prec.T, rtol=0, atol=1e-12 * max(1.0, np.abs(prec).max())):
            raise InputError("precision matrix must be symmetric")
        prec = 0.5 * (prec + prec.T)
        kmin = float(np.linalg.eigvalsh(prec)[0])
        if kmin <= 0:
            raise InputError("precision matrix must be positive definite")
        mean.setflags(write=False)
        prec.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", prec)
        object.__setattr__(self, "_k", kmin)

    @classmethod
    def isotropic(cls, dim: int = 1, k: float = 1.0, mean=None) -> GaussianTarget:
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean=mean, precision=k * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> float:
        return self._k

    @property
    def l3(self) -> float:
        return 0.0

    @property
    def l4(self) -> float:
        return 0.0

    def _grad(self, x):
        return -(x - self.mean) @ self.precision

    def _hess_action(self, x, v):
        return -(v @ self.precision)

    def _log_density(self, x):
        r = x - self.mean
        return -0.5 * np.einsum("...i,ij,...j->...", r, self.precision, r)

    def mode_guess(self):
        return self.mean.copy()

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.precision)
        z = rng.standard_normal((n, self.dim))
        # precision = C C^T  =>  x = mean + C^{-T} z
        return self.mean + np.linalg.solve(chol.T, z.T).T


@dataclass(frozen=True, eq=False)
class LogisticTarget(Target):
    """Bayesian logistic regression posterior with an N(0, sigma2 I) prior.

    ``covariates`` has shape ``(L, d)`` and ``labels`` holds ``L`` values in
    {0, 1}.  A target with zero datapoints is the bare Gaussian prior, in
    which case ``dim_hint`` must be given.
    """

    sigma2: float
    covariates: np.ndarray
    labels: np.ndarray
    dim_hint: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InputError(f"prior variance must be positive, got {self.sigma2}")
        v = np.array(self.covariates, dtype=float)
        if v.size == 0:
            if self.dim_hint is None:
                raise InputError("dim_hint is required when there are no datapoints")
            v = np.zeros((0, int(self.dim_hint)))
        if v.ndim == 1:
            v = v[None, :]
        y = np.array(self.labels, dtype=float).reshape(-1)
        if v.ndim != 2 or y.shape[0] != v.shape[0]:
            raise InputError(f"covariates {v.shape} and labels {y.shape} disagree")
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise InputError("labels must be 0 or 1")
        if not np.all(np.isfinite(v)):
            raise InputError("covariates must be finite")
        if self.dim_hint is not None and v.shape[1] != self.dim_hint:
            raise InputError("dim_hint disagrees with covariate dimension")
        v.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "covariates", v)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_csv(cls, path, sigma2: float, header: bool = False) -> LogisticTarget:
        """Load rows ``v_1, ..., v_d, y`` from a CSV file."""
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            if header:
                next(reader, None)
            for lineno, row in enumerate(reader, start=2 if header else 1):
                row = [c.strip() for c in row if c.strip() != ""]
                if not row:
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise InputError(f"{path}: no datapoints")
        widths = {len(r) for r in rows}
        if len(widths) != 1 or widths.pop() < 2:
            raise InputError(f"{path}: ragged rows or missing label column")
        data = np.array(rows)
        return cls(sigma2=sigma2, covariates=data[:, :-1], labels=data[:, -1])

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_data(self) -> int:
        return self.covariates.shape[0]

    @property
    def norm_sums(self) -> tuple[float, float]:
        """(sum ||v_l||^3, sum ||v_l||^4)."""
        norms = np.linalg.norm(self.covariates, axis=1)
        return float(np.sum(norms**3)), float(np.sum(norms**4))

    @property
    def k(self) -> float:
        return 1.0 / self.sigma2

    @property
    def l3(self) -> float:
        return self.norm_sums[0] / (6.0 * SQRT3)

    @property
    def l4(self) -> float:
        return self.norm_sums[1] / 8.0

    def _grad(self, beta):
        # expit is evaluated in overflow-safe branches for large |<beta, v>|
        s = expit(beta @ self.covariates.T)
        return -beta / self.sigma2 + (self.labels - s) @ self.covariates

    def _hess_action(self, beta, v):
        s = expit(beta @ self.covariates.T)
        w = s * (1.0 - s) * (v @ self.covariates.T)
        return -v / self.sigma2 - w @ self.covariates

    def _log_density(self, beta):
        eta = beta @ self.covariates.T
        # log(e^{y eta} / (1 + e^eta)) = y eta + log_expit(-eta)
        loglik = np.sum(self.labels * eta + log_expit(-eta), axis=-1)
        return -0.5 * np.sum(beta**2, axis=-1) / self.sigma2 + loglik


def grad_log_p(target: Target, x) -> np.ndarray:
    return target.grad_log_p(x)


def smoothness_constants(target: Target) -> SmoothnessBudget:
    return target.smoothness_constants()


def third_derivative_kernel(s):
    """Scalar factor of the logistic third log-density derivative, s(1-s)(1-2s)."""
    s = np.asarray(s, dtype=float)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def fourth_derivative_kernel(s):
    """Scalar factor of the logistic fourth log-density derivative, s(1-s)(1-6s+6s^2)."""
    s = np.asarray(s, dtype=float)
    return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)


@dataclass
class KernelBoundReport:
    third_max: float
    fourth_max: float
    third_argmax: float
    fourth_argmax: float
    third_bound: float = 1.0 / (6.0 * SQRT3)
    fourth_bound: float = 0.125
    tol: float = 1e-6

    @property
    def third_ok(self) -> bool:
        return abs(self.third_max - self.third_bound) <= self.tol

    @property
    def fourth_ok(self) -> bool:
        return abs(self.fourth_max - self.fourth_bound) <= self.tol

    @property
    def passed(self) -> bool:
        return self.third_ok and self.fourth_ok


def default_logit_grid() -> np.ndarray:
    return np.linspace(-20.0, 20.0, 40001)


def verify_derivative_bounds(target: LogisticTarget | None = None, grid=None, tol: float = 1e-6) -> KernelBoundReport:
    """Grid-search the logistic derivative kernels over ``s = sigmoid(grid)``.

    The kernels do not depend on the data; ``target`` is accepted so the
    call reads naturally next to the model it certifies.
    """
    grid = default_logit_grid() if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    s = expit(grid)
    k3 = np.abs(third_derivative_kernel(s))
    k4 = np.abs(fourth_derivative_kernel(s))
    i3, i4 = int(np.argmax(k3)), int(np.argmax(k4))
    return KernelBoundReport(
        third_max=float(k3[i3]),
        fourth_max=float(k4[i4]),
        third_argmax=float(grid[i3]),
        fourth_argmax=float(grid[i4]),
        tol=tol,
    )


def operator_norm_sym(matvec, dim: int, rng: np.random.Generator, iters: int = 100) -> float:
    """Largest |eigenvalue| of a symmetric operator given only its action."""
    if dim == 1:
        return float(abs(matvec(np.ones(1))[0]))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam = nw
        v = w / nw
    return float(lam)


def max_curvature_ratio(target: Target, n: int, rng: np.random.Generator, scale: float = 3.0) -> float:
    """max over random (x, v) of v^T H(x) v / ||v||^2; should not exceed -k."""
    worst = -np.inf
    for _ in range(n):
        x = scale * rng.standard_normal(target.dim)
        v = rng.standard_normal(target.dim)
        q = float(v @ target.hess_log_p_action(x, v)) / float(v @ v)
        worst = max(worst, q)
    return worst


def hessian_lipschitz_ratio(target: Target, n: int, rng: np.random.Generator, scale: float = 3.0) -> float:
    """max over random pairs of ||H(x) - H(y)||_op / ||x - y||, by power iteration."""
    worst = 0.0
    for _ in range(n):
        x = scale * rng.standard_normal(target.dim)
        y = scale * rng.standard_normal(target.dim)
        op = operator_norm_sym(
            lambda v: target.hess_log_p_action(x, v) - target.hess_log_p_action(y, v), target.dim, rng
        )
        worst = max(worst, op / float(np.linalg.norm(x - y)))
    return worst
