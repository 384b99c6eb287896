"""Linear programming backends.

``dense_simplex`` is a self-contained two-phase tableau simplex for small
problems.  Entering columns follow Dantzig's rule until a run of
degenerate pivots is seen, after which Bland's rule takes over so the
method cannot cycle.  ``solve_lp`` puts a bounded-variable front end on it
and can hand larger programs to HiGHS through SciPy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InputError

log = logging.getLogger(__name__)

TOL = 1e-9
FEASIBILITY_TOL = 1e-7
MAX_BASIS_CONDITION = 1e12
REINVERSIONS = 5
AUTO_DENSE_LIMIT = 200_000  # tableau cells; degenerate discrepancy programs stall beyond this

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERIC_FAILURE = "numeric-failure"


@dataclass
class LPResult:
    status: str
    value: float
    x: np.ndarray | None
    iterations: int = 0
    backend: str = "simplex"

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, table: np.ndarray, basis: np.ndarray, tol: float, max_iter: int, bland_after: int):
        self.t = table
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.bland_after = bland_after
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        t = self.t
        t[row] /= t[row, col]
        colv = t[:, col].copy()
        colv[row] = 0.0
        nz = np.nonzero(colv)[0]
        if nz.size:
            t[nz] -= np.outer(colv[nz], t[row])
        self.basis[row] = col

    def run(self, ncols: int) -> str:
        """Maximize; the last row holds reduced costs (negative = improving)."""
        t, tol = self.t, self.tol
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration-limit"
            obj = t[-1, :ncols]
            if degenerate >= self.bland_after:
                cand = np.nonzero(obj < -tol)[0]
                if cand.size == 0:
                    return OPTIMAL
                col = int(cand[0])
            else:
                col = int(np.argmin(obj))
                if obj[col] >= -tol:
                    return OPTIMAL
            column = t[:-1, col]
            pos = column > tol
            if not np.any(pos):
                return UNBOUNDED
            rhs = t[:-1, -1]
            ratios = np.full(column.shape, np.inf)
            ratios[pos] = rhs[pos] / column[pos]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + tol * max(1.0, abs(best)))[0]
            if degenerate >= self.bland_after:
                row = int(ties[np.argmin(self.basis[ties])])
            else:
                # the largest pivot element keeps the update well conditioned
                row = int(ties[np.argmax(column[ties])])
            degenerate = degenerate + 1 if best <= tol else 0
            self.pivot(row, col)
            self.iterations += 1


def dense_simplex(c, a_ub, b_ub, tol: float = TOL, max_iter: int = 50_000, bland_after: int = 50) -> LPResult:
    """maximize c @ x subject to a_ub @ x <= b_ub, x >= 0."""
    c = np.asarray(c, dtype=float)
    a = np.atleast_2d(np.asarray(a_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float)
    m, n = a.shape
    if c.shape != (n,) or b.shape != (m,):
        raise InputError("inconsistent LP dimensions")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        return LPResult(NUMERIC_FAILURE, float("nan"), None)

    neg = b < 0
    n_art = int(neg.sum())
    # columns: x (n) | slacks (m) | artificials (n_art) | rhs
    table = np.zeros((m + 1, n + m + n_art + 1))
    table[:m, :n] = a
    table[:m, n : n + m] = np.eye(m)
    table[:m, -1] = b
    table[:m][neg] *= -1.0
    basis = np.arange(n, n + m)
    art_rows = np.nonzero(neg)[0]
    for j, r in enumerate(art_rows):
        table[r, n + m + j] = 1.0
        basis[r] = n + m + j

    tab = _Tableau(table, basis, tol, max_iter, bland_after)
    if n_art:
        # phase 1: maximize -sum(artificials)
        table[-1, n + m : n + m + n_art] = 1.0
        table[-1] -= table[art_rows].sum(axis=0)
        status = tab.run(n + m + n_art)
        if status != OPTIMAL:
            return LPResult(NUMERIC_FAILURE, float("nan"), None, tab.iterations)
        if table[-1, -1] < -tol * max(1.0, np.abs(b).max()):
            return LPResult(INFEASIBLE, float("nan"), None, tab.iterations)
        for r in range(m):
            if tab.basis[r] >= n + m:
                cand = np.nonzero(np.abs(table[r, : n + m]) > tol)[0]
                if cand.size:
                    tab.pivot(r, int(cand[0]))
        keep = tab.basis < n + m
        table = np.concatenate([table[:m][keep], table[-1:]], axis=0)
        table = np.delete(table, np.s_[n + m : n + m + n_art], axis=1)
        tab.t = table
        tab.basis = tab.basis[keep]

    table = tab.t
    table[-1] = 0.0
    table[-1, :n] = -c
    basic_cost = np.zeros(table.shape[0] - 1)
    in_x = tab.basis < n
    basic_cost[in_x] = c[tab.basis[in_x]]
    table[-1] += basic_cost @ table[:-1]
    full_rank = tab.basis.shape[0] == m
    for _ in range(REINVERSIONS):
        status = tab.run(n + m)
        if status == "iteration-limit":
            return LPResult(NUMERIC_FAILURE, float("nan"), None, tab.iterations)
        if status == UNBOUNDED:
            return LPResult(UNBOUNDED, float("inf"), None, tab.iterations)
        if not full_rank:
            break
        verdict = _reinvert(tab, a, b, c, tol)
        if verdict == OPTIMAL:
            break
        if verdict == NUMERIC_FAILURE:
            return LPResult(NUMERIC_FAILURE, float("nan"), None, tab.iterations)
    else:
        return LPResult(NUMERIC_FAILURE, float("nan"), None, tab.iterations)
    table = tab.t
    x = np.zeros(n + m)
    x[tab.basis] = table[:-1, -1]
    x = x[:n]
    slack = b - a @ x
    if slack.min() < -FEASIBILITY_TOL * max(1.0, np.abs(b).max()) or x.min() < -FEASIBILITY_TOL:
        return LPResult(NUMERIC_FAILURE, float(c @ x), x, tab.iterations)
    return LPResult(OPTIMAL, float(c @ x), x, tab.iterations)


def _reinvert(tab: _Tableau, a: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float) -> str:
    """Rebuild the tableau from the original data for the current basis.

    Pivoting accumulates rounding error, which on badly scaled programs can
    make a suboptimal basis look optimal.  The fresh tableau is checked for
    primal feasibility and for improving columns; the return value is
    ``"optimal"``, ``"continue"`` (keep pivoting) or ``"numeric-failure"``.
    """
    m, n = a.shape
    full = np.hstack([a, np.eye(m)])
    basis_matrix = full[:, tab.basis]
    if np.linalg.cond(basis_matrix) > MAX_BASIS_CONDITION:
        return NUMERIC_FAILURE
    solved = np.linalg.solve(basis_matrix, np.hstack([full, b[:, None]]))
    if solved[:, -1].min() < -FEASIBILITY_TOL * max(1.0, np.abs(b).max()):
        return NUMERIC_FAILURE
    solved[:, -1] = np.maximum(solved[:, -1], 0.0)
    c_full = np.concatenate([c, np.zeros(m)])
    table = np.empty((m + 1, n + m + 1))
    table[:m] = solved
    table[-1] = c_full[tab.basis] @ solved
    table[-1, : n + m] -= c_full
    tab.t = table
    return OPTIMAL if table[-1, : n + m].min() >= -tol else "continue"


def _simplex_bounded(c, a, b, lo, hi, **kw) -> LPResult:
    """Reduce lo <= x <= hi to the x >= 0 form by shifting, reflecting or splitting."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    n = c.shape[0]
    cols, costs, shift = [], [], np.zeros(n)
    rows_extra, rhs_extra = [], []
    mapping = []  # (original index, sign) for each new column
    for j in range(n):
        l, u = lo[j], hi[j]
        if np.isfinite(l):
            shift[j] = l
            mapping.append((j, 1.0))
            if np.isfinite(u):
                rows_extra.append(len(mapping) - 1)
                rhs_extra.append(u - l)
        elif np.isfinite(u):
            shift[j] = u
            mapping.append((j, -1.0))
        else:
            mapping.append((j, 1.0))
            mapping.append((j, -1.0))
    idx = np.array([m[0] for m in mapping])
    sign = np.array([m[1] for m in mapping])
    a_new = a[:, idx] * sign
    c_new = c[idx] * sign
    b_new = b - a @ shift
    if rows_extra:
        box = np.zeros((len(rows_extra), len(mapping)))
        box[np.arange(len(rows_extra)), rows_extra] = 1.0
        a_new = np.vstack([a_new, box])
        b_new = np.concatenate([b_new, rhs_extra])
    res = dense_simplex(c_new, a_new, b_new, **kw)
    if res.x is None:
        return LPResult(res.status, res.value, None, res.iterations)
    x = shift.copy()
    np.add.at(x, idx, sign * res.x)
    return LPResult(res.status, float(c @ x), x, res.iterations)


def _highs(c, a, b, lo, hi) -> LPResult:
    from scipy.optimize import linprog

    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))
    try:
        res = linprog(-c, A_ub=a, b_ub=b, bounds=bounds, method="highs", options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.warning("HiGHS failed: %s", exc)
        return LPResult(NUMERIC_FAILURE, float("nan"), None, backend="highs")
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERIC_FAILURE)
    if status != OPTIMAL:
        return LPResult(status, float("nan"), None, int(res.nit or 0), backend="highs")
    return LPResult(OPTIMAL, float(-res.fun), np.asarray(res.x), int(res.nit or 0), backend="highs")


def _run_simplex(c, a_ub, b, lo, hi) -> LPResult:
    try:
        res = _simplex_bounded(c, a_ub, b, lo, hi)
    except (FloatingPointError, np.linalg.LinAlgError, MemoryError) as exc:
        log.warning("dense simplex failed: %s", exc)
        res = LPResult(NUMERIC_FAILURE, float("nan"), None)
    res.backend = "simplex"
    return res


def solve_lp(c, a_ub, b_ub, lo=None, hi=None, backend: str = "auto") -> LPResult:
    """maximize c @ x subject to a_ub @ x <= b_ub and lo <= x <= hi.

    ``backend`` is ``"simplex"``, ``"highs"`` or ``"auto"`` (dense simplex
    while the tableau stays below ``AUTO_DENSE_LIMIT`` cells, with HiGHS as
    the fallback if the simplex loses accuracy).  Failures are reported
    through ``LPResult.status``, never raised.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    b = np.asarray(b_ub, dtype=float)
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    if backend == "auto":
        m = b.shape[0] + int(np.sum(np.isfinite(lo) & np.isfinite(hi)))
        backend = "auto-simplex" if m * (2 * n + m) <= AUTO_DENSE_LIMIT else "highs"
    if backend == "simplex":
        return _run_simplex(c, a_ub, b, lo, hi)
    if backend == "auto-simplex":
        res = _run_simplex(c, a_ub, b, lo, hi)
        if res.status != NUMERIC_FAILURE:
            return res
        log.warning("dense simplex lost accuracy; retrying with HiGHS")
        backend = "highs"
    if backend == "highs":
        return _highs(c, a_ub, b, lo, hi)
    raise InputError(f"unknown LP backend {backend!r}")
