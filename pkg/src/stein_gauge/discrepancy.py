"""Graph Stein discrepancy as a linear program.

For a weighted sample Q = sum_i q_i delta_{x_i} the program searches over
surrogate gradients g_i and symmetric Hessians J_i of a Stein-set function
at the sample points and maximizes

    | sum_i q_i (<g_i, grad log p(x_i)> + tr J_i) / 2 |.

Constraints cap the surrogates with the Stein factors (c1, c2, c3) in
max-norms so that the program stays linear:

    |g_i|_inf <= c1,   |J_i|_max <= c2,
    |g_i - g_j|_inf <= c2 r_ij,   |J_i - J_j|_max <= c3 r_ij,
    |g_i - g_j - J_j (x_i - x_j)|_inf <= c3 r_ij^2 / 2   (both orientations),

with r_ij = ||x_i - x_j||_2 over the edges of a complete or k-nearest-
neighbour graph.  Each max-norm is dominated by the corresponding operator
norm, so every function in the Stein set yields a feasible point and the
optimum upper-bounds the smooth function distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .factors import SteinFactors, classical_factors
from .simplex import NUMERIC_FAILURE, OPTIMAL, solve_lp
from .targets import Target

COMPLETE_GRAPH_MAX_N = 500
DEFAULT_KNN = 5


@dataclass(frozen=True, eq=False)
class SampleMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InputError("points must be a non-empty (n, d) array")
        if w.shape[0] != pts.shape[0]:
            raise InputError(f"{w.shape[0]} weights for {pts.shape[0]} points")
        if not np.all(np.isfinite(pts)):
            raise InputError("sample points must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must be nonnegative and sum to 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> SampleMeasure:
        pts = np.asarray(points, dtype=float)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @classmethod
    def from_csv(cls, path, weights_column: int | None = None, header: bool = False, normalize: bool = True) -> SampleMeasure:
        """Read one point per row; ``weights_column`` selects an optional weight column."""
        try:
            data = np.loadtxt(Path(path), delimiter=",", skiprows=1 if header else 0, ndmin=2)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        if data.size == 0:
            raise InputError(f"{path}: no sample points")
        if weights_column is None:
            return cls.uniform(data)
        w = data[:, weights_column]
        pts = np.delete(data, weights_column, axis=1)
        if normalize:
            if np.any(w < 0) or w.sum() <= 0:
                raise InputError(f"{path}: weights must be nonnegative with positive sum")
            w = w / w.sum()
        return cls(pts, w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def parse_graph(spec: str | None, n: int) -> tuple[str, int]:
    """``"complete"``, ``"knn:m"`` or ``None`` (complete up to 500 points, else knn:5)."""
    if spec is None or spec == "auto":
        return ("complete", 0) if n <= COMPLETE_GRAPH_MAX_N else ("knn", DEFAULT_KNN)
    if spec == "complete":
        return ("complete", 0)
    if spec.startswith("knn"):
        _, _, m = spec.partition(":")
        try:
            m = int(m) if m else DEFAULT_KNN
        except ValueError:
            raise InputError(f"bad graph spec {spec!r}") from None
        if m < 0:
            raise InputError("knn neighbour count must be nonnegative")
        return ("knn", m)
    raise InputError(f"unknown graph spec {spec!r}")


def graph_edges(points: np.ndarray, kind: str, m: int = 0, block: int = 1024) -> np.ndarray:
    """Sorted (i, j) pairs with i < j.

    The knn graph is the symmetrized union of each point's m nearest
    neighbours; distance ties are broken by point index.
    """
    n = points.shape[0]
    if kind == "complete":
        i, j = np.triu_indices(n, k=1)
        return np.stack([i, j], axis=1)
    if m == 0 and n > 1:
        raise InputError("knn:0 leaves the graph without edges")
    m = min(m, n - 1)
    pairs = []
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        dist = np.linalg.norm(points[lo:hi, None, :] - points[None, :, :], axis=-1)
        dist[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        nbrs = np.argsort(dist, axis=1, kind="stable")[:, :m]
        rows = np.repeat(np.arange(lo, hi), m)
        pairs.append(np.stack([rows, nbrs.ravel()], axis=1))
    if not pairs or m == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate(pairs)
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


@dataclass
class VariableLayout:
    n: int
    d: int

    @property
    def n_sym(self) -> int:
        return self.d * (self.d + 1) // 2

    @property
    def per_point(self) -> int:
        return self.d + self.n_sym

    @property
    def size(self) -> int:
        return self.n * self.per_point

    def g(self, i: int) -> np.ndarray:
        base = i * self.per_point
        return np.arange(base, base + self.d)

    def j_index(self) -> np.ndarray:
        """d x d table mapping a Hessian entry (a, b) to its upper-triangle slot."""
        table = np.empty((self.d, self.d), dtype=np.int64)
        iu = np.triu_indices(self.d)
        table[iu] = np.arange(self.n_sym)
        table[(iu[1], iu[0])] = np.arange(self.n_sym)
        return table

    def jvars(self, i: int) -> np.ndarray:
        base = i * self.per_point + self.d
        return np.arange(base, base + self.n_sym)

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        blocks = x.reshape(self.n, self.per_point)
        g = blocks[:, : self.d].copy()
        jt = self.j_index()
        hess = blocks[:, self.d :][:, jt]
        return g, hess


@dataclass
class DiscrepancyProgram:
    objective: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    layout: VariableLayout
    edges: np.ndarray
    factors: SteinFactors
    inflation: float
    graph: str
    row_edge: np.ndarray  # edge id owning each constraint row
    points: np.ndarray

    @property
    def n_constraints(self) -> int:
        return self.a_ub.shape[0]


@dataclass
class LPSolution:
    value: float
    status: str
    gradients: np.ndarray | None = None
    hessians: np.ndarray | None = None
    sign: int = 1
    backend: str = ""
    signed_values: tuple[float, float] = field(default=(math.nan, math.nan))

    @property
    def argmax(self):
        return self.gradients, self.hessians


class _Rows:
    """Accumulates sparse inequality rows ``sum coef * var <= rhs``."""

    def __init__(self):
        self.r, self.c, self.v, self.rhs, self.owner = [], [], [], [], []
        self.count = 0

    def add_block(self, cols: np.ndarray, vals: np.ndarray, rhs: np.ndarray, owner: np.ndarray) -> None:
        # cols/vals: (k, width); one row per leading index; owner = edge id per row
        k, width = cols.shape
        self.r.append(np.repeat(np.arange(self.count, self.count + k), width))
        self.c.append(cols.ravel())
        self.v.append(vals.ravel())
        self.rhs.append(np.asarray(rhs, dtype=float).reshape(k))
        self.owner.append(np.asarray(owner, dtype=np.int64).reshape(k))
        self.count += k

    def matrix(self, n_vars: int) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        if self.count == 0:
            return sp.csr_matrix((0, n_vars)), np.zeros(0), np.zeros(0, dtype=np.int64)
        a = sp.coo_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=(self.count, n_vars)
        ).tocsr()
        a.sum_duplicates()
        return a, np.concatenate(self.rhs), np.concatenate(self.owner)


def build_program(
    target: Target,
    q: SampleMeasure,
    factors: SteinFactors,
    graph: str | None = None,
    inflation: float = 1.0,
) -> DiscrepancyProgram:
    if q.dim != target.dim:
        raise InputError(f"sample dimension {q.dim} does not match target dimension {target.dim}")
    if not inflation >= 1.0:
        raise InputError("inflation must be >= 1")
    kind, m = parse_graph(graph, q.n)
    edges = graph_edges(q.points, kind, m)
    f = factors.scaled(inflation)
    lay = VariableLayout(q.n, q.dim)
    d, ns = lay.d, lay.n_sym
    jt = lay.j_index()
    iu = np.triu_indices(d)

    grads = target.grad_log_p(q.points)
    obj = np.zeros(lay.size)
    diag_slots = jt[np.arange(d), np.arange(d)]
    for i in range(q.n):
        obj[lay.g(i)] = 0.5 * q.weights[i] * grads[i]
        obj[lay.jvars(i)[diag_slots]] += 0.5 * q.weights[i]

    lower = np.empty(lay.size)
    upper = np.empty(lay.size)
    for i in range(q.n):
        lower[lay.g(i)], upper[lay.g(i)] = -f.c1, f.c1
        lower[lay.jvars(i)], upper[lay.jvars(i)] = -f.c2, f.c2

    rows = _Rows()
    if edges.shape[0]:
        ei, ej = edges[:, 0], edges[:, 1]
        per = lay.per_point
        delta = q.points[ei] - q.points[ej]  # (E, d)
        r = np.linalg.norm(delta, axis=1)
        ne = edges.shape[0]
        ga = (ei[:, None] * per + np.arange(d)).reshape(-1)  # g_i components
        gb = (ej[:, None] * per + np.arange(d)).reshape(-1)
        eid = np.arange(ne)
        ones = np.ones(ne * d)
        r_d = np.repeat(r, d)
        for s in (1.0, -1.0):
            # +-(g_i - g_j) <= c2 r
            rows.add_block(np.stack([ga, gb], 1), np.stack([s * ones, -s * ones], 1), f.c2 * r_d, np.repeat(eid, d))
        ja = (ei[:, None] * per + d + np.arange(ns)).reshape(-1)
        jb = (ej[:, None] * per + d + np.arange(ns)).reshape(-1)
        onesj = np.ones(ne * ns)
        r_j = np.repeat(r, ns)
        for s in (1.0, -1.0):
            rows.add_block(np.stack([ja, jb], 1), np.stack([s * onesj, -s * onesj], 1), f.c3 * r_j, np.repeat(eid, ns))
        # Taylor compatibility, both orientations:
        #   +-(g_a - g_b - J_b (x_a - x_b)) <= c3 r^2 / 2
        for src, dst, dvec in ((ei, ej, delta), (ej, ei, -delta)):
            # component c of J_b (x_a - x_b) = sum_e J_b[c, e] dvec[e]
            comp = np.arange(d)
            jcols = dst[:, None, None] * per + d + jt[comp][None, :, :]  # (E, d, d)
            jvals = np.broadcast_to(dvec[:, None, :], (ne, d, d))
            gcols_a = (src[:, None] * per + comp)[:, :, None]
            gcols_b = (dst[:, None] * per + comp)[:, :, None]
            cols = np.concatenate([gcols_a, gcols_b, jcols], axis=2).reshape(ne * d, -1)
            base_vals = np.concatenate([np.ones((ne, d, 1)), -np.ones((ne, d, 1)), -jvals], axis=2).reshape(ne * d, -1)
            rhs = 0.5 * f.c3 * np.repeat(r**2, d)
            rows.add_block(cols, base_vals, rhs, np.repeat(eid, d))
            rows.add_block(cols, -base_vals, rhs, np.repeat(eid, d))
    a_ub, b_ub, owner = rows.matrix(lay.size)
    label = "complete" if kind == "complete" else f"knn:{m}"
    return DiscrepancyProgram(obj, a_ub, b_ub, lower, upper, lay, edges, factors, inflation, label, owner, q.points)


LAZY_EDGE_THRESHOLD = 2000
SEED_NEIGHBOURS = 5
VIOLATION_TOL = 1e-8
BATCH_PER_POINT = 2


def _solve_lazily(program: DiscrepancyProgram, c: np.ndarray, backend: str, max_rounds: int = 500):
    """Row generation over edges; exact for the full program.

    Starts from the edges of a small nearest-neighbour graph, then keeps
    adding the most violated edges (a bounded batch per round).  An
    optimum of the reduced program that satisfies all rows is optimal for
    the full program, since the reduced feasible set contains the full one.
    """
    n_edges = program.edges.shape[0]
    seed_edges = graph_edges(program.points, "knn", min(SEED_NEIGHBOURS, program.points.shape[0] - 1))
    index = {tuple(e): k for k, e in enumerate(program.edges.tolist())}
    active = np.zeros(n_edges, dtype=bool)
    active[[index[tuple(e)] for e in seed_edges.tolist() if tuple(e) in index]] = True
    scale = np.maximum(1.0, np.abs(program.b_ub))
    batch = max(100, BATCH_PER_POINT * program.points.shape[0])
    res = None
    for _ in range(max_rounds):
        rows = active[program.row_edge]
        res = solve_lp(c, program.a_ub[rows], program.b_ub[rows], program.lower, program.upper, backend=backend)
        if res.status != OPTIMAL:
            return res
        excess = (program.a_ub @ res.x - program.b_ub) / scale
        worst = np.zeros(n_edges)
        np.maximum.at(worst, program.row_edge, excess)
        worst[active] = 0.0
        new = np.nonzero(worst > VIOLATION_TOL)[0]
        if new.size == 0:
            return res
        if new.size > batch:
            new = new[np.argsort(-worst[new], kind="stable")[:batch]]
        active[new] = True
    res.status = NUMERIC_FAILURE
    return res


def solve_program(program: DiscrepancyProgram, backend: str = "auto", lazy: bool | None = None) -> LPSolution:
    """Maximize both signed objectives and keep the larger optimum.

    ``lazy`` switches on edge row generation; by default it is used once
    the graph has more than ``LAZY_EDGE_THRESHOLD`` edges.
    """
    if lazy is None:
        lazy = program.edges.shape[0] > LAZY_EDGE_THRESHOLD
    if lazy and program.edges.shape[0]:
        results = [_solve_lazily(program, s * program.objective, backend) for s in (1.0, -1.0)]
    else:
        results = [
            solve_lp(s * program.objective, program.a_ub, program.b_ub, program.lower, program.upper, backend=backend)
            for s in (1.0, -1.0)
        ]
    signed = (results[0].value, results[1].value)
    if not all(r.status == OPTIMAL for r in results):
        bad = next(r for r in results if r.status != OPTIMAL)
        status = bad.status if bad.status != "infeasible" else NUMERIC_FAILURE
        return LPSolution(math.nan, status, backend=results[0].backend, signed_values=signed)
    best = 0 if results[0].value >= results[1].value else 1
    g, hess = program.layout.unpack(results[best].x)
    # zero is feasible, so tiny negative optima are solver round-off
    value = max(0.0, results[best].value)
    return LPSolution(value, OPTIMAL, g, hess, sign=1 if best == 0 else -1, backend=results[best].backend, signed_values=signed)


@dataclass
class DiscrepancyResult:
    value: float
    status: str
    n: int
    d: int
    factors: SteinFactors
    inflation: float
    graph: str
    edges: int
    constraints: int
    backend: str

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "status": self.status,
            "n": self.n,
            "d": self.d,
            "factors": self.factors.to_dict(),
            "inflation": self.inflation,
            "graph": self.graph,
            "edges": self.edges,
            "constraints": self.constraints,
            "backend": self.backend,
        }


def discrepancy_report(
    target: Target,
    q: SampleMeasure,
    graph: str | None = None,
    factors: SteinFactors | None = None,
    inflation: float = 1.0,
    backend: str = "auto",
) -> DiscrepancyResult:
    factors = classical_factors(target.smoothness_constants()) if factors is None else factors
    prog = build_program(target, q, factors, graph, inflation)
    sol = solve_program(prog, backend)
    return DiscrepancyResult(
        value=sol.value,
        status=sol.status,
        n=q.n,
        d=q.dim,
        factors=factors,
        inflation=inflation,
        graph=prog.graph,
        edges=int(prog.edges.shape[0]),
        constraints=prog.n_constraints,
        backend=sol.backend,
    )


def stein_discrepancy(target: Target, q: SampleMeasure, graph: str | None = None, inflation: float = 1.0, backend: str = "auto") -> float:
    """Graph Stein discrepancy of ``q`` against ``target`` with the classical factors."""
    return discrepancy_report(target, q, graph, inflation=inflation, backend=backend).value
