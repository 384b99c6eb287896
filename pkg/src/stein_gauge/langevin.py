"""Synchronously coupled overdamped Langevin diffusions.

Every diffusion solves dZ = (1/2) grad log p(Z) dt + dW with one Brownian
path W shared across all starting points of a replica, discretized by
Euler-Maruyama.  The module builds the eight-start layout

    z + b' v' + b v,   z in {x, x'},  b in {0, eps},
    b' in {0, eps'} for z = x  and  b' in {0, eps''} for z = x',

forms the first-, second- and third-order differenced processes and
compares them with their exponential contraction envelopes.  It also
estimates differences of the Stein solution u_h by integrating coupled
expectation gaps over time.

Numerics: each group of coupled starts is stored as one anchor path plus
offsets from it.  Offsets evolve by the drift difference only (the shared
noise cancels exactly), which keeps small differences free of the
cancellation error that subtracting two O(1) paths would incur.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .factors import SmoothnessBudget
from .oracles import SmoothFunctionOracle
from .targets import Target

PASS_FRACTION = 0.99
THREADS_ENV = "STEIN_GAUGE_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DiffusionConfig:
    dt: float = 1e-3
    horizon: float = 10.0
    seed: int = 0
    replicas: int = 1000
    workers: int | None = None

    @classmethod
    def for_target(cls, target: Target, seed: int = 0, replicas: int = 1000) -> DiffusionConfig:
        """dt = 1e-3/k and horizon 20/k, so the e^{-kT/2} tail is about 4.5e-5."""
        return cls(dt=1e-3 / target.k, horizon=20.0 / target.k, seed=seed, replicas=replicas)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def validate(self, k: float) -> None:
        if not (self.dt > 0 and self.horizon > 0):
            raise ConfigError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ConfigError(f"dt={self.dt} exceeds horizon={self.horizon}")
        if self.dt * k >= 2.0:
            raise ConfigError(f"unstable step: dt*k = {self.dt * k:.3g} >= 2")
        if self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def em_step(target: Target, x, dt: float, noise) -> np.ndarray:
    """One Euler-Maruyama step; ``noise`` ~ N(0, dt I) is supplied by the caller."""
    x = np.asarray(x, dtype=float)
    drift = target._grad(x)
    if not np.all(np.isfinite(drift)):
        bad = np.argwhere(~np.isfinite(drift))
        raise NumericError(f"non-finite drift at index {bad[0].tolist()} (x={x.tolist()})")
    return x + 0.5 * dt * drift + np.asarray(noise, dtype=float)


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream for one (seed, replica) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replica,))))


def geometric_grid(n_steps: int) -> np.ndarray:
    """Step indices {0, 1, 2, 4, ...} plus the final step."""
    steps = [0]
    s = 1
    while s < n_steps:
        steps.append(s)
        s *= 2
    steps.append(n_steps)
    return np.unique(np.array(steps, dtype=np.int64))


@dataclass
class SimulationResult:
    times: np.ndarray  # (G,)
    steps: np.ndarray  # (G,)
    anchors: np.ndarray  # (R, A, G, d)
    offsets: np.ndarray  # (R, A, S, G, d)
    integrals: np.ndarray | None  # (R, A, S) time integral of the accumulator

    def positions(self) -> np.ndarray:
        """(R, A, 1 + S, G, d): anchor followed by its offset members."""
        full = self.anchors[:, :, None] + self.offsets
        return np.concatenate([self.anchors[:, :, None], full], axis=2)


def simulate(target: Target, anchors, offsets, config: DiffusionConfig, accumulate=None, record: bool = True) -> SimulationResult:
    """Advance coupled groups of diffusions with one noise path per replica.

    ``anchors`` is ``(A, d)`` and ``offsets`` ``(A, S, d)``; group ``a``
    contains the starts ``anchors[a]`` and ``anchors[a] + offsets[a, s]``.
    Every start of every group in a replica receives the same increments.
    ``accumulate(anchor, member)`` (arrays ``(R, A, d)`` and ``(R, A, S, d)``)
    returns ``(R, A, S)`` values integrated over [0, T) by a left Riemann sum.
    """
    config.validate(target.k)
    anchors = np.asarray(anchors, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if anchors.ndim != 2 or offsets.ndim != 3 or offsets.shape[0] != anchors.shape[0]:
        raise InputError("anchors must be (A, d) and offsets (A, S, d)")
    if anchors.shape[1] != target.dim or offsets.shape[2] != target.dim:
        raise InputError("start dimension does not match target")

    n_steps = config.n_steps
    steps = geometric_grid(n_steps) if record else np.array([n_steps])
    workers = config.workers or default_workers()
    n_rep = config.replicas
    n_blocks = max(1, min(workers, n_rep))
    bounds = np.linspace(0, n_rep, n_blocks + 1).astype(int)

    def run(lo: int, hi: int):
        return _simulate_block(target, anchors, offsets, config, range(lo, hi), steps, accumulate)

    if n_blocks == 1:
        parts = [run(0, n_rep)]
    else:
        with ThreadPoolExecutor(max_workers=n_blocks) as pool:
            parts = list(pool.map(lambda b: run(bounds[b], bounds[b + 1]), range(n_blocks)))

    anc = np.concatenate([p[0] for p in parts])
    off = np.concatenate([p[1] for p in parts])
    integ = np.concatenate([p[2] for p in parts]) if accumulate is not None else None
    return SimulationResult(times=steps * config.dt, steps=steps, anchors=anc, offsets=off, integrals=integ)


def _simulate_block(target, anchors, offsets, config, replicas, steps, accumulate):
    n = len(replicas)
    d = target.dim
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    gens = [replica_generator(config.seed, r) for r in replicas]
    y = np.broadcast_to(anchors, (n,) + anchors.shape).copy()
    off = np.broadcast_to(offsets, (n,) + offsets.shape).copy()
    rec_a = np.empty((n, anchors.shape[0], len(steps), d))
    rec_o = np.empty((n,) + offsets.shape[:2] + (len(steps), d))
    integ = np.zeros((n,) + offsets.shape[:2]) if accumulate is not None else None
    slot = {int(s): i for i, s in enumerate(steps)}

    def store(step):
        i = slot.get(step)
        if i is None:
            return
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(off))):
            raise NumericError(f"diffusion diverged before t={step * dt:.6g} (step {step})")
        rec_a[:, :, i] = y
        rec_o[:, :, :, i] = off

    n_steps = config.n_steps
    chunk = max(16, min(4096, (1 << 22) // max(1, n * d)))
    store(0)
    step = 0
    noise = np.empty((n, chunk, d))
    while step < n_steps:
        m = min(chunk, n_steps - step)
        for i, g in enumerate(gens):
            noise[i, :m] = g.standard_normal((m, d))
        for j in range(m):
            members = y[:, :, None, :] + off
            if integ is not None:
                integ += accumulate(y, members)
            g_anchor = target._grad(y)
            g_member = target._grad(members)
            off += (0.5 * dt) * (g_member - g_anchor[:, :, None, :])
            y += (0.5 * dt) * g_anchor + sqrt_dt * noise[:, None, j, :]
            step += 1
            store(step)
    if integ is not None:
        integ *= dt
    return rec_a, rec_o, integ


# ---------------------------------------------------------------------------
# coupling geometry and differenced processes


def _unit(v, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    nv = float(np.linalg.norm(v))
    if abs(nv - 1.0) > 1e-8:
        raise InputError(f"{name} must be a unit vector, has norm {nv}")
    return v / nv


@dataclass(frozen=True, eq=False)
class CouplingGeometry:
    x: np.ndarray
    x_prime: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    eps: float
    eps_prime: float
    eps_second: float

    def __post_init__(self):
        for name in ("eps", "eps_prime", "eps_second"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "x_prime", np.atleast_1d(np.asarray(self.x_prime, dtype=float)))
        object.__setattr__(self, "v", _unit(self.v, "v"))
        object.__setattr__(self, "v_prime", _unit(self.v_prime, "v_prime"))
        if not (self.x.shape == self.x_prime.shape == self.v.shape == self.v_prime.shape):
            raise InputError("geometry vectors must share one dimension")

    @property
    def separation(self) -> float:
        return float(np.linalg.norm(self.x - self.x_prime))

    def anchors_and_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        e, v = self.eps, self.v
        vp = self.v_prime
        anchors = np.stack([self.x, self.x_prime])
        offsets = np.stack(
            [
                [e * v, self.eps_prime * vp, self.eps_prime * vp + e * v],
                [e * v, self.eps_second * vp, self.eps_second * vp + e * v],
            ]
        )
        return anchors, offsets

    def starts(self) -> np.ndarray:
        """The eight starting points, in layout order."""
        anchors, offsets = self.anchors_and_offsets()
        out = []
        for a in range(2):
            out.append(anchors[a])
            out.extend(anchors[a] + offsets[a])
        return np.array(out)

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "x_prime": self.x_prime.tolist(),
            "v": self.v.tolist(),
            "v_prime": self.v_prime.tolist(),
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "eps_second": self.eps_second,
        }


@dataclass(frozen=True)
class GrowthFactors:
    f1: float
    f2: float


def compute_growth_factors(x, x_prime, eps: float, eps_prime: float, eps_second: float) -> GrowthFactors:
    if not (eps > 0 and eps_prime > 0 and eps_second > 0):
        raise InputError("growth-factor weights must be positive")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float))))
    tail = 3.0 + eps / eps_second + eps / eps_prime
    f1 = r + (eps_second + eps_prime) / 2 + eps * (tail + r / eps_prime) / 3
    f2 = r + 3 * (eps_second + eps_prime) / 2 + eps * tail / 3
    return GrowthFactors(f1, f2)


@dataclass
class CoupledEnsemble:
    geometry: CouplingGeometry
    starts: np.ndarray  # (8, d)
    times: np.ndarray  # (G,)
    result: SimulationResult
    config: DiffusionConfig

    @property
    def trajectories(self) -> np.ndarray:
        """(R, 8, G, d) positions at the recorded times."""
        pos = self.result.positions()
        r, a, s, g, d = pos.shape
        return pos.reshape(r, a * s, g, d)


@dataclass
class DifferenceProcesses:
    dz_series: np.ndarray  # (R, G, d): Z^{x+eps v} - Z^x
    v_series: np.ndarray  # (R, G, d)
    u_series: np.ndarray  # (R, G, d)


def run_coupled(target: Target, config: DiffusionConfig, geometry: CouplingGeometry) -> tuple[CoupledEnsemble, DifferenceProcesses]:
    """Simulate all eight coupled starts and form the differenced processes."""
    if geometry.x.shape[0] != target.dim:
        raise InputError("geometry dimension does not match target")
    anchors, offsets = geometry.anchors_and_offsets()
    res = simulate(target, anchors, offsets, config)
    o = res.offsets  # (R, 2, 3, G, d): members (eps v, b' v', b' v' + eps v)
    e, ep, es = geometry.eps, geometry.eps_prime, geometry.eps_second
    dz = o[:, 0, 0]
    v_series = o[:, 1, 1] / es - o[:, 0, 1] / ep
    u_series = (o[:, 1, 2] - o[:, 1, 1] - o[:, 1, 0]) / (e * es) - (o[:, 0, 2] - o[:, 0, 1] - o[:, 0, 0]) / (e * ep)
    ens = CoupledEnsemble(geometry=geometry, starts=geometry.starts(), times=res.times, result=res, config=config)
    return ens, DifferenceProcesses(dz_series=dz, v_series=v_series, u_series=u_series)


# ---------------------------------------------------------------------------
# envelope checks


@dataclass
class ContractReport:
    name: str
    times: np.ndarray
    measured: np.ndarray  # (R, G)
    envelope: np.ndarray  # (G,)
    slack: float
    atol: float
    pass_fraction_required: float = PASS_FRACTION
    ratios: np.ndarray = field(init=False)

    def __post_init__(self):
        env = np.broadcast_to(self.envelope, self.measured.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(env > 0, self.measured / env, np.where(self.measured <= self.atol, 0.0, np.inf))
        self.ratios = ratios

    @property
    def replica_ok(self) -> np.ndarray:
        ok = self.measured <= self.envelope * (1.0 + self.slack) + self.atol
        return np.all(ok, axis=1)

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.replica_ok))

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def violations(self) -> int:
        return int(np.sum(~self.replica_ok))

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= self.pass_fraction_required

    def summary(self) -> dict:
        return {
            "name": self.name,
            "replicas": int(self.measured.shape[0]),
            "max_ratio": self.max_ratio,
            "pass_fraction": self.pass_fraction,
            "violations": self.violations,
            "slack": self.slack,
            "passed": self.passed,
        }

    def rows(self):
        """Per-time rows (t, worst measured, envelope, worst ratio)."""
        worst = np.max(self.measured, axis=0)
        worst_ratio = np.max(self.ratios, axis=0)
        env = np.broadcast_to(self.envelope, worst.shape)
        return [(float(t), float(m), float(e), float(r)) for t, m, e, r in zip(self.times, worst, env, worst_ratio)]


def default_slack(config: DiffusionConfig, k: float) -> float:
    """Multiplicative allowance 5 dt k for Euler-Maruyama bias."""
    return 5.0 * config.dt * k


def contract_envelope(envelope: int, budget: SmoothnessBudget, geometry: CouplingGeometry, times) -> np.ndarray:
    k = budget.k
    decay = np.exp(-k * np.asarray(times) / 2)
    r = geometry.separation
    if envelope == 1:
        bound = geometry.eps
    elif envelope == 2:
        bound = budget.l3 / k * (r + (geometry.eps_second + geometry.eps_prime) / 2)
    elif envelope == 3:
        gf = compute_growth_factors(geometry.x, geometry.x_prime, geometry.eps, geometry.eps_prime, geometry.eps_second)
        bound = 3 * budget.l3**2 / k**2 * gf.f1 + budget.l4 / (2 * k) * gf.f2
    else:
        raise InputError(f"envelope must be 1, 2 or 3, got {envelope}")
    return bound * decay


def check_contract(
    envelope: int,
    ensemble: CoupledEnsemble,
    diffs: DifferenceProcesses,
    budget: SmoothnessBudget,
    slack: float | None = None,
    atol: float = 1e-9,
) -> ContractReport:
    series = {1: diffs.dz_series, 2: diffs.v_series, 3: diffs.u_series}.get(envelope)
    if series is None:
        raise InputError(f"envelope must be 1, 2 or 3, got {envelope}")
    if slack is None:
        slack = default_slack(ensemble.config, budget.k)
    env = contract_envelope(envelope, budget, ensemble.geometry, ensemble.times)
    measured = np.linalg.norm(series, axis=-1)
    return ContractReport(f"contract{envelope}", ensemble.times, measured, env, slack, atol)


def function_contract_envelope(order: int, h: SmoothFunctionOracle, budget: SmoothnessBudget, geometry: CouplingGeometry, times) -> np.ndarray:
    k, l3, l4 = budget.k, budget.l3, budget.l4
    t = np.asarray(times)
    half, full, three_half = np.exp(-k * t / 2), np.exp(-k * t), np.exp(-3 * k * t / 2)

    def term(bound, coef):
        # a zero coefficient makes an unknown (infinite) bound irrelevant
        return 0.0 if coef == 0 else bound * coef

    if order == 2:
        base = geometry.separation + (geometry.eps_second + geometry.eps_prime) / 2
        return (term(h.m1, l3 / k) * half + term(h.m2, 1.0) * full) * base
    if order == 3:
        gf = compute_growth_factors(geometry.x, geometry.x_prime, geometry.eps, geometry.eps_prime, geometry.eps_second)
        first = term(h.m1, 3 * l3**2 / k**2) * half + term(h.m2, 3 * l3 / k) * full
        second = term(h.m1, l4 / (2 * k)) * half + term(h.m3, 1.0) * three_half
        return first * gf.f1 + second * gf.f2
    raise InputError(f"order must be 2 or 3, got {order}")


def check_function_contract(
    order: int,
    h: SmoothFunctionOracle,
    ensemble: CoupledEnsemble,
    budget: SmoothnessBudget,
    slack: float | None = None,
    atol: float = 1e-9,
) -> ContractReport:
    """Compare |differenced h| along the ensemble with its envelope.

    The envelope bounds the signed difference for every h, hence also for
    -h, so the absolute value is compared.
    """
    geo = ensemble.geometry
    pos = ensemble.result.positions()  # (R, 2, 4, G, d)
    hv = h(pos)  # (R, 2, 4, G)
    x0, x_e, x_b, x_be = (hv[:, 0, i] for i in range(4))
    p0, p_e, p_b, p_be = (hv[:, 1, i] for i in range(4))
    if order == 2:
        lhs = (p_b - p0) / geo.eps_second - (x_b - x0) / geo.eps_prime
    elif order == 3:
        lhs = (p_be - p_b - (p_e - p0)) / (geo.eps * geo.eps_second) - (x_be - x_b - (x_e - x0)) / (geo.eps * geo.eps_prime)
    else:
        raise InputError(f"order must be 2 or 3, got {order}")
    if slack is None:
        slack = default_slack(ensemble.config, budget.k)
    env = function_contract_envelope(order, h, budget, geo, ensemble.times)
    return ContractReport(f"function_contract{order}", ensemble.times, np.abs(lhs), env, slack, atol)


def verify_coupling(
    target: Target,
    geometry: CouplingGeometry,
    config: DiffusionConfig,
    slack: float | None = None,
    functions: dict[int, SmoothFunctionOracle] | None = None,
) -> dict[str, ContractReport]:
    """Run one coupled ensemble and check every envelope against it."""
    budget = target.smoothness_constants()
    ens, diffs = run_coupled(target, config, geometry)
    reports = {f"contract{i}": check_contract(i, ens, diffs, budget, slack) for i in (1, 2, 3)}
    for order, h in (functions or {}).items():
        reports[f"function_contract{order}"] = check_function_contract(order, h, ens, budget, slack)
    return reports


# ---------------------------------------------------------------------------
# Stein solution differences


@dataclass
class UhEstimate:
    value: float
    stderr: float
    truncation_bound: float
    horizon: float
    dt: float
    replicas: int


def truncation_bound(k: float, m1: float, distance: float, horizon: float) -> float:
    """(2/k) M1(h) ||x - y|| e^{-kT/2}: mass of the coupled integral beyond T."""
    if distance == 0.0:
        return 0.0
    return 2.0 / k * m1 * distance * math.exp(-k * horizon / 2)


def estimate_u_h(
    target: Target,
    h: SmoothFunctionOracle,
    x,
    config: DiffusionConfig,
    y=None,
    tol: float | None = None,
) -> UhEstimate:
    """Estimate u_h(x) - u_h(y) = int_0^T E[h(Z_t^y) - h(Z_t^x)] dt.

    ``y`` defaults to the origin.  The two diffusions share their noise, so
    x == y returns exactly zero.  If ``tol`` is given and the analytic tail
    beyond the horizon exceeds it, a ConfigError is raised.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.zeros_like(x) if y is None else np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (target.dim,) or y.shape != (target.dim,):
        raise InputError("x and y must be points of the target dimension")
    config.validate(target.k)
    tail = truncation_bound(target.k, h.m1, float(np.linalg.norm(x - y)), config.horizon)
    if tol is not None and tail > tol:
        raise ConfigError(f"horizon {config.horizon} too short: tail bound {tail:.3g} exceeds tolerance {tol:.3g}")

    def gap(anchor, member):
        return h(anchor)[:, :, None] - h(member)

    res = simulate(target, y[None, :], (x - y)[None, None, :], config, accumulate=gap, record=False)
    per_rep = res.integrals[:, 0, 0]
    stderr = float(np.std(per_rep, ddof=1) / math.sqrt(per_rep.size)) if per_rep.size > 1 else 0.0
    return UhEstimate(
        value=float(np.mean(per_rep)),
        stderr=stderr,
        truncation_bound=tail,
        horizon=config.horizon,
        dt=config.dt,
        replicas=config.replicas,
    )
