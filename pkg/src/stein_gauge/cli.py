"""Command-line interface.

Subcommands: factors, discrepancy, certify, wasserstein-bound, simulate,
verify-coupling, verify-lemma2, verify-smoothing.  Every command prints a
JSON report (or writes it to ``--output``).  Options may also come from a
JSON file given with ``--config``; explicit flags win.

Exit codes: 0 success, 2 invalid input or configuration, 3 numeric
failure, 4 a verification suite found violations.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .discrepancy import SampleMeasure, discrepancy_report
from .errors import InputError, NumericError, SteinGaugeError
from .factors import classical_factors, factors_report
from .langevin import CouplingGeometry, DiffusionConfig, check_contract, check_function_contract, run_coupled
from .metrics import certify, expected_gaussian_norm, verify_smoothing_derivative_bounds, wasserstein_upper
from .oracles import SmoothFunctionOracle, verify_gap_inequalities
from .targets import GaussianTarget, LogisticTarget

log = logging.getLogger("stein_gauge")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

COMMANDS = (
    "factors",
    "discrepancy",
    "certify",
    "wasserstein-bound",
    "simulate",
    "verify-coupling",
    "verify-lemma2",
    "verify-smoothing",
)

DEFAULTS = {
    "target": "gaussian",
    "dim": 1,
    "k": 1.0,
    "mean": None,
    "sigma2": 1.0,
    "data": None,
    "data_header": False,
    "samples": None,
    "samples_header": False,
    "weights_column": None,
    "graph": None,
    "inflation": 1.0,
    "backend": "auto",
    "seed": 0,
    "dt": 1e-3,
    "horizon": 10.0,
    "replicas": 1000,
    "x": None,
    "x_prime": None,
    "v": None,
    "v_prime": None,
    "eps": 0.05,
    "eps_prime": 0.05,
    "eps_second": 0.1,
    "slack": None,
    "smooth": None,
    "instances": 1000,
    "t": "0.1,1,10",
    "probes": 100,
    "tol": 0.02,
    "output": None,
    "emit_plot_data": None,
    "deterministic": False,
}


class VerificationFailed(SteinGaugeError):
    """Raised when a verification suite reports violations."""

    def __init__(self, report: dict):
        super().__init__("verification failed")
        self.report = report


def _vector(text, dim: int | None = None, name: str = "vector") -> np.ndarray | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise InputError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    arr = np.array(vals)
    if dim is not None and arr.size == 1 and dim > 1:
        arr = np.full(dim, arr[0])
    if dim is not None and arr.size != dim:
        raise InputError(f"--{name}: expected {dim} values, got {arr.size}")
    return arr


def build_target(cfg: dict):
    kind = cfg["target"]
    if kind == "gaussian":
        dim = int(cfg["dim"])
        if dim < 1:
            raise InputError("--dim must be positive")
        k = float(cfg["k"])
        if not k > 0:
            raise InputError("--k must be positive")
        mean = _vector(cfg["mean"], dim, "mean")
        return GaussianTarget.isotropic(dim, k, mean)
    if kind == "logistic":
        if cfg["data"] is None:
            raise InputError("--data is required for the logistic target")
        path = Path(cfg["data"])
        if not path.exists():
            raise InputError(f"data file {path} does not exist")
        return LogisticTarget.from_csv(path, float(cfg["sigma2"]), header=bool(cfg["data_header"]))
    raise InputError(f"unknown target {kind!r}")


def load_samples(cfg: dict) -> SampleMeasure:
    if cfg["samples"] is None:
        raise InputError("--samples is required")
    path = Path(cfg["samples"])
    if not path.exists():
        raise InputError(f"sample file {path} does not exist")
    wc = cfg["weights_column"]
    return SampleMeasure.from_csv(path, None if wc is None else int(wc), header=bool(cfg["samples_header"]))


def build_geometry(cfg: dict, dim: int) -> CouplingGeometry:
    e1 = np.eye(dim)[0]
    x = _vector(cfg["x"], dim, "x")
    xp = _vector(cfg["x_prime"], dim, "x-prime")
    v = _vector(cfg["v"], dim, "v")
    vp = _vector(cfg["v_prime"], dim, "v-prime")
    return CouplingGeometry(
        x=-0.5 * e1 if x is None else x,
        x_prime=0.5 * e1 if xp is None else xp,
        v=e1 if v is None else v,
        v_prime=e1 if vp is None else vp,
        eps=float(cfg["eps"]),
        eps_prime=float(cfg["eps_prime"]),
        eps_second=float(cfg["eps_second"]),
    )


def build_diffusion_config(cfg: dict) -> DiffusionConfig:
    seed = int(cfg["seed"])
    return DiffusionConfig(dt=float(cfg["dt"]), horizon=float(cfg["horizon"]), seed=seed, replicas=int(cfg["replicas"]))


def _sine_oracle() -> SmoothFunctionOracle:
    return SmoothFunctionOracle(
        value=lambda x: np.sin(x[..., 0]),
        gradient=None,
        m1=1.0,
        m2=1.0,
        m3=1.0,
        name="sin(x1)",
    )


# ---------------------------------------------------------------------------
# commands


def cmd_factors(cfg: dict) -> dict:
    target = build_target(cfg)
    budget = target.smoothness_constants()
    return factors_report(budget, classical_factors(budget))


def cmd_discrepancy(cfg: dict) -> dict:
    target = build_target(cfg)
    q = load_samples(cfg)
    res = discrepancy_report(target, q, cfg["graph"], inflation=float(cfg["inflation"]), backend=cfg["backend"])
    if res.status != "optimal":
        raise NumericError(f"discrepancy program failed: {res.status}")
    return res.to_dict()


def cmd_certify(cfg: dict) -> dict:
    target = build_target(cfg)
    q = load_samples(cfg)
    return certify(target, q, cfg["graph"], inflation=float(cfg["inflation"]), backend=cfg["backend"]).to_dict()


def cmd_wasserstein_bound(cfg: dict) -> dict:
    if cfg["smooth"] is None:
        raise InputError("--smooth is required")
    s, d = float(cfg["smooth"]), int(cfg["dim"])
    return {"smooth": s, "dim": d, "e_norm_g": expected_gaussian_norm(d), "w1_upper": wasserstein_upper(s, d)}


def _coupling_reports(cfg: dict):
    target = build_target(cfg)
    geo = build_geometry(cfg, target.dim)
    config = build_diffusion_config(cfg)
    budget = target.smoothness_constants()
    slack = None if cfg["slack"] is None else float(cfg["slack"])
    ens, diffs = run_coupled(target, config, geo)
    reports = [check_contract(i, ens, diffs, budget, slack) for i in (1, 2, 3)]
    h = _sine_oracle()
    reports += [check_function_contract(o, h, ens, budget, slack) for o in (2, 3)]
    return target, geo, config, reports


def write_series(reports, directory) -> list[str]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        path = out / f"{rep.name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "measured", "envelope", "ratio"])
            for row in rep.rows():
                w.writerow([repr(v) for v in row])
        written.append(str(path))
    return written


def cmd_simulate(cfg: dict) -> dict:
    target, geo, config, reports = _coupling_reports(cfg)
    directory = cfg["emit_plot_data"] or "."
    files = write_series(reports, directory)
    return {
        "geometry": geo.to_dict(),
        "dt": config.dt,
        "horizon": config.horizon,
        "replicas": config.replicas,
        "seed": config.seed,
        "files": files,
        "contracts": [r.summary() for r in reports],
    }


def cmd_verify_coupling(cfg: dict) -> dict:
    target, geo, config, reports = _coupling_reports(cfg)
    if cfg["emit_plot_data"]:
        write_series(reports, cfg["emit_plot_data"])
    report = {
        "seed": config.seed,
        "dt": config.dt,
        "horizon": config.horizon,
        "replicas": config.replicas,
        "slack": reports[0].slack,
        "geometry": geo.to_dict(),
        "contracts": [r.summary() for r in reports],
        "pass_fraction": min(r.pass_fraction for r in reports),
        "passed": all(r.passed for r in reports),
    }
    if not report["passed"]:
        raise VerificationFailed(report)
    return report


def cmd_verify_gap_inequalities(cfg: dict) -> dict:
    n = int(cfg["instances"])
    if n < 1:
        raise InputError("--instances must be positive")
    rep = verify_gap_inequalities(instances=n, seed=int(cfg["seed"]), equality_instances=min(n, 100))
    out = rep.to_dict()
    if not rep.passed:
        raise VerificationFailed(out)
    return out


def cmd_verify_smoothing(cfg: dict) -> dict:
    ts = _vector(cfg["t"], None, "t")
    if ts is None or np.any(ts <= 0):
        raise InputError("--t must list positive smoothing scales")
    rng = np.random.default_rng(int(cfg["seed"]))
    n = int(cfg["probes"])
    reports = []
    for t in ts:
        probes = np.concatenate([[0.0], t * rng.uniform(-3, 3, size=n - 1)]) if n > 1 else np.zeros(1)
        rep = verify_smoothing_derivative_bounds(lambda x: np.abs(x[..., 0]), float(t), probes, tol=float(cfg["tol"]))
        reports.append(rep.to_dict())
    out = {"function": "|x|", "reports": reports, "passed": all(r["passed"] for r in reports)}
    if not out["passed"]:
        raise VerificationFailed(out)
    return out


HANDLERS = {
    "factors": cmd_factors,
    "discrepancy": cmd_discrepancy,
    "certify": cmd_certify,
    "wasserstein-bound": cmd_wasserstein_bound,
    "simulate": cmd_simulate,
    "verify-coupling": cmd_verify_coupling,
    "verify-lemma2": cmd_verify_gap_inequalities,
    "verify-smoothing": cmd_verify_smoothing,
}


# ---------------------------------------------------------------------------
# argument handling


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    p.add_argument("--deterministic", action="store_true", default=None, help="omit the timestamp from the report")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def _add_target(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", choices=["gaussian", "logistic"])
    p.add_argument("--dim", type=int, help="Gaussian dimension")
    p.add_argument("--k", type=float, help="Gaussian precision (isotropic)")
    p.add_argument("--mean", help="Gaussian mean, comma-separated")
    p.add_argument("--sigma2", type=float, help="logistic prior variance")
    p.add_argument("--data", help="logistic dataset CSV: v_1..v_d,y per row")
    p.add_argument("--data-header", action="store_true", default=None)


def _add_samples(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", help="CSV with one sample point per row")
    p.add_argument("--samples-header", action="store_true", default=None)
    p.add_argument("--weights-column", type=int, help="column index holding sample weights")
    p.add_argument("--graph", help="complete | knn:M (default: complete up to 500 points)")
    p.add_argument("--inflation", type=float, help="multiplier applied to the Stein factors (>= 1)")
    p.add_argument("--backend", choices=["auto", "simplex", "highs"])


def _add_diffusion(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--x")
    p.add_argument("--x-prime")
    p.add_argument("--v")
    p.add_argument("--v-prime")
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-prime", type=float)
    p.add_argument("--eps-second", type=float)
    p.add_argument("--slack", type=float, help="multiplicative envelope slack (default 5*dt*k)")
    p.add_argument("--emit-plot-data", help="directory for per-contract CSV series")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stein-gauge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factors", help="Stein factors of a target")
    _add_common(p)
    _add_target(p)

    for name, text in (("discrepancy", "graph Stein discrepancy of a sample"), ("certify", "discrepancy plus metric bounds")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_target(p)
        _add_samples(p)

    p = sub.add_parser("wasserstein-bound", help="Wasserstein bound from a smooth-distance bound")
    _add_common(p)
    p.add_argument("--smooth", type=float)
    p.add_argument("--dim", type=int)

    for name, text in (("simulate", "coupled diffusions, CSV series"), ("verify-coupling", "coupling envelope checks")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_target(p)
        _add_diffusion(p)

    p = sub.add_parser("verify-lemma2", help="random-instance check of the weighted difference bounds")
    _add_common(p)
    p.add_argument("--instances", type=int)

    p = sub.add_parser("verify-smoothing", help="derivative bounds of Gaussian-smoothed |x|")
    _add_common(p)
    p.add_argument("--t", help="comma-separated smoothing scales")
    p.add_argument("--probes", type=int)
    p.add_argument("--tol", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise InputError("config file must hold a JSON object")
        for key, val in loaded.items():
            cfg[key.replace("-", "_")] = val
    for key, val in vars(args).items():
        if val is not None and key not in ("config", "command"):
            cfg[key] = val
    cfg["command"] = args.command
    cfg["_relevant"] = sorted(k for k in vars(args) if k not in ("config", "command", "output", "verbose", "deterministic"))
    return cfg


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats so the report stays valid JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def render(report: dict, cfg: dict, status: str) -> str:
    keys = cfg.get("_relevant") or [k for k in DEFAULTS if k not in ("output", "deterministic")]
    inputs = {k: cfg.get(k) for k in keys}
    doc = dict(report)
    doc["command"] = cfg["command"]
    doc["status"] = status
    doc["version"] = __version__
    doc["inputs"] = inputs
    if not cfg.get("deterministic"):
        doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    return json.dumps(_clean(doc), sort_keys=True, indent=2, default=_json_default) + "\n"


def emit(text: str, output) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def run(cfg: dict) -> int:
    """Execute one resolved configuration; returns the process exit code."""
    handler = HANDLERS[cfg["command"]]
    try:
        report = handler(cfg)
    except VerificationFailed as exc:
        emit(render(exc.report, cfg, "verification-failed"), cfg.get("output"))
        return EXIT_VERIFY
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        emit(render({"error": str(exc)}, cfg, "numeric-failure"), cfg.get("output"))
        return EXIT_NUMERIC
    except InputError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INPUT
    emit(render(report, cfg, "ok"), cfg.get("output"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except InputError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
