"""Command-line entry point: ``jetlab analyze|verify|solve|reduce <config.json>``.

Exit codes: 0 success, 1 quantitative failure (a hard check failed or the
solver did not converge), 2 input error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Built, ConfigError, RunConfig, build, initial_map, map_from_exprs, read_config, sample_points
from .exprcalc import EvalError, ExprSyntaxError, UnknownVariable, to_string
from .fieldtheory import einstein_report, em_field, sasakian_metric
from .grids import Box, DegenerateGrid
from .jetgeom import (
    JetPoint, SystemSpecError, cartan_connection, drift_sign_report, nonlinear_connection,
    spray, torsion,
)
from .lsqsolve import InvalidOrder, LineSearchFailure, el_residual, energy, minimize, node_lagrangian
from .riemann import MetricError, SingularMetric, curvature
from .scenarios import NonConstantBase, NonSkew
from .verification import Report, run_verify

INPUT_ERRORS = (
    ConfigError, ExprSyntaxError, UnknownVariable, MetricError, SystemSpecError, NonSkew,
    NonConstantBase, InvalidOrder, DegenerateGrid,
)


# ---------------------------------------------------------------------------
# deterministic serialization


def _num(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    if v == int(v) and abs(v) < 1e16:
        return f"{v:.1f}" if abs(v) < 1e15 else format(v, ".17g")
    return format(v, ".17g")


def dumps(obj, indent: int = 2, level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def indexed(a) -> dict:
    """Array as {"i,j,...": value} with 1-based index tuples, row-major."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return {"": float(a)}
    return {",".join(str(k + 1) for k in idx): float(a[idx]) for idx in np.ndindex(a.shape)}


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: RunConfig, built: Built, args) -> int:
    sys_ = built.sys
    samples = args.samples if args.samples is not None else 1
    seed = args.seed if args.seed is not None else cfg.verify.seed
    T, Xs, Y = sample_points(cfg, sys_, samples, seed)
    points = []
    for q in range(samples):
        pt = JetPoint(T[q], Xs[q], Y[q])
        canonical, induced = nonlinear_connection(sys_, pt)
        Hc, gam = cartan_connection(sys_, pt)
        sp = spray(sys_, pt)
        tor = torsion(sys_, pt)
        points.append({
            "t": pt.t, "x": pt.x, "xdot": pt.xdot,
            "christoffel_h": indexed(Hc),
            "christoffel_phi": indexed(gam),
            "riemann_h": indexed(curvature(sys_.h, pt.t).riemann),
            "riemann_phi": indexed(curvature(sys_.phi, pt.x).riemann),
            "connection_canonical_M": indexed(canonical.M),
            "connection_canonical_N": indexed(canonical.N),
            "connection_induced_M": indexed(induced.M),
            "connection_induced_N": indexed(induced.N),
            "connection_sign": induced.report,
            "spray_H": indexed(sp.H),
            "spray_G": indexed(sp.G),
            "drift_sign": drift_sign_report(sys_, pt),
            "torsion_Rtt": indexed(tor.Rtt),
            "torsion_Rtj": indexed(tor.Rtj),
            "torsion_Rjk": indexed(tor.Rjk),
            "em_field": indexed(em_field(sys_, pt).F),
            "sasakian": indexed(sasakian_metric(sys_, pt).adapted),
        })
    out = {"name": cfg.name, "samples": samples, "seed": seed, "points": points}
    if sys_.n <= 3:
        er = einstein_report(sys_, cfg.K, _small_box(cfg.t_box), _small_box(_x_box(cfg, sys_)))
        out["einstein"] = {
            "K": er.K, "T_tt": indexed(er.Ttt), "T_xx": indexed(er.Txx),
            "zero_blocks": er.zeroBlocks, "conservation_residuals": list(er.conservationResiduals),
        }
    if built.dims is not None:
        out["prolongation"] = built.dims.as_dict()
    _write(Path(args.out) / "analysis.json", dumps(out))
    return 0


def _small_box(bounds) -> Box:
    lo, hi = bounds
    return Box(lo, hi, [9] * len(lo))


def _x_box(cfg: RunConfig, sys_):
    if cfg.sample_x is not None and len(cfg.sample_x[0]) == sys_.n:
        return cfg.sample_x
    return [-1.0] * sys_.n, [1.0] * sys_.n


def cmd_verify(cfg: RunConfig, built: Built, args) -> int:
    rep: Report = run_verify(cfg, built, args.samples, args.seed, args.tol)
    out = {
        "name": cfg.name,
        "pass": rep.passed,
        "maxwell_eq2_max_residual": rep.findings.get("maxwell_eq2_max_residual"),
        "checks": [c.as_dict() for c in rep.checks],
        "sign_findings": {
            "drift_F": rep.findings.get("drift_sign"),
            "connection_N": rep.findings.get("connection_sign"),
            "maxwell_eq1": rep.findings.get("maxwell_eq1"),
        },
        "findings": {k: v for k, v in rep.findings.items()
                     if k not in ("drift_sign", "connection_sign", "maxwell_eq1", "maxwell_eq2_max_residual")},
    }
    _write(Path(args.out) / "report.json", dumps(out))
    for c in rep.checks:
        flag = "PASS" if c.passed else ("FAIL" if c.hard else "info")
        print(f"{flag:4}  {c.name:45} {c.max_residual:.3e}  (tol {c.tolerance:.1e})")
    return 0 if rep.passed else 1


def _write_solution(out: Path, sys_, m, summary: dict) -> None:
    L = node_lagrangian(sys_, m).reshape(-1)
    t = m.box.nodes()
    x = m.values.reshape(-1, sys_.n)
    header = ",".join(sys_.t_names + sys_.x_names + ["L"])
    lines = [header]
    for k in range(len(t)):
        row = list(t[k]) + list(x[k]) + [L[k]]
        lines.append(",".join(format(float(v), ".17g") for v in row))
    out.mkdir(parents=True, exist_ok=True)
    (out / "map.csv").write_text("\n".join(lines) + "\n")
    _write(out / "summary.json", dumps(summary))


def cmd_solve(cfg: RunConfig, built: Built, args) -> int:
    sys_ = built.sys
    init = initial_map(cfg, sys_)
    E0 = energy(sys_, init)
    status = 0
    try:
        res = minimize(sys_, init, cfg.solver)
        reason = "converged" if res.converged else "max_iters"
        if not res.converged:
            status = 1
    except LineSearchFailure as err:
        res = err.result
        reason = "line_search_failure"
        status = 1
    final = res.final
    summary = {
        "name": cfg.name,
        "status": reason,
        "initial_energy": E0,
        "final_energy": res.trace[-1],
        "iterations": res.iterations,
        "grad_norm": res.grad_norm,
        "final_max_el_residual": float(np.max(np.abs(el_residual(sys_, final)))),
    }
    if cfg.exact is not None:
        exact = map_from_exprs(cfg.exact, cfg.box, sys_, cfg.boundary, "exact")
        summary["max_error_vs_exact"] = float(np.max(np.abs(final.values - exact.values)))
    _write_solution(Path(args.out), sys_, final, summary)
    print(f"{reason}: energy {E0:.6e} -> {res.trace[-1]:.6e} in {res.iterations} iterations")
    return status


def cmd_reduce(cfg: RunConfig, built: Built, args) -> int:
    if built.dims is None:
        raise ConfigError("reduce needs a 'higher_order' scenario")
    sys_ = built.sys
    raw = dict(cfg.raw)
    raw.pop("scenario", None)
    raw["name"] = f"{cfg.name}_reduced"
    raw["dims"] = {"p": sys_.p, "n": sys_.n}
    raw["metric_phi"] = [[to_string(e) for e in row] for row in sys_.phi.entries]
    raw["metric_h"] = [[to_string(e) for e in row] for row in sys_.h.entries]
    raw["X"] = [[to_string(e) for e in row] for row in sys_.X]
    raw["prolongation"] = built.dims.as_dict()
    if "sample_box" in raw and "x" in raw["sample_box"]:
        xs = raw["sample_box"]["x"]
        if len(xs.get("min", [])) != sys_.n:
            raw["sample_box"] = {k: v for k, v in raw["sample_box"].items() if k != "x"}
    path = Path(args.out) / f"{cfg.name}_reduced.json"
    _write(path, dumps(raw))
    d = built.dims
    print(f"n_tilde = {d.n_tilde}, dim J1 = {d.dim_jet} (binomial count: {d.lemma_total_space}); wrote {path}")
    return 0


COMMANDS = {"analyze": cmd_analyze, "verify": cmd_verify, "solve": cmd_solve, "reduce": cmd_reduce}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jetlab", description="Least-squares jet geometry of first-order PDE systems.")
    ap.add_argument("--version", action="version", version=f"jetlab {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="config JSON path, or the name of a bundled config")
    ap.add_argument("--out", default=".", help="output directory (default: current directory)")
    ap.add_argument("--samples", type=int, default=None, help="number of seeded jet points")
    ap.add_argument("--seed", type=int, default=None, help="sampling seed")
    ap.add_argument("--tol", type=float, default=None, help="tolerance for pointwise identities")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.samples is not None and args.samples < 1:
        print("jetlab: error: --samples must be positive", file=sys.stderr)
        return 2
    try:
        cfg = read_config(args.config)
        built = build(cfg)
        _check_metrics(cfg, built)
        return COMMANDS[args.command](cfg, built, args)
    except INPUT_ERRORS as err:
        print(f"jetlab: error: {err}", file=sys.stderr)
        return 2
    except (SingularMetric, EvalError) as err:
        print(f"jetlab: numerical failure: {err}", file=sys.stderr)
        return 1


def _check_metrics(cfg: RunConfig, built: Built) -> None:
    """Symmetry and positive definiteness at the seeded sample points."""
    sys_ = built.sys
    T, Xs, _ = sample_points(cfg, sys_, 20, cfg.verify.seed)
    try:
        sys_.h.check(T)
    except MetricError as err:
        raise MetricError(f"metric_h: {err}") from err
    try:
        sys_.phi.check(Xs)
    except MetricError as err:
        raise MetricError(f"metric_phi: {err}") from err


if __name__ == "__main__":
    raise SystemExit(main())
