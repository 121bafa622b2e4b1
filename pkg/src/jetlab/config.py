"""Run configuration: JSON ingestion, validation and system construction."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .exprcalc import Const, as_expr, evaluate_array, to_string
from .grids import Box
from .jetgeom import SystemSpec, t_names, x_names
from .lsqsolve import BOUNDARIES, GridMap, HigherOrderSpec, MinimizeOptions, ProlongationDims, prolong
from .riemann import MetricField
from .sampling import SplitMix64
from .scenarios import (
    GroupIngredients, Scenario, YangMillsIngredients, build_group, build_orbits,
    build_pfaff, build_yang_mills,
)

SCENARIO_TYPES = ("orbits", "pfaff", "group", "yang_mills", "higher_order")
BUNDLED = (
    "rotation.json", "gradient.json", "sphere_orbits.json", "pfaff_closed.json",
    "pfaff_nonclosed.json", "group_commuting.json", "yang_mills_q2.json",
    "oscillator_order2.json",
)


class ConfigError(ValueError):
    pass


@dataclass
class VerifyOptions:
    samples: int = 100
    seed: int = 1
    tol: float = 1e-9
    exact_residual_tol: float = 1e-5


@dataclass
class RunConfig:
    name: str
    p: int
    n: int
    metric_h: list
    metric_phi: list
    X: list | None
    scenario: dict | None
    domain_min: list
    domain_max: list
    grid: list
    boundary: str = "fixed_initial"
    boundary_values: list | None = None
    init: list | None = None
    exact: list | None = None
    sample_t: tuple | None = None
    sample_x: tuple | None = None
    solver: MinimizeOptions = field(default_factory=MinimizeOptions)
    verify: VerifyOptions = field(default_factory=VerifyOptions)
    K: float = 1.0
    raw: dict = field(default_factory=dict)

    @property
    def box(self) -> Box:
        return Box(self.domain_min, self.domain_max, self.grid)

    @property
    def t_box(self) -> tuple:
        return self.sample_t or (self.domain_min, self.domain_max)


def _require(d: dict, key: str, where: str = "config"):
    if key not in d:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return d[key]


def _matrix(value, rows: int, cols: int, label: str) -> list:
    if not isinstance(value, list) or len(value) != rows or any(
        not isinstance(r, list) or len(r) != cols for r in value
    ):
        raise ConfigError(f"{label} must be a {rows}x{cols} array")
    return [[str(v) for v in r] for r in value]


def _vector(value, size: int, label: str, kind=float) -> list:
    if not isinstance(value, list) or len(value) != size:
        raise ConfigError(f"{label} must be a list of {size} entries")
    try:
        return [kind(v) for v in value]
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{label}: {err}") from err


def _box_pair(d: dict, size: int, label: str) -> tuple:
    lo = _vector(_require(d, "min", label), size, f"{label}.min")
    hi = _vector(_require(d, "max", label), size, f"{label}.max")
    for k, (a, b) in enumerate(zip(lo, hi)):
        if not a < b:
            raise ConfigError(f"{label}: min must be below max on axis {k + 1}")
    return lo, hi


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    name = str(data.get("name", "run"))
    dims = _require(data, "dims")
    p = int(_require(dims, "p", "dims"))
    scen = data.get("scenario")
    if (scen is None) == ("X" not in data):
        raise ConfigError("exactly one of 'X' or 'scenario' must be present")
    if scen is not None and scen.get("type") not in SCENARIO_TYPES:
        raise ConfigError(f"scenario.type must be one of {SCENARIO_TYPES}")
    if scen is not None and scen["type"] == "yang_mills":
        q = int(_require(scen, "q", "scenario"))
        n_default = p * q * (q - 1) // 2
    else:
        n_default = None
    n = int(dims.get("n", n_default if n_default is not None else 0))
    if p < 1 or n < 1:
        raise ConfigError("dims.p and dims.n must be positive")
    if n_default is not None and n != n_default:
        raise ConfigError(f"dims.n must equal p*q(q-1)/2 = {n_default} for yang_mills")
    metric_h = _matrix(_require(data, "metric_h"), p, p, "metric_h")
    metric_phi = _matrix(_require(data, "metric_phi"), n, n, "metric_phi")
    X = _matrix(data["X"], n, p, "X") if "X" in data else None

    domain = _require(data, "domain")
    dmin, dmax = _box_pair(domain, p, "domain")
    grid = _vector(_require(data, "grid"), p, "grid", int)
    if any(g < 5 for g in grid):
        raise ConfigError("grid sizes must be at least 5")

    bnd = data.get("boundary", {})
    btype = bnd.get("type", "fixed_initial")
    if btype not in BOUNDARIES:
        raise ConfigError(f"boundary.type must be one of {BOUNDARIES}")
    sample = data.get("sample_box", {})
    sample_t = _box_pair(sample["t"], p, "sample_box.t") if "t" in sample else None
    sample_x = None
    if "x" in sample:
        xs = sample["x"]
        size = len(_require(xs, "min", "sample_box.x"))
        sample_x = _box_pair(xs, size, "sample_box.x")
    try:
        solver = MinimizeOptions.from_dict(data.get("solver"))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"solver: {err}") from err
    ver = data.get("verify", {})
    verify = VerifyOptions(
        samples=int(ver.get("samples", 100)),
        seed=int(ver.get("seed", 1)),
        tol=float(ver.get("tol", 1e-9)),
        exact_residual_tol=float(ver.get("exact_residual_tol", 1e-5)),
    )
    K = float(data.get("einstein", {}).get("K", 1.0))
    if K == 0.0:
        raise ConfigError("einstein.K must be non-zero")
    return RunConfig(
        name=name, p=p, n=n, metric_h=metric_h, metric_phi=metric_phi, X=X,
        scenario=scen, domain_min=dmin, domain_max=dmax, grid=grid, boundary=btype,
        boundary_values=bnd.get("values"), init=data.get("init"), exact=data.get("exact"),
        sample_t=sample_t, sample_x=sample_x, solver=solver, verify=verify, K=K, raw=data,
    )


def bundled_path(name: str):
    return resources.files("jetlab").joinpath("configs", name)


def read_config(path: str | Path) -> RunConfig:
    """Load a config file; bare names of bundled configs are accepted."""
    p = Path(path)
    stem = p.name if p.suffix == ".json" else p.name + ".json"
    if not p.exists() and stem in BUNDLED and str(p) == p.name:
        text = bundled_path(stem).read_text()
    else:
        try:
            text = p.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read {path}: {err.strerror}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from err
    return parse_config(data)


# ---------------------------------------------------------------------------
# building systems


@dataclass
class Built:
    scenario: Scenario
    dims: ProlongationDims | None = None

    @property
    def sys(self) -> SystemSpec:
        return self.scenario.sys


def _pair_key(key: str, label: str) -> tuple[int, int]:
    try:
        a, b = (int(v) - 1 for v in key.split(","))
    except ValueError as err:
        raise ConfigError(f"{label} keys look like '1,2'; got {key!r}") from err
    return a, b


def _require_unit(g: MetricField, label: str, kind: str) -> None:
    """Scenarios that fix a one-dimensional metric to (1) must not be handed another."""
    e = g.entries[0][0]
    if not (isinstance(e, Const) and e.value == 1.0):
        raise ConfigError(f"{label} must be [[\"1\"]] for {kind} systems, got [[{to_string(e)!r}]]")


def build(cfg: RunConfig) -> Built:
    ts = t_names(cfg.p)
    h = MetricField(ts, cfg.metric_h)
    sc = cfg.scenario
    if sc is None:
        phi = MetricField(x_names(cfg.n), cfg.metric_phi)
        return Built(Scenario(SystemSpec(cfg.p, cfg.n, h, phi, cfg.X, cfg.name), "custom"))
    kind = sc["type"]
    phi = MetricField(x_names(cfg.n), cfg.metric_phi)
    if kind == "orbits":
        if cfg.p != 1:
            raise ConfigError("orbit systems have p = 1")
        _require_unit(h, "metric_h", kind)
        return Built(build_orbits(_require(sc, "xi", "scenario"), phi, cfg.name))
    if kind == "pfaff":
        if cfg.n != 1:
            raise ConfigError("Pfaffian systems have n = 1")
        _require_unit(phi, "metric_phi", kind)
        return Built(build_pfaff(_require(sc, "A", "scenario"), h, cfg.name))
    if kind == "group":
        xi = _require(sc, "xi", "scenario")
        A = _require(sc, "A", "scenario")
        return Built(build_group(GroupIngredients(len(xi), xi, A), h, phi, cfg.name))
    if kind == "yang_mills":
        q = int(sc["q"])
        f = {_pair_key(k, "scenario.f"): v for k, v in sc.get("f", {}).items()}
        F = {_pair_key(k, "scenario.F"): v for k, v in sc.get("F", {}).items()}
        ing = YangMillsIngredients(q, cfg.p, f, F, h)
        return Built(build_yang_mills(ing, cfg.name))
    # higher order
    r = int(_require(sc, "r", "scenario"))
    # dims.n and metric_phi describe the base manifold; the built system
    # lives on the prolonged one
    spec = HigherOrderSpec(r, cfg.p, cfg.n, dict(_require(sc, "rhs", "scenario")), h, phi, cfg.name)
    sys, dims = prolong(spec)
    return Built(Scenario(sys, "higher_order"), dims)


# ---------------------------------------------------------------------------
# sampling and maps


def sample_points(cfg: RunConfig, sys: SystemSpec, count: int, seed: int):
    """Seeded (t, x, xdot) arrays: shapes (N, p), (N, n), (N, n, p)."""
    rng = SplitMix64(seed)
    tlo, thi = cfg.t_box
    if cfg.sample_x is not None and len(cfg.sample_x[0]) == sys.n:
        xlo, xhi = cfg.sample_x
    else:
        xlo, xhi = [-1.0] * sys.n, [1.0] * sys.n
    T = np.empty((count, sys.p))
    Xs = np.empty((count, sys.n))
    Y = np.empty((count, sys.n, sys.p))
    for k in range(count):
        T[k] = rng.box(tlo, thi)
        Xs[k] = rng.box(xlo, xhi)
        Y[k] = rng.uniform(-1.0, 1.0, (sys.n, sys.p))
    return T, Xs, Y


def x_center_radius(cfg: RunConfig, sys: SystemSpec):
    if cfg.sample_x is not None and len(cfg.sample_x[0]) == sys.n:
        lo, hi = np.array(cfg.sample_x[0]), np.array(cfg.sample_x[1])
    else:
        lo, hi = -np.ones(sys.n), np.ones(sys.n)
    return 0.5 * (lo + hi), 0.4 * (hi - lo)


def map_from_exprs(exprs, box: Box, sys: SystemSpec, boundary: str, label: str) -> GridMap:
    if not isinstance(exprs, list) or len(exprs) != sys.n:
        raise ConfigError(f"{label} must list {sys.n} expressions over {sys.t_names}")
    es = [as_expr(str(e), sys.t_names) for e in exprs]
    t = box.nodes()
    env = {name: t[:, k] for k, name in enumerate(sys.t_names)}
    vals = np.stack([evaluate_array(e, env, (len(t),)) for e in es], axis=-1)
    return GridMap(box, vals.reshape(box.shape + (sys.n,)), boundary)


def initial_map(cfg: RunConfig, sys: SystemSpec) -> GridMap:
    src = cfg.init if cfg.init is not None else cfg.exact
    if src is None:
        raise ConfigError("solve needs an 'init' (or 'exact') map")
    m = map_from_exprs(src, cfg.box, sys, cfg.boundary, "init")
    if cfg.boundary_values is not None:
        pinned = map_from_exprs(cfg.boundary_values, cfg.box, sys, cfg.boundary, "boundary.values")
        mask = m.pinned()
        m.values[mask] = pinned.values[mask]
    return m
