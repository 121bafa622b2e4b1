"""Least-squares Lagrangian, discrete energy, Euler-Lagrange residuals,
the energy minimizer and the order-r to order-1 prolongation.

Maps T -> M live on uniform tensor grids (:class:`GridMap`).  First
derivatives use second-order central differences with one-sided second-order
stencils at the faces; the energy uses trapezoid weights per axis.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels
from .exprcalc import as_expr, eval_table, substitute, Var
from .grids import Box, DegenerateGrid
from .jetgeom import JetPoint, SystemSpec, _local, electrodynamics_batch, spray_batch, t_names
from .riemann import MetricField, invert_batch

BOUNDARIES = ("fixed_initial", "fixed_all")


class LineSearchFailure(RuntimeError):
    """No admissible step decreased the energy; ``result`` holds the last iterate."""

    def __init__(self, message: str, result: "MinimizeResult"):
        super().__init__(message)
        self.result = result


class InvalidOrder(ValueError):
    pass


@dataclass
class GridMap:
    box: Box
    values: np.ndarray  # (*shape, n)
    boundary: str = "fixed_initial"

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.values.shape[:-1] != self.box.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.box.shape}"
            )

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def p(self) -> int:
        return self.box.dim

    def copy(self, values=None) -> "GridMap":
        return GridMap(self.box, self.values.copy() if values is None else values, self.boundary)

    def pinned(self) -> np.ndarray:
        mask = np.zeros(self.box.shape, dtype=bool)
        if self.boundary == "fixed_initial":
            mask[(0,) + (slice(None),) * (self.p - 1)] = True
        else:
            for a in range(self.p):
                idx = [slice(None)] * self.p
                idx[a] = 0
                mask[tuple(idx)] = True
                idx[a] = -1
                mask[tuple(idx)] = True
        return mask

    @classmethod
    def from_function(cls, box: Box, fn: Callable, boundary: str = "fixed_initial") -> "GridMap":
        """Sample ``fn(t)`` (t of shape (N, p), returning (N, n)) on the grid."""
        t = box.nodes()
        vals = np.asarray(fn(t), dtype=float)
        return cls(box, vals.reshape(box.shape + (vals.shape[-1],)), boundary)


def _check_system(sys: SystemSpec, m: GridMap) -> None:
    if m.p != sys.p or m.n != sys.n:
        raise ValueError("grid map dimensions do not match the system")
    m.box.check()


def jet_derivatives(m: GridMap) -> np.ndarray:
    """xdot at every node, shape (*shape, n, p)."""
    sp_ = m.box.spacing
    return np.stack([_kernels.diff1(m.values, sp_[a], axis=a) for a in range(m.p)], axis=-1)


def second_derivatives(m: GridMap) -> np.ndarray:
    """x_ab at interior nodes, shape (*interior, n, p, p)."""
    box = m.box
    inner = box.interior()
    p = m.p
    out = np.empty(tuple(s - 2 for s in box.shape) + (m.n, p, p))
    for a in range(p):
        sl = list(inner)
        sl[a] = slice(None)
        out[..., a, a] = _kernels.diff2(m.values, box.spacing[a], axis=a)[tuple(sl)]
        for b in range(a + 1, p):
            d = _kernels.diff1(_kernels.diff1(m.values, box.spacing[a], axis=a), box.spacing[b], axis=b)
            out[..., a, b] = out[..., b, a] = d[inner]
    return out


# ---------------------------------------------------------------------------
# pointwise Lagrangian


def lagrangian_forms(sys: SystemSpec, point: JetPoint) -> tuple[float, float]:
    """(expanded form, squared-distance form) of the least-squares Lagrangian."""
    ld = _local(sys, point)
    y = point.xdot[None]
    U, Phi, _ = electrodynamics_batch(ld)
    quad = np.einsum("zab,zij,zia,zjb->z", ld.hd.ginv, ld.pd.g, y, y)
    expanded = quad + np.einsum("zai,zia->z", U, y) + Phi
    dist = _kernels.lsq_density(ld.hd.ginv, ld.pd.g, y - ld.X)
    return float(expanded[0]), float(dist[0])


def lagrangian_at(sys: SystemSpec, point: JetPoint) -> float:
    return lagrangian_forms(sys, point)[1]


# ---------------------------------------------------------------------------
# grid evaluation


class _GridEvaluator:
    """Caches everything that depends only on t for repeated energy calls."""

    def __init__(self, sys: SystemSpec, m: GridMap):
        _check_system(sys, m)
        self.sys = sys
        self.box = m.box
        self.t = m.box.nodes()
        hv = sys.h.values(self.t)
        self.hinv = invert_batch(hv)
        self.sqrt_h = np.sqrt(np.linalg.det(hv))
        self.weights = m.box.trapezoid_weights().reshape(-1) * self.sqrt_h
        self.t_env = {name: self.t[:, k] for k, name in enumerate(sys.t_names)}

    def _env(self, x):
        env = dict(self.t_env)
        env.update({name: x[:, k] for k, name in enumerate(self.sys.x_names)})
        return env

    def density(self, values: np.ndarray) -> np.ndarray:
        """L at every node (flattened)."""
        m = GridMap(self.box, values, "fixed_all")
        x = values.reshape(-1, self.sys.n)
        y = jet_derivatives(m).reshape(len(x), self.sys.n, self.sys.p)
        env = self._env(x)
        X = eval_table(self.sys.X, env, len(x))
        phi = self.sys.phi.values(x)
        return _kernels.lsq_density(self.hinv, phi, y - X)

    def energy(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, self.density(values)))

    def partials(self, values: np.ndarray):
        """(dL/dx, dL/dy) at all nodes, exact in x and y."""
        m = GridMap(self.box, values, "fixed_all")
        x = values.reshape(-1, self.sys.n)
        y = jet_derivatives(m).reshape(len(x), self.sys.n, self.sys.p)
        env = self._env(x)
        X = eval_table(self.sys.X, env, len(x))
        dX = eval_table(self.sys.dX_dx, env, len(x))
        phi = self.sys.phi.values(x)
        dphi = self.sys.phi.first_derivatives(x)
        return _kernels.lsq_partials(self.hinv, phi, dphi, dX, y - X)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Exact gradient of :meth:`energy` with respect to node values."""
        dLdx, dLdy = self.partials(values)
        shape = self.box.shape
        n, p = self.sys.n, self.sys.p
        w = self.weights[:, None]
        g = (w * dLdx).reshape(shape + (n,))
        for a in range(p):
            v = (w * dLdy[:, :, a]).reshape(shape + (n,))
            g = g + _kernels.diff1_adjoint(v, self.box.spacing[a], axis=a)
        return g


def energy(sys: SystemSpec, m: GridMap) -> float:
    return _GridEvaluator(sys, m).energy(m.values)


def node_lagrangian(sys: SystemSpec, m: GridMap) -> np.ndarray:
    """L at every node, shaped like the grid."""
    return _GridEvaluator(sys, m).density(m.values).reshape(m.box.shape)


def el_residual(sys: SystemSpec, m: GridMap, variant: str = "bracket", stencil: str = "o2") -> np.ndarray:
    """h^ab (x_ab + 2H + 2G) at interior nodes, shape (*interior, n).

    ``stencil="o4"`` takes the jet data from fourth-order differences instead
    of the second-order ones the energy is built on.
    """
    _check_system(sys, m)
    p = sys.p
    inner = m.box.interior()
    if stencil == "o2":
        xdd, yall = second_derivatives(m), jet_derivatives(m)
    elif stencil == "o4":
        xdd, yall = _jets_o4(m)
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    lead = xdd.shape[:-3]
    y = yall[inner].reshape(-1, sys.n, p)
    t = m.box.mesh()[inner].reshape(-1, p)
    x = m.values[inner].reshape(-1, sys.n)
    ld = sys.local(t, x)
    s = spray_batch(ld, y, variant)
    xdd = xdd.reshape(-1, sys.n, sys.p, sys.p)
    r = np.einsum("zab,ziab->zi", ld.hd.ginv, xdd + 2.0 * s.H + 2.0 * s.G)
    return r.reshape(lead + (sys.n,))


def lowered_el_residual(sys: SystemSpec, m: GridMap, variant: str = "bracket",
                        stencil: str = "o2") -> np.ndarray:
    """-sqrt(h) phi_ij R^j: the spray residual in the oracle's normalization."""
    r = el_residual(sys, m, variant, stencil)
    inner = m.box.interior()
    t = m.box.mesh()[inner].reshape(-1, sys.p)
    x = m.values[inner].reshape(-1, sys.n)
    sqrt_h = np.sqrt(np.linalg.det(sys.h.values(t)))
    phi = sys.phi.values(x)
    low = -sqrt_h[:, None] * np.einsum("zij,zj->zi", phi, r.reshape(-1, sys.n))
    return low.reshape(r.shape)


_O4_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_O4_FACE = np.array(
    [
        [-25.0, 48.0, -36.0, 16.0, -3.0],
        [-3.0, -10.0, 18.0, -6.0, 1.0],
    ]
) / 12.0


def diff1_o4(u, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order first derivative with one-sided five-point faces."""
    u = np.moveaxis(np.asarray(u, dtype=float), axis, 0)
    m = u.shape[0]
    if m < 5:
        raise DegenerateGrid("fourth-order stencils need at least 5 nodes")
    out = np.empty_like(u)
    c = _O4_CENTRAL
    out[2:-2] = c[0] * u[:-4] + c[1] * u[1:-3] + c[3] * u[3:-1] + c[4] * u[4:]
    for k in range(2):
        out[k] = np.tensordot(_O4_FACE[k], u[:5], axes=1)
        out[m - 1 - k] = -np.tensordot(_O4_FACE[k], u[::-1][:5], axes=1)
    return np.moveaxis(out / h, 0, axis)


def _jets_o4(m: GridMap):
    """Fourth-order (x_ab at interior nodes, xdot at every node)."""
    sp_ = m.box.spacing
    p = m.p
    first = [diff1_o4(m.values, sp_[a], axis=a) for a in range(p)]
    inner = m.box.interior()
    xdd = np.empty(tuple(s - 2 for s in m.box.shape) + (m.n, p, p))
    for a in range(p):
        for b in range(a, p):
            xdd[..., a, b] = xdd[..., b, a] = diff1_o4(first[a], sp_[b], axis=b)[inner]
    return xdd, np.stack(first, axis=-1)


def el_oracle_residual(sys: SystemSpec, m: GridMap) -> np.ndarray:
    """(dLh/dx - d_a dLh/dx_a) / 2 at interior nodes, with Lh = L sqrt(h).

    Partials in x and the jet coordinates are exact.  Jet coordinates and the
    t-divergence of the momentum use fourth-order stencils, so the oracle is
    discretised independently of (and more accurately than) the energy.
    """
    _check_system(sys, m)
    box = m.box
    n, p = sys.n, sys.p
    t = box.nodes()
    x = m.values.reshape(-1, n)
    y = np.stack([diff1_o4(m.values, box.spacing[a], axis=a) for a in range(p)], axis=-1)
    y = y.reshape(-1, n, p)
    ld = sys.local(t, x)
    sh = np.sqrt(np.linalg.det(ld.hd.g))[:, None]
    dLdx, dLdy = _kernels.lsq_partials(ld.hd.ginv, ld.pd.g, ld.pd.dg, ld.Xx, y - ld.X)
    out = (sh * dLdx).reshape(box.shape + (n,))
    for a in range(p):
        mom = (sh * dLdy[:, :, a]).reshape(box.shape + (n,))
        out = out - diff1_o4(mom, box.spacing[a], axis=a)
    return 0.5 * out[box.interior()]


def oracle_mismatch(sys: SystemSpec, m: GridMap, variant: str = "bracket",
                    oracle: np.ndarray | None = None) -> float:
    """Relative max-norm gap between the spray residual and the oracle.

    Both sides take fourth-order jet data.  A precomputed ``oracle`` (from
    :func:`el_oracle_residual`) may be passed to share it across variants.
    """
    a = lowered_el_residual(sys, m, variant, "o4")
    b = el_oracle_residual(sys, m) if oracle is None else oracle
    scale = max(float(np.max(np.abs(b))), float(np.max(np.abs(a))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


# ---------------------------------------------------------------------------
# minimizer


PRECONDITIONERS = ("gauss_newton", "none")


@dataclass
class MinimizeOptions:
    max_iters: int = 5000
    grad_tol: float = 1e-10
    step0: float = 1.0
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    preconditioner: str = "gauss_newton"

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.step0 <= 0.0 or self.max_iters < 0:
            raise ValueError("step0 must be positive and max_iters non-negative")

    @classmethod
    def from_dict(cls, d: dict | None) -> "MinimizeOptions":
        d = dict(d or {})
        unknown = set(d) - {"max_iters", "grad_tol", "step0", "backtrack", "armijo_c", "preconditioner"}
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MinimizeResult:
    final: GridMap
    trace: list = field(default_factory=list)
    converged: bool = False
    grad_norm: float = math.inf

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


def _diff1_matrix(m: int, h: float) -> sp.csr_matrix:
    D = sp.lil_matrix((m, m))
    c = 1.0 / (2.0 * h)
    for j in range(1, m - 1):
        D[j, j - 1], D[j, j + 1] = -c, c
    D[0, :3] = np.array([-3.0, 4.0, -1.0]) * c
    D[m - 1, m - 3:] = np.array([1.0, -4.0, 3.0]) * c
    return D.tocsr()


def _node_blocks(blocks: np.ndarray) -> sp.bsr_matrix:
    """Block-diagonal matrix with one (n, n) block per node."""
    N, n, _ = blocks.shape
    return sp.bsr_matrix((blocks, np.arange(N), np.arange(N + 1)), shape=(N * n, N * n))


def _preconditioner(ev: _GridEvaluator, values: np.ndarray, free: np.ndarray):
    """Factorized Gauss-Newton matrix of the energy, frozen at ``values``.

    With r_a = D_a x - X_a the energy is sum w h^ab phi_ij r^i_a r^j_b, whose
    Gauss-Newton Hessian is 2 sum_ab R_a^T M_ab R_b for R_a = D_a - dX_a/dx.
    A small multiple of the mass matrix keeps the factorization regular.  The
    matrix is built once, so each iteration is a plain preconditioned descent
    step with no curvature memory.
    """
    sys, box = ev.sys, ev.box
    n, p = sys.n, sys.p
    x = values.reshape(-1, n)
    N = len(x)
    env = ev._env(x)
    dX = eval_table(sys.dX_dx, env, N)  # [z, i, a, k]
    phi = sys.phi.values(x)
    I_n = sp.identity(n, format="csr")
    R = []
    for a, (m, h) in enumerate(zip(box.shape, box.spacing)):
        mats = [sp.identity(s_, format="csr") for s_ in box.shape]
        mats[a] = _diff1_matrix(m, h)
        D = mats[0]
        for M in mats[1:]:
            D = sp.kron(D, M, format="csr")
        R.append((sp.kron(D, I_n, format="csr") - _node_blocks(dX[:, :, a, :])).tocsr())
    W = ev.weights
    P = sp.kron(sp.diags(1e-6 * W), I_n, format="csr")
    for a in range(p):
        for b in range(p):
            Mab = _node_blocks((W * ev.hinv[:, a, b])[:, None, None] * phi)
            P = P + R[a].T @ Mab @ R[b]
    idx = np.flatnonzero(np.repeat(free, n))
    return splu(sp.csc_matrix(2.0 * P[idx][:, idx]))


def minimize(sys: SystemSpec, init: GridMap, opts: MinimizeOptions | dict | None = None) -> MinimizeResult:
    """Gradient descent with Armijo backtracking.

    The descent direction is the gradient, optionally mapped through the fixed
    Gauss-Newton preconditioner.  Pinned nodes are never written.  The stopping test uses the max-norm of
    the raw energy gradient over free nodes.
    """
    if not isinstance(opts, MinimizeOptions):
        opts = MinimizeOptions.from_dict(opts)
    ev = _GridEvaluator(sys, init)
    free = ~init.pinned().reshape(-1)
    if opts.preconditioner == "gauss_newton":
        solve = _preconditioner(ev, init.values, free).solve
    else:
        def solve(v):
            return v
    n = sys.n
    u = init.values.copy()
    flat = u.reshape(-1, n)  # view
    E = ev.energy(u)
    trace = [E]

    def result(converged, gnorm):
        return MinimizeResult(init.copy(u.copy()), list(trace), converged, gnorm)

    for _ in range(opts.max_iters + 1):
        g = ev.gradient(u).reshape(-1, n)[free]
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= opts.grad_tol:
            return result(True, gnorm)
        if len(trace) > opts.max_iters:
            return result(False, gnorm)
        s = solve(g.reshape(-1)).reshape(g.shape)
        slope = float(np.sum(g * s))
        step = opts.step0
        while True:
            trial = u.copy()
            tflat = trial.reshape(-1, n)
            tflat[free] = flat[free] - step * s
            Et = ev.energy(trial)
            if Et <= E - opts.armijo_c * step * slope:
                break
            step *= opts.backtrack
            if step < 1e-16:
                raise LineSearchFailure(
                    "no step above 1e-16 decreases the energy", result(False, gnorm)
                )
        u = trial
        flat = u.reshape(-1, n)
        E = Et
        trace.append(E)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# test maps


def random_smooth_map(seed: int, box: Box, center, radius, n: int, modes: int = 3,
                      max_freq: float = 2.0) -> GridMap:
    """Seeded sum of ``modes`` plane waves per component, frequencies in
    [0.25, max_freq] rad per unit t.  Components stay within center +/- radius."""
    rng = np.random.default_rng(seed)
    t = box.nodes()
    center = np.broadcast_to(np.asarray(center, dtype=float), (n,))
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n,))
    vals = np.empty((len(t), n))
    for i in range(n):
        acc = np.zeros(len(t))
        amp = rng.uniform(-1.0, 1.0, modes)
        amp /= max(np.sum(np.abs(amp)), 1.0)
        for k in range(modes):
            freq = rng.uniform(0.25, max_freq, box.dim) * rng.choice([-1.0, 1.0], box.dim)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            acc += amp[k] * np.sin(t @ freq + phase)
        vals[:, i] = center[i] + radius[i] * acc
    return GridMap(box, vals.reshape(box.shape + (n,)), "fixed_initial")


# ---------------------------------------------------------------------------
# prolongation

_JET = re.compile(r"x(\d+)((?:_\d+)*)\Z")


def jet_name(i: int, beta: tuple) -> str:
    """Name of x^i_beta with 0-based i and 0-based multiset beta."""
    return f"x{i + 1}" + "".join(f"_{b + 1}" for b in beta)


def parse_jet_name(name: str) -> tuple[int, tuple] | None:
    m = _JET.match(name)
    if not m:
        return None
    idx = tuple(int(v) - 1 for v in m.group(2).split("_")[1:])
    return int(m.group(1)) - 1, tuple(sorted(idx))


def multisets(p: int, l: int) -> list[tuple]:
    return list(itertools.combinations_with_replacement(range(p), l))


@dataclass
class HigherOrderSpec:
    """x^i_{b1..br} = rhs over t and the jet coordinates of order < r.

    ``rhs`` maps the canonical (sorted) order-r jet name to an expression;
    keying by the full multi-index makes the right-hand sides symmetric.
    """

    r: int
    p: int
    n: int
    rhs: dict
    h: MetricField | None = None
    phi: MetricField | None = None
    name: str = ""

    def coordinates(self) -> list[tuple[int, int, tuple]]:
        """(l, i, beta) for every extended coordinate, in storage order."""
        return [
            (l, i, beta)
            for l in range(self.r)
            for i in range(self.n)
            for beta in multisets(self.p, l)
        ]


@dataclass
class ProlongationDims:
    n_tilde: int
    dim_jet: int
    lemma_total_space: int
    lemma_jet: int
    coordinates: list

    def as_dict(self) -> dict:
        return {
            "n_tilde": self.n_tilde,
            "dim_J1": self.dim_jet,
            "lemma_total_space_binomial": self.lemma_total_space,
            "dim_J1_binomial": self.lemma_jet,
            "coordinates": self.coordinates,
        }


def prolong(spec: HigherOrderSpec) -> tuple[SystemSpec, ProlongationDims]:
    if spec.r < 1:
        raise InvalidOrder(f"order must be at least 1, got {spec.r}")
    p, n, r = spec.p, spec.n, spec.r
    coords = spec.coordinates()
    index = {(i, beta): k for k, (_, i, beta) in enumerate(coords)}
    nt = len(coords)
    tn = t_names(p)
    new_names = [f"x{k + 1}" for k in range(nt)]
    old_names = [jet_name(i, beta) for _, i, beta in coords]
    rename = {old: Var(new) for old, new in zip(old_names, new_names)}

    rhs = {}
    for key, value in spec.rhs.items():
        parsed = parse_jet_name(key)
        if parsed is None or len(parsed[1]) != r:
            raise InvalidOrder(f"right-hand side key {key!r} is not an order-{r} jet coordinate")
        e = as_expr(value, tn + old_names)
        rhs[parsed] = substitute(e, rename)

    X = []
    for l, i, beta in coords:
        row = []
        for a in range(p):
            up = tuple(sorted(beta + (a,)))
            if l < r - 1:
                row.append(Var(new_names[index[(i, up)]]))
            else:
                if (i, up) not in rhs:
                    raise InvalidOrder(f"missing right-hand side for {jet_name(i, up)}")
                row.append(rhs[(i, up)])
        X.append(row)

    h = spec.h or MetricField.identity(tn)
    if spec.phi is None:
        phi = MetricField.identity(new_names)
    else:
        base = spec.phi
        entries = [[as_expr(0.0, new_names)] * nt for _ in range(nt)]
        entries = [list(row) for row in entries]
        for a in range(nt):
            entries[a][a] = as_expr(1.0, new_names)
        for a in range(n):
            for b in range(n):
                entries[a][b] = base.entries[a][b]
        phi = MetricField(new_names, entries)
    sys = SystemSpec(p, nt, h, phi, X, spec.name or "prolonged")
    multiset_count = n * sum(math.comb(p + l - 1, l) for l in range(r))
    binom_count = n * sum(math.comb(p, l) for l in range(r))
    dims = ProlongationDims(
        n_tilde=multiset_count,
        dim_jet=p + (p + 1) * multiset_count,
        lemma_total_space=p + binom_count,
        lemma_jet=p + (p + 1) * binom_count,
        coordinates=old_names,
    )
    return sys, dims
