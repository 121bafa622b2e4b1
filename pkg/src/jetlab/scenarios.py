"""Builders for the standard system families.

Each builder returns a :class:`Scenario`: the first-order system together
with closed-form reference callbacks ("expected") paired with the generic
engine evaluation ("engine") for the verify command.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exprcalc import (
    Const, Expr, Var, add, as_expr, derivative, evaluate_array, mul, neg, sub, sum_exprs,
)
from .fieldtheory import em_field
from .jetgeom import (
    JetPoint, SystemSpec, SystemSpecError, _local, nonlinear_connection, t_names, torsion, x_names,
)
from .riemann import MetricField


class NonConstantBase(ValueError):
    """The base metric must be constant for the gauge scenario."""


class NonSkew(ValueError):
    """A matrix ingredient is not skew-symmetric."""


@dataclass
class Scenario:
    sys: SystemSpec
    kind: str
    # name -> (expected closed form, engine value); both callables of a JetPoint
    checks: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers shared by the closed forms


def _xi_cov(sys: SystemSpec, xi: Sequence[Expr], point: JetPoint) -> np.ndarray:
    """xi^i_||j = d_j xi^i + xi^m gamma^i_mj for a vector field over x."""
    ld = _local(sys, point)
    names = sys.x_names
    env = sys.env(point.t[None], point.x[None])
    dxi = np.array([[evaluate_array(derivative(e, v), env, (1,))[0] for v in names] for e in xi])
    val = np.array([evaluate_array(e, env, (1,))[0] for e in xi])
    return dxi + np.einsum("m,imj->ij", val, ld.pd.gam[0])


def _lowered_skew_part(phi: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """xi_i||j - xi_j||i with xi_i = phi_im xi^m."""
    low = phi @ cov
    return low - low.T


# ---------------------------------------------------------------------------
# orbits of a vector field


def build_orbits(xi, phi: MetricField, name: str = "orbits") -> Scenario:
    n = phi.dim
    xs = x_names(n)
    if len(xi) != n:
        raise SystemSpecError(f"orbit field needs {n} components, got {len(xi)}")
    xi = [as_expr(e, xs) for e in xi]
    h = MetricField.identity(t_names(1))
    sys = SystemSpec(1, n, h, phi, [[e] for e in xi], name)

    def em_expected(pt):
        ld = _local(sys, pt)
        return 0.5 * _lowered_skew_part(ld.pd.g[0], _xi_cov(sys, xi, pt))[None]

    def n_closed(pt, sign):
        # N^(i)_(1)j = gamma^i_jm xdot^m +/- (1/2)[xi^i_||j - phi^ir xi^s_||r phi_sj]
        ld = _local(sys, pt)
        cov = _xi_cov(sys, xi, pt)
        phi_, phinv = ld.pd.g[0], ld.pd.ginv[0]
        N0 = np.einsum("ijm,m->ij", ld.pd.gam[0], pt.xdot[:, 0])
        Fh = 0.5 * (cov - phinv @ cov.T @ phi_)
        return (N0 + sign * Fh)[:, None, :]

    def n_engine(pt):
        return nonlinear_connection(sys, pt)[1].N

    checks = {
        "em_field": (em_expected, lambda pt: em_field(sys, pt).F),
        "connection_N_minus": (lambda pt: n_closed(pt, -1.0), n_engine),
    }
    probes = {"connection_N_plus": (lambda pt: n_closed(pt, +1.0), n_engine)}
    return Scenario(sys, "orbits", checks, {"xi": xi, "probes": probes})


# ---------------------------------------------------------------------------
# Pfaffian systems


def build_pfaff(A, h: MetricField, name: str = "pfaff") -> Scenario:
    p = h.dim
    ts = t_names(p)
    if len(A) != p:
        raise SystemSpecError(f"Pfaffian form needs {p} components, got {len(A)}")
    A = [as_expr(e, ts) for e in A]
    phi = MetricField.identity(x_names(1))
    sys = SystemSpec(p, 1, h, phi, [A], name)
    checks = {
        "em_field": (lambda pt: np.zeros((p, 1, 1)), lambda pt: em_field(sys, pt).F),
        "connection_N": (
            lambda pt: np.zeros((1, p, 1)),
            lambda pt: nonlinear_connection(sys, pt)[1].N,
        ),
    }
    return Scenario(sys, "pfaff", checks, {"A": A})


# ---------------------------------------------------------------------------
# transformation groups


@dataclass
class GroupIngredients:
    c: int
    xi: list  # c lists of n Exprs over x
    A: list  # c lists of p Exprs over t

    def __post_init__(self):
        if self.c < 1:
            raise SystemSpecError("at least one generator is required")
        if len(self.xi) != self.c or len(self.A) != self.c:
            raise SystemSpecError("xi and A must each list c entries")


def build_group(ing: GroupIngredients, h: MetricField, phi: MetricField, name: str = "group") -> Scenario:
    p, n = h.dim, phi.dim
    ts, xs = t_names(p), x_names(n)
    if any(len(row) != n for row in ing.xi) or any(len(row) != p for row in ing.A):
        raise SystemSpecError(f"generators need {n} components and one-forms {p}")
    xi = [[as_expr(e, xs) for e in row] for row in ing.xi]
    A = [[as_expr(e, ts) for e in row] for row in ing.A]
    X = [
        [sum_exprs(mul(xi[k][i], A[k][a]) for k in range(ing.c)) for a in range(p)]
        for i in range(n)
    ]
    sys = SystemSpec(p, n, h, phi, X, name)

    def one_forms(pt):
        env = sys.env(pt.t[None], pt.x[None])
        return np.array([[evaluate_array(e, env, (1,))[0] for e in row] for row in A])

    def em_expected(pt):
        ld = _local(sys, pt)
        Aup = one_forms(pt) @ ld.hd.ginv[0]  # [k, a] = h^ab A^k_b
        skews = np.array([_lowered_skew_part(ld.pd.g[0], _xi_cov(sys, xi[k], pt)) for k in range(ing.c)])
        return 0.5 * np.einsum("ka,kij->aij", Aup, skews)

    def rtj_expected(pt):
        # (A^k_a//b / 2)[xi^i_k||j - phi^ir xi^s_k||r phi_sj]
        ld = _local(sys, pt)
        env = sys.env(pt.t[None], pt.x[None])
        dA = np.array([[[evaluate_array(derivative(e, v), env, (1,))[0] for v in ts] for e in row] for row in A])
        Acov = dA - np.einsum("km,mab->kab", one_forms(pt), ld.hd.gam[0])
        phi_, phinv = ld.pd.g[0], ld.pd.ginv[0]
        out = np.zeros((n, p, p, n))
        for k in range(ing.c):
            cov = _xi_cov(sys, xi[k], pt)
            bracket = cov - phinv @ cov.T @ phi_
            out += 0.5 * np.einsum("ab,ij->iabj", Acov[k], bracket)
        return out

    checks = {
        "em_field": (em_expected, lambda pt: em_field(sys, pt).F),
        "torsion_Rtj": (rtj_expected, lambda pt: torsion(sys, pt).Rtj),
    }
    return Scenario(sys, "group", checks, {"xi": xi, "A": A})


# ---------------------------------------------------------------------------
# constrained gauge potentials


def _lower_pairs(q: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(q) for b in range(a)]


@dataclass
class YangMillsIngredients:
    """Skew q x q matrix data; ``f[(a, b)]`` for a <= b, ``F[(a, b)]`` for a < b
    (0-based time indices).  Matrices are given as full q x q tables of
    expressions over t and the connection coordinates; missing keys are zero."""

    q: int
    p: int
    f: dict
    F: dict
    h: MetricField

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("fibre rank q must be at least 2")
        if self.h.dim != self.p:
            raise ValueError("h must be p x p")

    @property
    def m(self) -> int:
        return self.q * (self.q - 1) // 2

    @property
    def n(self) -> int:
        return self.p * self.m

    def coordinate(self, alpha: int, a: int, b: int) -> str:
        """Name of the (a, b) entry (a > b) of the alpha-th connection matrix."""
        return f"x{alpha * self.m + _lower_pairs(self.q).index((a, b)) + 1}"


def _check_constant(h: MetricField) -> None:
    if not h.is_constant:
        raise NonConstantBase("the base metric h must have constant entries")


def _skew_table(table, q: int, names: list[str], label: str, probe_env: dict) -> list[list[Expr]]:
    if len(table) != q or any(len(row) != q for row in table):
        raise NonSkew(f"{label} must be a {q}x{q} matrix")
    M = [[as_expr(e, names) for e in row] for row in table]
    for a in range(q):
        for b in range(a, q):
            s = evaluate_array(add(M[a][b], M[b][a]), probe_env, (len(next(iter(probe_env.values()))),))
            if np.any(np.abs(s) > 1e-12):
                raise NonSkew(f"{label} is not skew-symmetric at entries ({a + 1},{b + 1})/({b + 1},{a + 1})")
    return M


def _matrix_of(ing: YangMillsIngredients, alpha: int) -> list[list[Expr]]:
    q = ing.q
    M = [[Const(0.0)] * q for _ in range(q)]
    M = [list(r) for r in M]
    for a, b in _lower_pairs(q):
        v = Var(ing.coordinate(alpha, a, b))
        M[a][b] = v
        M[b][a] = neg(v)
    return M


def _matmul(A, B):
    q = len(A)
    return [[sum_exprs(mul(A[i][k], B[k][j]) for k in range(q)) for j in range(q)] for i in range(q)]


def _probe_env(names: list[str], seed: int = 11) -> dict:
    rng = np.random.default_rng(seed)
    return {v: rng.uniform(-1.0, 1.0, 5) for v in names}


def build_yang_mills(ing: YangMillsIngredients, name: str = "yang_mills") -> Scenario:
    """First-order system for d nabla_alpha / d t^beta = cal-F_(alpha)(beta)."""
    _check_constant(ing.h)
    p, q, n = ing.p, ing.q, ing.n
    ts, xs = t_names(p), x_names(n)
    names = ts + xs
    env = _probe_env(names)
    f = {}
    for key, table in ing.f.items():
        a, b = key
        if not (0 <= a <= b < p):
            raise ValueError(f"f is indexed by alpha <= beta, got {key}")
        f[key] = _skew_table(table, q, names, f"f_{a + 1}{b + 1}", env)
    F = {}
    for key, table in ing.F.items():
        a, b = key
        if not (0 <= a < b < p):
            raise ValueError(f"F is indexed by alpha < beta, got {key}")
        F[key] = _skew_table(table, q, ts, f"F_{a + 1}{b + 1}", env)
    zero = [[Const(0.0)] * q for _ in range(q)]
    nabla = [_matrix_of(ing, al) for al in range(p)]

    def cal_F(al: int, be: int):
        if al <= be:
            return f.get((al, be), zero)
        comm = _matmul(nabla[al], nabla[be])
        back = _matmul(nabla[be], nabla[al])
        fb = f.get((be, al), zero)
        Fab = F.get((be, al), zero)  # F_(al)(be) = -F_(be)(al)
        return [[add(add(sub(comm[i][j], back[i][j]), fb[i][j]), Fab[i][j]) for j in range(q)] for i in range(q)]

    X = [[None] * p for _ in range(n)]
    for al in range(p):
        for be in range(p):
            M = cal_F(al, be)
            for a, b in _lower_pairs(q):
                k = int(ing.coordinate(al, a, b)[1:]) - 1
                X[k][be] = M[a][b]
    hinv = np.linalg.inv(ing.h.values(np.zeros((1, p)))[0])
    m = ing.m
    phi_entries = [[Const(0.0)] * n for _ in range(n)]
    phi_entries = [list(r) for r in phi_entries]
    for al in range(p):
        for be in range(p):
            for r in range(m):
                phi_entries[al * m + r][be * m + r] = Const(2.0 * hinv[al, be])
    phi = MetricField(xs, phi_entries)
    sys = SystemSpec(p, n, ing.h, phi, X, name)
    return Scenario(sys, "yang_mills", {}, {"ingredients": ing, "cal_F": cal_F})


def _full(ing: YangMillsIngredients, vec: np.ndarray, alpha: int) -> np.ndarray:
    q = ing.q
    M = np.zeros((q, q))
    for a, b in _lower_pairs(q):
        k = int(ing.coordinate(alpha, a, b)[1:]) - 1
        M[a, b] = vec[k]
        M[b, a] = -vec[k]
    return M


def ym_least_squares(sc: Scenario, point: JetPoint) -> float:
    """The gauge least-squares Lagrangian written with matrix traces.

    Sum over a, b of M^b_a N^a_b is Tr(MN); for skew data this is -Tr(MN^T),
    so the value is minus the fibre-metric form used by the engine.
    """
    ing: YangMillsIngredients = sc.extras["ingredients"]
    p, q = ing.p, ing.q
    sys = sc.sys
    ld = _local(sys, point)
    X = ld.X[0]
    hinv = ld.hd.ginv[0]
    D = np.zeros((p, p, q, q))  # [alpha, mu] = d nabla_alpha / dt^mu - cal-F
    for al in range(p):
        for mu in range(p):
            D[al, mu] = _full(ing, point.xdot[:, mu], al) - _full(ing, X[:, mu], al)
    return float(np.einsum("ab,mn,amij,bnji->", hinv, hinv, D, D))


def ym_lagrangian_variants(ing: YangMillsIngredients, curvature: dict) -> dict:
    """Gauge Lagrangian values from field strengths F_(a)(b), a < b.

    ``paired``   h^am h^bn Tr(F_ab F_mn)  (contraction over both index orderings)
    ``literal``  h^ab h^mn Tr(F_ab F_mn)  (indices contracted within each factor)
    ``positive`` -h^am h^bn Tr(F_ab F_mn) (positive on skew data)
    """
    _check_constant(ing.h)
    p, q = ing.p, ing.q
    Fm = np.zeros((p, p, q, q))
    for (a, b), M in curvature.items():
        M = np.asarray(M, dtype=float)
        if M.shape != (q, q) or np.max(np.abs(M + M.T)) > 1e-12:
            raise NonSkew(f"F_{a + 1}{b + 1} must be a skew {q}x{q} matrix")
        Fm[a, b] = M
        Fm[b, a] = -M
    hinv = np.linalg.inv(ing.h.values(np.zeros((1, p)))[0])
    paired = float(np.einsum("am,bn,abij,mnji->", hinv, hinv, Fm, Fm))
    literal = float(np.einsum("ab,mn,abij,mnji->", hinv, hinv, Fm, Fm))
    return {"paired": paired, "literal": literal, "positive": -paired}


def ym_lagrangian(ing: YangMillsIngredients, curvature: dict) -> float:
    """The paired contraction h^am h^bn Tr(F_ab F_mn); -4 for unit o(2) curvature."""
    return ym_lagrangian_variants(ing, curvature)["paired"]
