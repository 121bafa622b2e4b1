"""Jet-bundle objects attached to a first-order system x^i_a = X^i_a(t, x).

Index layout used throughout (``z`` is the batch axis of the ``*_batch``
helpers, dropped by the single-point API):

    X[i, a]          X^(i)_(a)            xdot[i, a]   x^i_a
    Dt[i, a, b]      X^(i)_(a)//b         Dx[i, a, j]  X^(i)_(a)||j
    Xjb[i, a, j, b]  X^(i)_(a)||j//b      Xjk[i, a, j, k]  X^(i)_(a)||j||k
    helicity[i, j, a]                     U[a, i], Uskew[a, i, j]
    H, G, M [i, a, b]                     N[i, a, j]
    Rtt[i, a, b, c], Rtj[i, a, b, j], Rjk[i, a, j, k]

The spatial spray G is built from the U/Phi bracket of the least-squares
Lagrangian; the induced N differentiates G^i = h^ab G^(i)_(a)b with respect
to the jet coordinates.  Closed forms are only used for comparison.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exprcalc import UnknownVariable, as_expr, derivative, eval_table
from .riemann import MetricData, MetricField, metric_data


def einsum(*args):
    return np.einsum(*args, optimize=True)


class SystemSpecError(ValueError):
    """Invalid system definition."""


def t_names(p: int) -> list[str]:
    return [f"t{a + 1}" for a in range(p)]


def x_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


class SystemSpec:
    """Dimensions, the two metrics and the n x p field X over (t, x)."""

    def __init__(self, p: int, n: int, h: MetricField, phi: MetricField, X, name: str = ""):
        if p < 1 or n < 1:
            raise SystemSpecError("p and n must be positive")
        self.p, self.n, self.name = int(p), int(n), name
        self.t_names = t_names(p)
        self.x_names = x_names(n)
        if tuple(h.coords) != tuple(self.t_names):
            raise SystemSpecError(f"h must be a metric over {self.t_names}")
        if tuple(phi.coords) != tuple(self.x_names):
            raise SystemSpecError(f"phi must be a metric over {self.x_names}")
        self.h, self.phi = h, phi
        if len(X) != n or any(len(row) != p for row in X):
            raise SystemSpecError(f"X must be an {n}x{p} table")
        names = self.t_names + self.x_names
        try:
            self.X = [[as_expr(e, names) for e in row] for row in X]
        except UnknownVariable as err:
            raise SystemSpecError(
                f"X may only depend on {names}; found {err.name!r}"
            ) from err

    def __repr__(self) -> str:
        return f"SystemSpec(name={self.name!r}, p={self.p}, n={self.n})"

    # exact derivative tables -------------------------------------------------

    @cached_property
    def dX_dt(self):
        return [[[derivative(e, t) for t in self.t_names] for e in row] for row in self.X]

    @cached_property
    def dX_dx(self):
        return [[[derivative(e, x) for x in self.x_names] for e in row] for row in self.X]

    @cached_property
    def d2X_tx(self):
        # [i][a][b][j] = d^2 X / dt^b dx^j
        return [[[[derivative(e, x) for x in self.x_names] for e in col] for col in row] for row in self.dX_dt]

    @cached_property
    def d2X_xx(self):
        return [[[[derivative(e, x) for x in self.x_names] for e in col] for col in row] for row in self.dX_dx]

    def env(self, t: np.ndarray, x: np.ndarray) -> dict:
        env = {name: t[:, k] for k, name in enumerate(self.t_names)}
        env.update({name: x[:, k] for k, name in enumerate(self.x_names)})
        return env

    def local(self, t, x, order: int = 1) -> "LocalData":
        t = np.atleast_2d(np.asarray(t, dtype=float))
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if t.shape[1] != self.p or x.shape[1] != self.n or len(t) != len(x):
            raise ValueError("t/x batch shapes do not match the system")
        size = len(t)
        env = self.env(t, x)
        ld = LocalData(
            t=t,
            x=x,
            X=eval_table(self.X, env, size),
            Xt=eval_table(self.dX_dt, env, size),
            Xx=eval_table(self.dX_dx, env, size),
            hd=metric_data(self.h, t, order),
            pd=metric_data(self.phi, x, order),
        )
        if order >= 2:
            ld.Xtx = eval_table(self.d2X_tx, env, size)
            ld.Xxx = eval_table(self.d2X_xx, env, size)
        return ld


@dataclass
class JetPoint:
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, dtype=float))
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.xdot = np.atleast_2d(np.asarray(self.xdot, dtype=float))
        if self.xdot.shape != (len(self.x), len(self.t)):
            raise ValueError("xdot must have shape (n, p)")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.x))
                and np.all(np.isfinite(self.xdot))):
            raise ValueError("jet point entries must be finite")


@dataclass
class LocalData:
    t: np.ndarray
    x: np.ndarray
    X: np.ndarray
    Xt: np.ndarray
    Xx: np.ndarray
    hd: MetricData
    pd: MetricData
    Xtx: np.ndarray | None = None
    Xxx: np.ndarray | None = None

    @property
    def p(self) -> int:
        return self.X.shape[2]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass
class ConnectionPair:
    M: np.ndarray
    N: np.ndarray
    flavor: str
    report: dict = field(default_factory=dict)


@dataclass
class SprayData:
    H: np.ndarray
    G: np.ndarray
    Gsum: np.ndarray
    F: np.ndarray


@dataclass
class ElectrodynamicsData:
    U: np.ndarray
    Phi: float
    Uskew: np.ndarray


@dataclass
class TorsionData:
    Rtt: np.ndarray
    Rtj: np.ndarray
    Rjk: np.ndarray


@dataclass
class AdaptedFrame:
    """Columns of ``frame`` are (d/dt, delta/delta x, d/d xdot) in coordinates;
    rows of ``coframe`` are (dt, dx, delta xdot).  Jet coordinate (i, a) sits
    at position p + n + i*p + a."""

    frame: np.ndarray
    coframe: np.ndarray


# ---------------------------------------------------------------------------
# batched kernels over LocalData


def cov_derivatives_batch(ld: LocalData):
    Dt = ld.Xt - einsum("zim,zmab->ziab", ld.X, ld.hd.gam)
    Dx = ld.Xx + einsum("zma,zimj->ziaj", ld.X, ld.pd.gam)
    return Dt, Dx


def _dDx(ld: LocalData):
    """Exact partials of X_||j: (d/dt^b -> [i,a,j,b], d/dx^k -> [i,a,j,k])."""
    gam = ld.pd.gam
    dt = np.transpose(ld.Xtx, (0, 1, 2, 4, 3)) + einsum("zmab,zimj->ziajb", ld.Xt, gam)
    dx = (
        ld.Xxx
        + einsum("zmak,zimj->ziajk", ld.Xx, gam)
        + einsum("zma,zimjk->ziajk", ld.X, ld.pd.dgam)
    )
    return dt, dx


def second_cov_derivatives_batch(ld: LocalData):
    _, Dx = cov_derivatives_batch(ld)
    dt, dx = _dDx(ld)
    gam = ld.pd.gam
    Xjb = dt - einsum("zimj,zmab->ziajb", Dx, ld.hd.gam)
    Xjk = (
        dx
        + einsum("zmaj,zimk->ziajk", Dx, gam)
        - einsum("ziam,zmjk->ziajk", Dx, gam)
    )
    return Xjb, Xjk


def helicity_batch(ld: LocalData, Dx=None):
    if Dx is None:
        Dx = cov_derivatives_batch(ld)[1]
    pd = ld.pd
    other = einsum("zir,zsar,zsj->zija", pd.ginv, Dx, pd.g)
    return 0.5 * (np.transpose(Dx, (0, 1, 3, 2)) - other)


def _lowered_skew(ld: LocalData, Dx):
    """A[z,a,i,j] = h^au phi_im X^m_u||j and its (i,j)-antisymmetrisation."""
    A = einsum("zau,zim,zmuj->zaij", ld.hd.ginv, ld.pd.g, Dx)
    return A - np.swapaxes(A, 2, 3)


def electrodynamics_batch(ld: LocalData, Dx=None):
    if Dx is None:
        Dx = cov_derivatives_batch(ld)[1]
    hinv, phi = ld.hd.ginv, ld.pd.g
    U = -2.0 * einsum("zau,zim,zmu->zai", hinv, phi, ld.X)
    Phi = einsum("zuv,zrs,zru,zsv->z", hinv, phi, ld.X, ld.X)
    Uskew = -2.0 * _lowered_skew(ld, Dx)
    return U, Phi, Uskew


def _u_divergence(ld: LocalData):
    """d U^(m)_(l) / d t^m + U^(m)_(l) H^c_mc, shape (z, n)."""
    hinv, phi = ld.hd.ginv, ld.pd.g
    dhinv = -einsum("zap,zpqc,zqu->zauc", hinv, ld.hd.dg, hinv)
    dU = -2.0 * (
        einsum("zauc,zim,zmu->zaic", dhinv, phi, ld.X)
        + einsum("zau,zim,zmuc->zaic", hinv, phi, ld.Xt)
    )
    U = -2.0 * einsum("zau,zim,zmu->zai", hinv, phi, ld.X)
    trace = einsum("zcmc->zm", ld.hd.gam)
    return einsum("zaia->zi", dU) + einsum("zmi,zm->zi", U, trace)


def _phi_gradient(ld: LocalData):
    """d Phi / d x^l, shape (z, n)."""
    hinv, phi = ld.hd.ginv, ld.pd.g
    return einsum("zuv,zrsl,zru,zsv->zl", hinv, ld.pd.dg, ld.X, ld.X) + 2.0 * einsum(
        "zuv,zrs,zrul,zsv->zl", hinv, phi, ld.Xx, ld.X
    )


def closed_form_drift_batch(ld: LocalData, xdot):
    """The drift F^i written in closed form in terms of covariant derivatives."""
    Dt, Dx = cov_derivatives_batch(ld)
    hinv, phi, phinv = ld.hd.ginv, ld.pd.g, ld.pd.ginv
    p = ld.p
    diff = ld.X - xdot
    term1 = einsum("zil,zsvl,zsr,zru->ziuv", phinv, Dx, phi, diff)
    term2 = einsum("zivm,zmu->ziuv", Dx, xdot)
    term3 = np.transpose(Dt, (0, 1, 3, 2))  # [i, u, v] = X^(i)_(v)//u
    return einsum("zuv,ziuv->zi", hinv, term1 + term2 + term3) / (2.0 * p)


SPRAY_VARIANTS = ("bracket", "closed_plus", "closed_minus")


def spray_batch(ld: LocalData, xdot, variant: str = "bracket") -> SprayData:
    if variant not in SPRAY_VARIANTS:
        raise ValueError(f"unknown spray variant {variant!r}")
    xdot = np.asarray(xdot, dtype=float)
    p = ld.p
    H = -0.5 * einsum("zcab,zic->ziab", ld.hd.gam, xdot)
    geo = 0.5 * einsum("zijk,zja,zkb->ziab", ld.pd.gam, xdot, xdot)
    if variant == "bracket":
        _, Dx = cov_derivatives_batch(ld)
        Uskew = -2.0 * _lowered_skew(ld, Dx)
        bracket = (
            einsum("zulm,zmu->zl", Uskew, xdot)
            + _u_divergence(ld)
            - _phi_gradient(ld)
        )
        F = einsum("zil,zl->zi", ld.pd.ginv, bracket) / (4.0 * p)
    else:
        F = closed_form_drift_batch(ld, xdot)
        if variant == "closed_minus":
            F = -F
    G = geo + einsum("zab,zi->ziab", ld.hd.g, F)
    Gsum = einsum("zab,ziab->zi", ld.hd.ginv, G)
    return SprayData(H, G, Gsum, F)


def induced_N_batch(ld: LocalData, xdot, variant: str = "bracket"):
    """N^(i)_(a)j = h_ac dG^i/dx^j_c.

    G^i is quadratic in the jet coordinates, so the symmetric difference with
    a unit step is its exact derivative (no truncation term).
    """
    xdot = np.asarray(xdot, dtype=float)
    z, n, p = xdot.shape
    dG = np.empty((z, n, n, p))  # [i, j, c]
    for j in range(n):
        for c in range(p):
            e = np.zeros_like(xdot)
            e[:, j, c] = 1.0
            gp = spray_batch(ld, xdot + e, variant).Gsum
            gm = spray_batch(ld, xdot - e, variant).Gsum
            dG[:, :, j, c] = 0.5 * (gp - gm)
    return einsum("zac,zijc->ziaj", ld.hd.g, dG)


def torsion_batch(ld: LocalData, xdot) -> TorsionData:
    xdot = np.asarray(xdot, dtype=float)
    Xjb, Xjk = second_cov_derivatives_batch(ld)
    phi, phinv = ld.pd.g, ld.pd.ginv
    Rtt = -einsum("zuabc,ziu->ziabc", ld.hd.riem, xdot)
    Rtj = 0.5 * (
        np.transpose(Xjb, (0, 1, 2, 4, 3))
        - einsum("zir,zsarb,zsj->ziabj", phinv, Xjb, phi)
    )
    Rjk = einsum("zijkm,zma->ziajk", ld.pd.riem, xdot) - 0.5 * (
        Xjk - einsum("zir,zsark,zsj->ziajk", phinv, Xjk, phi)
    )
    return TorsionData(Rtt, Rtj, Rjk)


def integrability_batch(ld: LocalData):
    A = ld.Xt + einsum("ziam,zmb->ziab", ld.Xx, ld.X)
    return A - np.swapaxes(A, 2, 3)


# ---------------------------------------------------------------------------
# single-point API


def _local(sys: SystemSpec, point: JetPoint, order: int = 1) -> LocalData:
    if point.t.shape != (sys.p,) or point.x.shape != (sys.n,):
        raise ValueError("jet point does not match the system dimensions")
    return sys.local(point.t[None], point.x[None], order)


def cov_derivatives(sys: SystemSpec, point: JetPoint):
    """(Dt, Dx): horizontal covariant derivatives of X."""
    Dt, Dx = cov_derivatives_batch(_local(sys, point))
    return Dt[0], Dx[0]


def second_cov_derivatives(sys: SystemSpec, point: JetPoint):
    Xjb, Xjk = second_cov_derivatives_batch(_local(sys, point, order=2))
    return Xjb[0], Xjk[0]


def helicity(sys: SystemSpec, point: JetPoint) -> np.ndarray:
    return helicity_batch(_local(sys, point))[0]


def electrodynamics_data(sys: SystemSpec, point: JetPoint) -> ElectrodynamicsData:
    U, Phi, Uskew = electrodynamics_batch(_local(sys, point))
    return ElectrodynamicsData(U[0], float(Phi[0]), Uskew[0])


def _squeeze(s: SprayData) -> SprayData:
    return SprayData(s.H[0], s.G[0], s.Gsum[0], s.F[0])


def spray(sys: SystemSpec, point: JetPoint, variant: str = "bracket") -> SprayData:
    return _squeeze(spray_batch(_local(sys, point), point.xdot[None], variant))


def canonical_connection_batch(ld: LocalData, xdot) -> tuple[np.ndarray, np.ndarray]:
    M0 = -einsum("zuab,ziu->ziab", ld.hd.gam, xdot)
    N0 = einsum("zijm,zma->ziaj", ld.pd.gam, xdot)
    return M0, N0


def nonlinear_connection(sys: SystemSpec, point: JetPoint):
    """(canonical, induced) connection pairs at ``point``.

    ``induced.report`` compares N with the closed forms N0 - F and N0 + F.
    """
    ld = _local(sys, point)
    xd = point.xdot[None]
    M0, N0 = canonical_connection_batch(ld, xd)
    sp = spray_batch(ld, xd)
    N = induced_N_batch(ld, xd)
    F = np.transpose(helicity_batch(ld), (0, 1, 3, 2))  # [i, a, j]
    minus = float(np.max(np.abs(N - (N0 - F))))
    plus = float(np.max(np.abs(N - (N0 + F))))
    report = {
        "max_diff_N0_minus_F": minus,
        "max_diff_N0_plus_F": plus,
        "best_sign": "N0 - F" if minus <= plus else "N0 + F",
    }
    canonical = ConnectionPair(M0[0], N0[0], "canonical")
    induced = ConnectionPair(2.0 * sp.H[0], N[0], "induced", report)
    return canonical, induced


def cartan_connection(sys: SystemSpec, point: JetPoint):
    """(H^c_ab of h, gamma^i_jk of phi); the two remaining blocks vanish."""
    ld = _local(sys, point)
    return ld.hd.gam[0], ld.pd.gam[0]


def torsion(sys: SystemSpec, point: JetPoint) -> TorsionData:
    t = torsion_batch(_local(sys, point, order=2), point.xdot[None])
    return TorsionData(t.Rtt[0], t.Rtj[0], t.Rjk[0])


def adapted_frame(conn: ConnectionPair, point: JetPoint | None = None) -> AdaptedFrame:
    M, N = np.asarray(conn.M), np.asarray(conn.N)
    n, p = M.shape[0], M.shape[1]
    if point is not None and point.xdot.shape != (n, p):
        raise ValueError("connection and jet point dimensions differ")
    dim = p + n + n * p
    V = np.eye(dim)
    W = np.eye(dim)
    for i in range(n):
        for a in range(p):
            row = p + n + i * p + a
            for b in range(p):
                # delta/delta t^b = d/dt^b - M^(i)_(a)b d/dxdot^i_a
                V[row, b] = -M[i, a, b]
                W[row, b] = M[i, a, b]
            for j in range(n):
                V[row, p + j] = -N[i, a, j]
                W[row, p + j] = N[i, a, j]
    return AdaptedFrame(V, W)


def integrability_residual(sys: SystemSpec, point: JetPoint) -> np.ndarray:
    return integrability_batch(_local(sys, point))[0]


def closed_form_drift(sys: SystemSpec, point: JetPoint) -> np.ndarray:
    return closed_form_drift_batch(_local(sys, point), point.xdot[None])[0]


def drift_sign_report(sys: SystemSpec, point: JetPoint) -> dict:
    """Compare the bracket drift F^i with +/- the closed form."""
    ld = _local(sys, point)
    xd = point.xdot[None]
    F = spray_batch(ld, xd).F
    Fc = closed_form_drift_batch(ld, xd)
    plus = float(np.max(np.abs(F - Fc)))
    minus = float(np.max(np.abs(F + Fc)))
    return {
        "max_diff_plus": plus,
        "max_diff_minus": minus,
        "best_sign": "+" if plus <= minus else "-",
    }
