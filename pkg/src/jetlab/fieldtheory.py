"""Electromagnetic 2-form, generalized Maxwell residuals, Sasakian metric and
the Einstein / stress-energy report."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grids import Box
from .jetgeom import (
    AdaptedFrame, JetPoint, LocalData, SystemSpec, _dDx, _local, adapted_frame,
    canonical_connection_batch, cov_derivatives_batch, induced_N_batch,
    second_cov_derivatives_batch, spray_batch, ConnectionPair,
)
from .riemann import metric_data


def einsum(*args):
    return np.einsum(*args, optimize=True)


@dataclass
class EMField:
    F: np.ndarray  # [a, i, j]


@dataclass
class MaxwellResiduals:
    eq1: np.ndarray  # [a, i, j, b]
    eq2: np.ndarray  # [a, i, j, k]
    eq3: np.ndarray  # [a, i, j, c]
    eq1_variant: np.ndarray  # same shape, phi^ir placement


@dataclass
class SasakianMetric:
    adapted: np.ndarray
    coordinate: np.ndarray
    frame: AdaptedFrame


@dataclass
class EinsteinReport:
    K: float
    Ttt: np.ndarray
    Txx: np.ndarray
    Tvv: np.ndarray
    zeroBlocks: list = field(default_factory=list)
    conservationResiduals: tuple = (0.0, 0.0)
    reference_t: np.ndarray | None = None
    reference_x: np.ndarray | None = None


ZERO_BLOCKS = [
    "T_(a)i", "T_i(a)", "T^(a)_(i)b", "T_a^(b)_(i)", "T_i^(a)_(j)", "T^(a)_(i)j",
]


def em_field_batch(ld: LocalData, Dx=None) -> np.ndarray:
    if Dx is None:
        Dx = cov_derivatives_batch(ld)[1]
    A = einsum("zau,zim,zmuj->zaij", ld.hd.ginv, ld.pd.g, Dx)
    return 0.5 * (A - np.swapaxes(A, 2, 3))


def em_field(sys: SystemSpec, point: JetPoint) -> EMField:
    return EMField(em_field_batch(_local(sys, point))[0])


def maxwell_batch(ld: LocalData) -> MaxwellResiduals:
    """Residuals (left minus right) of the three generalized Maxwell equations."""
    hinv, phi, phinv = ld.hd.ginv, ld.pd.g, ld.pd.ginv
    Hc, gam = ld.hd.gam, ld.pd.gam
    _, Dx = cov_derivatives_batch(ld)
    dDt, dDx = _dDx(ld)
    Xjb, _ = second_cov_derivatives_batch(ld)
    F = em_field_batch(ld, Dx)

    # F_//b = d_b F + F^(m) H^a_mb  (only the temporal index is corrected)
    dhinv = -einsum("zap,zpqc,zqu->zauc", hinv, ld.hd.dg, hinv)
    A = einsum("zaub,zim,zmuj->zaijb", dhinv, phi, Dx) + einsum(
        "zau,zim,zmujb->zaijb", hinv, phi, dDt
    )
    dF_t = 0.5 * (A - np.swapaxes(A, 2, 3))
    lhs1 = dF_t + einsum("zmij,zamb->zaijb", F, Hc)

    inner = Xjb - einsum("zmr,zsurb,zsj->zmujb", phinv, Xjb, phi)
    B = einsum("zau,zim,zmujb->zaijb", hinv, phi, inner)
    rhs1 = 0.25 * (B - np.swapaxes(B, 2, 3))
    Bv = einsum("zau,zim,zmujb->zaijb", hinv, phi, Xjb) - einsum(
        "zau,zir,zsurb,zsj->zaijb", hinv, phinv, Xjb, phi
    )
    rhs1v = 0.25 * (Bv - np.swapaxes(Bv, 2, 3))

    # F_ij||k = d_k F_ij - F_mj gamma^m_ik - F_im gamma^m_jk
    C = einsum("zau,zimk,zmuj->zaijk", hinv, ld.pd.dg, Dx) + einsum(
        "zau,zim,zmujk->zaijk", hinv, phi, dDx
    )
    dF_x = 0.5 * (C - np.swapaxes(C, 2, 3))
    Fk = (
        dF_x
        - einsum("zamj,zmik->zaijk", F, gam)
        - einsum("zaim,zmjk->zaijk", F, gam)
    )
    eq2 = Fk + np.transpose(Fk, (0, 1, 3, 4, 2)) + np.transpose(Fk, (0, 1, 4, 2, 3))
    z, p, n = F.shape[0], F.shape[1], F.shape[2]
    eq3 = np.zeros((z, p, n, n, p))
    return MaxwellResiduals(lhs1 - rhs1, eq2, eq3, lhs1 - rhs1v)


def maxwell_residuals(sys: SystemSpec, point: JetPoint):
    """(eq1, eq2, eq3) residual arrays at ``point``."""
    m = maxwell_batch(_local(sys, point, order=2))
    return m.eq1[0], m.eq2[0], m.eq3[0]


def maxwell_report(sys: SystemSpec, point: JetPoint) -> MaxwellResiduals:
    m = maxwell_batch(_local(sys, point, order=2))
    return MaxwellResiduals(m.eq1[0], m.eq2[0], m.eq3[0], m.eq1_variant[0])


def sasakian_metric(sys: SystemSpec, point: JetPoint, conn: ConnectionPair | None = None) -> SasakianMetric:
    """h + phi + h^-1 phi in the adapted coframe of the induced connection."""
    ld = _local(sys, point)
    p, n = sys.p, sys.n
    if conn is None:
        xd = point.xdot[None]
        conn = ConnectionPair(
            2.0 * spray_batch(ld, xd).H[0], induced_N_batch(ld, xd)[0], "induced"
        )
    dim = p + n + n * p
    G = np.zeros((dim, dim))
    G[:p, :p] = ld.hd.g[0]
    G[p:p + n, p:p + n] = ld.pd.g[0]
    G[p + n:, p + n:] = einsum("ij,ab->iajb", ld.pd.g[0], ld.hd.ginv[0]).reshape(n * p, n * p)
    frame = adapted_frame(conn, point)
    coord = frame.coframe.T @ G @ frame.coframe
    return SasakianMetric(G, 0.5 * (coord + coord.T), frame)


def stress_energy_batch(sys: SystemSpec, t, x, K: float):
    """Pointwise (Ttt, Txx, Tvv) defined from the Einstein left-hand sides."""
    if K == 0:
        raise ValueError("coupling K must be non-zero")
    hd = metric_data(sys.h, t, order=2)
    pd = metric_data(sys.phi, x, order=2)
    s = 0.5 * (hd.scalar + pd.scalar)
    Ttt = (hd.ricci - s[:, None, None] * hd.g) / K
    Txx = (pd.ricci - s[:, None, None] * pd.g) / K
    Tvv = -s[:, None, None, None, None] * einsum("zab,zij->zabij", hd.ginv, pd.g) / K
    return Ttt, Txx, Tvv, hd, pd


def _divergence_on_grid(metric, box: Box, other_point, K, sys, which: str) -> float:
    """max |T^m_j;m| over interior nodes by central differences on ``box``."""
    box.check()
    nodes = box.nodes()
    other = np.broadcast_to(other_point, (len(nodes), len(other_point)))
    if which == "t":
        Ttt, _, _, md, _ = stress_energy_batch(sys, nodes, other, K)
        T = Ttt
    else:
        _, Txx, _, _, md = stress_energy_batch(sys, other, nodes, K)
        T = Txx
    mixed = einsum("zmk,zkj->zmj", md.ginv, T)
    d = box.dim
    mixed_grid = mixed.reshape(box.shape + (d, d))
    div = np.zeros(box.shape + (d,))
    for m in range(d):
        div += _kernels.diff1(mixed_grid[..., m, :], box.spacing[m], axis=m)
    gam = md.gam.reshape(box.shape + (d, d, d))
    div += einsum("...mmk,...kj->...j", gam, mixed_grid)
    div -= einsum("...kmj,...mk->...j", gam, mixed_grid)
    return float(np.max(np.abs(div[box.interior()])))


def einstein_report(sys: SystemSpec, K: float, tGrid: Box, xGrid: Box) -> EinsteinReport:
    if K == 0:
        raise ValueError("coupling K must be non-zero")
    tGrid.check()
    xGrid.check()
    t0 = tGrid.center()
    x0 = xGrid.center()
    Ttt, Txx, Tvv, _, _ = stress_energy_batch(sys, t0[None], x0[None], K)
    rt = _divergence_on_grid(sys.h, tGrid, x0, K, sys, "t")
    rx = _divergence_on_grid(sys.phi, xGrid, t0, K, sys, "x")
    return EinsteinReport(
        K=float(K),
        Ttt=Ttt[0],
        Txx=Txx[0],
        Tvv=Tvv[0],
        zeroBlocks=list(ZERO_BLOCKS),
        conservationResiduals=(rt, rx),
        reference_t=t0,
        reference_x=x0,
    )


def canonical_pair(sys: SystemSpec, point: JetPoint) -> ConnectionPair:
    ld = _local(sys, point)
    M0, N0 = canonical_connection_batch(ld, point.xdot[None])
    return ConnectionPair(M0[0], N0[0], "canonical")
