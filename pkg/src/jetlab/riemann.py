"""Riemannian metric kernels shared by the metric on T and the metric on M.

Curvature convention::

    R^l_ijk = d_j Gamma^l_ik - d_k Gamma^l_ij + Gamma^l_jm Gamma^m_ik - Gamma^l_km Gamma^m_ij
    Ric_ij  = R^m_imj,      scalar = g^ij Ric_ij

so the round sphere has positive scalar curvature.  All metric derivatives are
exact (symbolic) and evaluated per point; the batched ``*_batch`` functions
take an (N, dim) array of points.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _kernels
from .exprcalc import (
    Const, as_expr, derivative, eval_table, evaluate_array,
)

PIVOT_FLOOR = 1e-14


class SingularMetric(ArithmeticError):
    pass


class MetricError(ValueError):
    """Metric fails symmetry or positive-definiteness at a sample point."""


class MetricField:
    """Symmetric matrix of expressions over a coordinate list.

    The lower triangle is mirrored into the working entries so that the
    Christoffel symbols come out exactly symmetric; :meth:`check` verifies
    that the user-supplied upper triangle agrees.
    """

    def __init__(self, coords: Sequence[str], entries):
        self.coords = tuple(coords)
        dim = len(self.coords)
        if dim == 0:
            raise ValueError("metric needs at least one coordinate")
        if len(entries) != dim or any(len(row) != dim for row in entries):
            raise ValueError(f"metric must be {dim}x{dim}")
        self.dim = dim
        self.entries = [[as_expr(e, self.coords) for e in row] for row in entries]
        self.sym = [
            [self.entries[max(i, j)][min(i, j)] for j in range(dim)] for i in range(dim)
        ]

    @classmethod
    def identity(cls, coords: Sequence[str]) -> "MetricField":
        d = len(coords)
        return cls(coords, [[Const(1.0 if i == j else 0.0) for j in range(d)] for i in range(d)])

    @classmethod
    def diagonal(cls, coords: Sequence[str], diag) -> "MetricField":
        d = len(coords)
        return cls(coords, [[diag[i] if i == j else Const(0.0) for j in range(d)] for i in range(d)])

    def __repr__(self) -> str:
        rows = [[str(e) for e in row] for row in self.entries]
        return f"MetricField({list(self.coords)}, {rows})"

    @cached_property
    def d1(self):
        d = self.dim
        return [[[derivative(self.sym[a][b], c) for c in self.coords] for b in range(d)] for a in range(d)]

    @cached_property
    def d2(self):
        d = self.dim
        return [
            [[[derivative(self.d1[a][b][c], e) for e in self.coords] for c in range(d)] for b in range(d)]
            for a in range(d)
        ]

    @cached_property
    def is_constant(self) -> bool:
        return all(isinstance(e, Const) for row in self.d1 for col in row for e in col)

    def env(self, points) -> dict:
        pts = _points(points, self.dim)
        return {name: pts[:, k] for k, name in enumerate(self.coords)}

    def values(self, points) -> np.ndarray:
        pts = _points(points, self.dim)
        return eval_table(self.sym, self.env(pts), len(pts))

    def first_derivatives(self, points) -> np.ndarray:
        pts = _points(points, self.dim)
        return eval_table(self.d1, self.env(pts), len(pts))

    def second_derivatives(self, points) -> np.ndarray:
        pts = _points(points, self.dim)
        return eval_table(self.d2, self.env(pts), len(pts))

    def check(self, points, tol: float = 1e-12) -> None:
        """Raise MetricError on asymmetry or a non-positive leading minor."""
        pts = _points(points, self.dim)
        env = self.env(pts)
        bad = []
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                a = evaluate_array(self.entries[i][j], env, (len(pts),))
                b = evaluate_array(self.entries[j][i], env, (len(pts),))
                if np.any(np.abs(a - b) > tol * (1.0 + np.abs(b))):
                    bad.append(f"[{i + 1}][{j + 1}] vs [{j + 1}][{i + 1}]")
        if bad:
            raise MetricError("metric is not symmetric: entries " + ", ".join(bad))
        g = self.values(pts)
        for k in range(1, self.dim + 1):
            minors = np.linalg.det(g[:, :k, :k])
            if np.any(minors <= 0.0):
                where = int(np.argmax(minors <= 0.0))
                raise MetricError(
                    f"metric is not positive definite: leading minor {k} is "
                    f"{minors[where]:.3g} at point {pts[where].tolist()}"
                )


def _points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {pts.shape[-1]}")
    return pts


def invert_batch(g: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting for an (N, d, d) stack."""
    inv, smallest = _kernels.invert(g)
    if smallest < PIVOT_FLOOR:
        raise SingularMetric("metric is singular (pivot below 1e-14)")
    return inv


def inverse_at(g: MetricField, point) -> np.ndarray:
    """Inverse matrix of ``g`` at one point."""
    return invert_batch(g.values(point))[0]


@dataclass
class CurvatureBundle:
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float


@dataclass
class MetricData:
    """Everything evaluated for a batch of points (leading axis N)."""

    g: np.ndarray
    ginv: np.ndarray
    dg: np.ndarray
    gam: np.ndarray
    d2g: np.ndarray | None = None
    dgam: np.ndarray | None = None
    riem: np.ndarray | None = None

    @property
    def ricci(self) -> np.ndarray:
        return np.einsum("nmimj->nij", self.riem)

    @property
    def scalar(self) -> np.ndarray:
        return np.einsum("nij,nij->n", self.ginv, self.ricci)


def metric_data(g: MetricField, points, order: int = 1) -> MetricData:
    """Metric, inverse and connection; ``order=2`` adds curvature data."""
    pts = _points(points, g.dim)
    gv = g.values(pts)
    ginv = invert_batch(gv)
    dg = g.first_derivatives(pts)
    if order < 2:
        return MetricData(gv, ginv, dg, _kernels.christoffel(ginv, dg))
    d2g = g.second_derivatives(pts)
    gam, dgam, riem = _kernels.curvature(ginv, dg, d2g)
    return MetricData(gv, ginv, dg, gam, d2g, dgam, riem)


def christoffel_batch(g: MetricField, points) -> np.ndarray:
    return metric_data(g, points).gam


def christoffel(g: MetricField, point) -> np.ndarray:
    """Gamma^k_ij at one point, indexed ``[k, i, j]``."""
    return christoffel_batch(g, point)[0]


def curvature_batch(g: MetricField, points) -> list[CurvatureBundle]:
    md = metric_data(g, points, order=2)
    ric = md.ricci
    sc = md.scalar
    return [CurvatureBundle(md.riem[k], ric[k], float(sc[k])) for k in range(len(sc))]


def curvature(g: MetricField, point) -> CurvatureBundle:
    """Riemann ``[l, i, j, k]``, Ricci and scalar curvature at one point."""
    return curvature_batch(g, point)[0]


def metric_compatibility(md: MetricData) -> np.ndarray:
    """nabla_k g_ij = d_k g_ij - Gamma^m_ki g_mj - Gamma^m_kj g_im, shape (N,d,d,d)."""
    return (
        md.dg
        - np.einsum("nmki,nmj->nijk", md.gam, md.g)
        - np.einsum("nmkj,nim->nijk", md.gam, md.g)
    )


def einstein_tensor(md: MetricData) -> np.ndarray:
    """Covariant Einstein tensor Ric_ij - scalar/2 g_ij."""
    return md.ricci - 0.5 * md.scalar[:, None, None] * md.g


def einstein_divergence(g: MetricField, point, step: float = 1e-3) -> np.ndarray:
    """g^mk nabla_m G_kj at ``point`` by central differences of pointwise curvature.

    Used as the contracted-Bianchi check; the result should vanish.
    """
    x0 = np.asarray(point, dtype=float)
    d = g.dim
    offsets = [x0]
    for m in range(d):
        e = np.zeros(d)
        e[m] = step
        offsets += [x0 + e, x0 - e]
    md = metric_data(g, np.array(offsets), order=2)
    G = einstein_tensor(md)
    Gup = np.einsum("nmk,nkj->nmj", md.ginv, G)  # mixed G^m_j
    div = np.zeros(d)
    for m in range(d):
        div += (Gup[1 + 2 * m, m] - Gup[2 + 2 * m, m]) / (2.0 * step)
    gam = md.gam[0]
    div += np.einsum("mmk,kj->j", gam, Gup[0]) - np.einsum("kmj,mk->j", gam, Gup[0])
    return div
