"""Hot numeric kernels.

Every kernel has a numba ``@njit`` version with explicit loops (fixed
summation order) and a pure-numpy version.  The numba path is used when numba
imports and ``JETLAB_NUMBA`` is not set to ``0``/``false``/``off``.

Array conventions (leading axis ``N`` is always the batch / node axis):

* ``ginv``: (N, d, d), ``dg[N, a, b, c] = d g_ab / d u^c``,
  ``d2g[N, a, b, c, e] = d^2 g_ab / d u^c d u^e``.
* ``gam[N, k, i, j]`` = Gamma^k_ij.
* ``riem[N, l, i, j, k]`` = R^l_ijk.
* stencil kernels work on arrays reshaped to (A, M, B), differentiating
  along the middle axis.
"""
from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("JETLAB_NUMBA", "1").strip().lower()
try:
    import numba
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _flag not in ("0", "false", "off", "no")


# ---------------------------------------------------------------------------
# numpy implementations


def christoffel_np(ginv, dg):
    low = 0.5 * (np.swapaxes(dg, 2, 3) + dg - np.transpose(dg, (0, 3, 1, 2)))
    # low[N, l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    return np.einsum("nkl,nlij->nkij", ginv, low)


def curvature_np(ginv, dg, d2g):
    low = 0.5 * (np.swapaxes(dg, 2, 3) + dg - np.transpose(dg, (0, 3, 1, 2)))
    gam = np.einsum("nkl,nlij->nkij", ginv, low)
    dlow = 0.5 * (
        np.transpose(d2g, (0, 1, 3, 2, 4))
        + d2g
        - np.transpose(d2g, (0, 3, 1, 2, 4))
    )
    dginv = -np.einsum("nka,nabm,nbl->nklm", ginv, dg, ginv)
    dgam = np.einsum("nklm,nlij->nkijm", dginv, low) + np.einsum(
        "nkl,nlijm->nkijm", ginv, dlow
    )
    riem = (
        np.transpose(dgam, (0, 1, 2, 4, 3))
        - dgam
        + np.einsum("nljm,nmik->nlijk", gam, gam)
        - np.einsum("nlkm,nmij->nlijk", gam, gam)
    )
    # dgam[n,l,i,k,j] = d_j Gamma^l_ik; transpose above maps (i,k,j)->(i,j,k)
    return gam, dgam, riem


def lsq_density_np(hinv, phi, d):
    return np.einsum("nab,nij,nia,njb->n", hinv, phi, d, d)


def lsq_partials_np(hinv, phi, dphi, dX, d):
    # dphi[N,i,j,k] = d_k phi_ij ; dX[N,i,a,k] = d X^i_a / d x^k
    w = np.einsum("nab,nij,njb->nia", hinv, phi, d)
    dLdy = 2.0 * w
    dLdx = np.einsum("nab,nijk,nia,njb->nk", hinv, dphi, d, d) - 2.0 * np.einsum(
        "nia,niak->nk", w, dX
    )
    return dLdx, dLdy


def diff1_np(u, h):
    out = np.empty_like(u)
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * h)
    out[:, 0] = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * h)
    out[:, -1] = (3.0 * u[:, -1] - 4.0 * u[:, -2] + u[:, -3]) / (2.0 * h)
    return out


def diff1_adjoint_np(v, h):
    out = np.zeros_like(v)
    c = 1.0 / (2.0 * h)
    out[:, 2:] += c * v[:, 1:-1]
    out[:, :-2] -= c * v[:, 1:-1]
    out[:, 0] += -3.0 * c * v[:, 0]
    out[:, 1] += 4.0 * c * v[:, 0]
    out[:, 2] += -c * v[:, 0]
    out[:, -1] += 3.0 * c * v[:, -1]
    out[:, -2] += -4.0 * c * v[:, -1]
    out[:, -3] += c * v[:, -1]
    return out


def diff2_np(u, h):
    return (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / (h * h)


def invert_np(g):
    N, d, _ = g.shape
    a = np.concatenate([g, np.broadcast_to(np.eye(d), (N, d, d))], axis=2)
    rows = np.arange(N)
    smallest = np.inf
    for col in range(d):
        piv = col + np.argmax(np.abs(a[:, col:, col]), axis=1)
        if N:
            smallest = min(smallest, float(np.min(np.abs(a[rows, piv, col]))))
        tmp = a[rows, col].copy()
        a[rows, col] = a[rows, piv]
        a[rows, piv] = tmp
        # a zero pivot poisons the row with inf/nan; the caller rejects it
        with np.errstate(divide="ignore", invalid="ignore"):
            a[:, col] /= a[:, col, col].copy()[:, None]
            for r in range(d):
                if r != col:
                    a[:, r] -= a[:, r, col].copy()[:, None] * a[:, col]
    return np.ascontiguousarray(a[:, :, d:]), smallest


# ---------------------------------------------------------------------------
# numba implementations

if numba is not None:

    @njit(cache=True)
    def _christoffel_nb(ginv, dg):
        N, d = ginv.shape[0], ginv.shape[1]
        gam = np.zeros((N, d, d, d))
        for n in range(N):
            for i in range(d):
                for j in range(i, d):
                    for k in range(d):
                        s = 0.0
                        for l in range(d):
                            s += ginv[n, k, l] * 0.5 * (
                                dg[n, l, j, i] + dg[n, l, i, j] - dg[n, i, j, l]
                            )
                        gam[n, k, i, j] = s
                        gam[n, k, j, i] = s
        return gam

    @njit(cache=True)
    def _curvature_nb(ginv, dg, d2g):
        N, d = ginv.shape[0], ginv.shape[1]
        low = np.zeros((d, d, d))
        dlow = np.zeros((d, d, d, d))
        dginv = np.zeros((d, d, d))
        gam = np.zeros((N, d, d, d))
        dgam = np.zeros((N, d, d, d, d))
        riem = np.zeros((N, d, d, d, d))
        for n in range(N):
            for l in range(d):
                for i in range(d):
                    for j in range(d):
                        low[l, i, j] = 0.5 * (
                            dg[n, l, j, i] + dg[n, l, i, j] - dg[n, i, j, l]
                        )
                        for m in range(d):
                            dlow[l, i, j, m] = 0.5 * (
                                d2g[n, l, j, i, m] + d2g[n, l, i, j, m]
                                - d2g[n, i, j, l, m]
                            )
            for k in range(d):
                for l in range(d):
                    for m in range(d):
                        s = 0.0
                        for a in range(d):
                            for b in range(d):
                                s += ginv[n, k, a] * dg[n, a, b, m] * ginv[n, b, l]
                        dginv[k, l, m] = -s
            for k in range(d):
                for i in range(d):
                    for j in range(d):
                        s = 0.0
                        for l in range(d):
                            s += ginv[n, k, l] * low[l, i, j]
                        gam[n, k, i, j] = s
                        for m in range(d):
                            s2 = 0.0
                            for l in range(d):
                                s2 += dginv[k, l, m] * low[l, i, j]
                            s3 = 0.0
                            for l in range(d):
                                s3 += ginv[n, k, l] * dlow[l, i, j, m]
                            dgam[n, k, i, j, m] = s2 + s3
            for l in range(d):
                for i in range(d):
                    for j in range(d):
                        for k in range(d):
                            s = dgam[n, l, i, k, j] - dgam[n, l, i, j, k]
                            for m in range(d):
                                s += gam[n, l, j, m] * gam[n, m, i, k]
                                s -= gam[n, l, k, m] * gam[n, m, i, j]
                            riem[n, l, i, j, k] = s
        return gam, dgam, riem

    @njit(cache=True)
    def _lsq_density_nb(hinv, phi, d):
        N, n, p = d.shape
        out = np.zeros(N)
        for q in range(N):
            s = 0.0
            for a in range(p):
                for b in range(p):
                    hab = hinv[q, a, b]
                    for i in range(n):
                        for j in range(n):
                            s += hab * phi[q, i, j] * d[q, i, a] * d[q, j, b]
            out[q] = s
        return out

    @njit(cache=True)
    def _lsq_partials_nb(hinv, phi, dphi, dX, d):
        N, n, p = d.shape
        dLdx = np.zeros((N, n))
        dLdy = np.zeros((N, n, p))
        for q in range(N):
            for i in range(n):
                for a in range(p):
                    s = 0.0
                    for b in range(p):
                        for j in range(n):
                            s += hinv[q, a, b] * phi[q, i, j] * d[q, j, b]
                    dLdy[q, i, a] = 2.0 * s
            for k in range(n):
                s = 0.0
                for a in range(p):
                    for b in range(p):
                        for i in range(n):
                            for j in range(n):
                                s += hinv[q, a, b] * dphi[q, i, j, k] * d[q, i, a] * d[q, j, b]
                t = 0.0
                for i in range(n):
                    for a in range(p):
                        t += dLdy[q, i, a] * dX[q, i, a, k]
                dLdx[q, k] = s - t
        return dLdx, dLdy

    @njit(cache=True)
    def _diff1_nb(u, h):
        A, M, B = u.shape
        out = np.empty_like(u)
        c = 1.0 / (2.0 * h)
        for a in range(A):
            for b in range(B):
                for m in range(1, M - 1):
                    out[a, m, b] = (u[a, m + 1, b] - u[a, m - 1, b]) * c
                out[a, 0, b] = (-3.0 * u[a, 0, b] + 4.0 * u[a, 1, b] - u[a, 2, b]) * c
                out[a, M - 1, b] = (
                    3.0 * u[a, M - 1, b] - 4.0 * u[a, M - 2, b] + u[a, M - 3, b]
                ) * c
        return out

    @njit(cache=True)
    def _diff1_adjoint_nb(v, h):
        A, M, B = v.shape
        out = np.zeros_like(v)
        c = 1.0 / (2.0 * h)
        for a in range(A):
            for b in range(B):
                for m in range(1, M - 1):
                    out[a, m + 1, b] += c * v[a, m, b]
                    out[a, m - 1, b] -= c * v[a, m, b]
                out[a, 0, b] += -3.0 * c * v[a, 0, b]
                out[a, 1, b] += 4.0 * c * v[a, 0, b]
                out[a, 2, b] += -c * v[a, 0, b]
                out[a, M - 1, b] += 3.0 * c * v[a, M - 1, b]
                out[a, M - 2, b] += -4.0 * c * v[a, M - 1, b]
                out[a, M - 3, b] += c * v[a, M - 1, b]
        return out

    @njit(cache=True)
    def _diff2_nb(u, h):
        A, M, B = u.shape
        out = np.empty((A, M - 2, B))
        c = 1.0 / (h * h)
        for a in range(A):
            for m in range(1, M - 1):
                for b in range(B):
                    out[a, m - 1, b] = (u[a, m + 1, b] - 2.0 * u[a, m, b] + u[a, m - 1, b]) * c
        return out


    @njit(cache=True)
    def _invert_nb(g):
        N, d, _ = g.shape
        out = np.empty((N, d, d))
        a = np.empty((d, 2 * d))
        smallest = np.inf
        for z in range(N):
            for i in range(d):
                for j in range(d):
                    a[i, j] = g[z, i, j]
                    a[i, d + j] = 1.0 if i == j else 0.0
            for col in range(d):
                piv = col
                for r in range(col + 1, d):
                    if abs(a[r, col]) > abs(a[piv, col]):
                        piv = r
                if abs(a[piv, col]) < smallest:
                    smallest = abs(a[piv, col])
                if piv != col:
                    for j in range(2 * d):
                        tmp = a[col, j]
                        a[col, j] = a[piv, j]
                        a[piv, j] = tmp
                inv = 1.0 / a[col, col] if a[col, col] != 0.0 else np.nan
                for j in range(2 * d):
                    a[col, j] *= inv
                for r in range(d):
                    if r != col:
                        f = a[r, col]
                        for j in range(2 * d):
                            a[r, j] -= f * a[col, j]
            for i in range(d):
                for j in range(d):
                    out[z, i, j] = a[i, d + j]
        return out, smallest


IMPLEMENTATIONS = {
    "numpy": {
        "christoffel": christoffel_np,
        "curvature": curvature_np,
        "lsq_density": lsq_density_np,
        "lsq_partials": lsq_partials_np,
        "diff1": diff1_np,
        "diff1_adjoint": diff1_adjoint_np,
        "diff2": diff2_np,
        "invert": invert_np,
    }
}
if numba is not None:
    IMPLEMENTATIONS["numba"] = {
        "christoffel": _christoffel_nb,
        "curvature": _curvature_nb,
        "lsq_density": _lsq_density_nb,
        "lsq_partials": _lsq_partials_nb,
        "diff1": _diff1_nb,
        "diff1_adjoint": _diff1_adjoint_nb,
        "diff2": _diff2_nb,
        "invert": _invert_nb,
    }

BACKEND = "numba" if USE_NUMBA else "numpy"
_impl = IMPLEMENTATIONS[BACKEND]


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def christoffel(ginv, dg):
    return _impl["christoffel"](_c(ginv), _c(dg))


def curvature(ginv, dg, d2g):
    """Return (Gamma, dGamma, Riemann); ``dGamma[N,k,i,j,m] = d_m Gamma^k_ij``."""
    return _impl["curvature"](_c(ginv), _c(dg), _c(d2g))


def lsq_density(hinv, phi, d):
    """Per-node h^ab phi_ij d^i_a d^j_b."""
    return _impl["lsq_density"](_c(hinv), _c(phi), _c(d))


def lsq_partials(hinv, phi, dphi, dX, d):
    """Partials of the least-squares density w.r.t. x^k and x^i_a (d = xdot - X)."""
    return _impl["lsq_partials"](_c(hinv), _c(phi), _c(dphi), _c(dX), _c(d))


def invert(g):
    """Gauss-Jordan inverses of an (N, d, d) stack and the smallest pivot seen."""
    inv, smallest = _impl["invert"](_c(g))
    return inv, float(smallest)


def _as3(u, axis):
    u = np.moveaxis(np.asarray(u, dtype=np.float64), axis, 0)
    m = u.shape[0]
    moved = u.shape
    # (M, rest) -> (1, M, rest)
    return np.ascontiguousarray(u.reshape(1, m, -1)), moved


def diff1(u, h, axis=0):
    """Second-order first derivative along ``axis`` (one-sided at both faces)."""
    u3, moved = _as3(u, axis)
    if u3.shape[1] < 3:
        raise ValueError("need at least 3 nodes along the differentiated axis")
    out = _impl["diff1"](u3, float(h))
    return np.moveaxis(out.reshape(moved), 0, axis)


def diff1_adjoint(v, h, axis=0):
    """Transpose of :func:`diff1` (as a linear map along ``axis``)."""
    v3, moved = _as3(v, axis)
    out = _impl["diff1_adjoint"](v3, float(h))
    return np.moveaxis(out.reshape(moved), 0, axis)


def diff2(u, h, axis=0):
    """Central second difference; the result drops the two face nodes."""
    u3, moved = _as3(u, axis)
    out = _impl["diff2"](u3, float(h))
    shape = (moved[0] - 2,) + tuple(moved[1:])
    return np.moveaxis(out.reshape(shape), 0, axis)
