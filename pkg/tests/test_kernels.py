import math
import os
import subprocess
import sys
import zlib

import numpy as np
import pytest

from jetlab import _kernels
from jetlab.riemann import MetricField, curvature

HAVE_NUMBA = "numba" in _kernels.IMPLEMENTATIONS
needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def spd(rng, z, d):
    a = rng.normal(size=(z, d, d))
    return a @ np.swapaxes(a, 1, 2) + d * np.eye(d)


def sym_derivs(rng, z, d, order):
    shape = (z, d, d) + (d,) * order
    a = rng.normal(size=shape)
    return 0.5 * (a + np.swapaxes(a, 1, 2))


def inputs(name, rng):
    z, d, n, p = 40, 3, 3, 2
    if name == "christoffel":
        return (np.linalg.inv(spd(rng, z, d)), sym_derivs(rng, z, d, 1))
    if name == "curvature":
        d2 = sym_derivs(rng, z, d, 2)
        d2 = 0.5 * (d2 + np.swapaxes(d2, 3, 4))
        return (np.linalg.inv(spd(rng, z, d)), sym_derivs(rng, z, d, 1), d2)
    if name == "lsq_density":
        return (np.linalg.inv(spd(rng, z, p)), spd(rng, z, n), rng.normal(size=(z, n, p)))
    if name == "lsq_partials":
        return (np.linalg.inv(spd(rng, z, p)), spd(rng, z, n), sym_derivs(rng, z, n, 1),
                rng.normal(size=(z, n, p, n)), rng.normal(size=(z, n, p)))
    if name in ("diff1", "diff1_adjoint", "diff2"):
        return (rng.normal(size=(3, 17, 4)), 0.3)
    if name == "invert":
        return (spd(rng, z, 4),)
    raise KeyError(name)


KERNELS = sorted(_kernels.IMPLEMENTATIONS["numpy"])


@needs_numba
@pytest.mark.parametrize("name", KERNELS)
def test_backends_agree(name):
    args = inputs(name, np.random.default_rng(zlib.crc32(name.encode())))
    a = _kernels.IMPLEMENTATIONS["numpy"][name](*args)
    b = _kernels.IMPLEMENTATIONS["numba"][name](*args)
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    assert len(a) == len(b)
    for u, v in zip(a, b):
        np.testing.assert_allclose(np.asarray(v), np.asarray(u), rtol=1e-12, atol=1e-12)


def test_every_backend_registers_every_kernel():
    names = {frozenset(impl) for impl in _kernels.IMPLEMENTATIONS.values()}
    assert len(names) == 1


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
def test_diff1_adjoint_is_the_transpose(backend, monkeypatch):
    monkeypatch.setattr(_kernels, "_impl", _kernels.IMPLEMENTATIONS[backend])
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(11, 2)), rng.normal(size=(11, 2))
    lhs = np.sum(_kernels.diff1(u, 0.7) * v)
    rhs = np.sum(u * _kernels.diff1_adjoint(v, 0.7))
    assert lhs == pytest.approx(rhs, rel=1e-13)


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
def test_stencils_are_exact_on_quadratics(backend, monkeypatch):
    monkeypatch.setattr(_kernels, "_impl", _kernels.IMPLEMENTATIONS[backend])
    t = np.linspace(0, 1, 9)
    u = 2 * t**2 - t + 3
    np.testing.assert_allclose(_kernels.diff1(u, t[1]), 4 * t - 1, atol=1e-12)
    np.testing.assert_allclose(_kernels.diff2(u, t[1]), np.full(7, 4.0), atol=1e-10)


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
def test_partials_match_differences_of_the_density(backend, monkeypatch):
    monkeypatch.setattr(_kernels, "_impl", _kernels.IMPLEMENTATIONS[backend])
    rng = np.random.default_rng(5)
    z, n, p = 1, 3, 2
    hinv = np.linalg.inv(spd(rng, z, p))
    x0 = rng.normal(size=n)
    y0 = rng.normal(size=(n, p))
    A = rng.normal(size=(n, n, n))  # phi(x) = S + sum_k x_k (A_k + A_k^T) / 10
    S = spd(rng, 1, n)[0]
    B = rng.normal(size=(n, p, n))  # X(x) = B x

    def phi(x):
        return S + np.einsum("k,kij->ij", x, A + np.swapaxes(A, 1, 2)) / 10

    def density(x, y):
        return _kernels.lsq_density(hinv, phi(x)[None], (y - B @ x)[None])[0]

    dphi = np.transpose(A + np.swapaxes(A, 1, 2), (1, 2, 0))[None] / 10
    dLdx, dLdy = _kernels.lsq_partials(hinv, phi(x0)[None], dphi, B[None], (y0 - B @ x0)[None])
    step = 1e-6
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        fd = (density(x0 + e, y0) - density(x0 - e, y0)) / (2 * step)
        assert dLdx[0, k] == pytest.approx(fd, rel=1e-7, abs=1e-8)
    for i in range(n):
        for a in range(p):
            e = np.zeros((n, p))
            e[i, a] = step
            fd = (density(x0, y0 + e) - density(x0, y0 - e)) / (2 * step)
            assert dLdy[0, i, a] == pytest.approx(fd, rel=1e-7, abs=1e-8)


@pytest.mark.parametrize("backend", sorted(_kernels.IMPLEMENTATIONS))
def test_invert_reports_the_smallest_pivot(backend, monkeypatch):
    monkeypatch.setattr(_kernels, "_impl", _kernels.IMPLEMENTATIONS[backend])
    inv, piv = _kernels.invert(np.array([[[4.0, 0.0], [0.0, 0.5]]]))
    np.testing.assert_allclose(inv[0], np.diag([0.25, 2.0]))
    assert piv == 0.5
    _, piv = _kernels.invert(np.array([[[1.0, 2.0], [2.0, 4.0]]]))
    assert piv < 1e-14


def test_numpy_backend_end_to_end(numpy_backend):
    sphere = MetricField.diagonal(["x1", "x2"], ["1", "sin(x1)^2"])
    assert curvature(sphere, [math.pi / 3, 0.0]).scalar == pytest.approx(2.0, abs=1e-13)


def test_environment_flag_selects_numpy():
    env = dict(os.environ, JETLAB_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from jetlab import _kernels; print(_kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"
