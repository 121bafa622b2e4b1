"""Compare the numba and numpy kernel backends.

Run with ``python benchmarks/bench_kernels.py [--repeat R] [--nodes N]``.
Each kernel is warmed up once (so JIT compilation is excluded), then timed
as the best of R runs on both backends.  Outputs are compared to guard
against the two paths drifting apart.  An end-to-end row times an energy
gradient on the circle grid with each backend swapped in.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from jetlab import _kernels
from jetlab.config import build, initial_map, read_config
from jetlab.lsqsolve import _GridEvaluator


def _inputs(N: int, d: int, n: int, p: int, rng):
    a = rng.normal(size=(N, d, d))
    ginv = np.einsum("nij,nkj->nik", a, a) + d * np.eye(d)
    dg = rng.normal(size=(N, d, d, d))
    dg = 0.5 * (dg + np.swapaxes(dg, 1, 2))
    d2g = rng.normal(size=(N, d, d, d, d))
    d2g = 0.25 * (d2g + np.swapaxes(d2g, 1, 2) + np.swapaxes(d2g, 3, 4)
                  + np.swapaxes(np.swapaxes(d2g, 1, 2), 3, 4))
    b = rng.normal(size=(N, p, p))
    hinv = np.einsum("nij,nkj->nik", b, b) + p * np.eye(p)
    c = rng.normal(size=(N, n, n))
    phi = np.einsum("nij,nkj->nik", c, c) + n * np.eye(n)
    dphi = rng.normal(size=(N, n, n, n))
    dphi = 0.5 * (dphi + np.swapaxes(dphi, 1, 2))
    dX = rng.normal(size=(N, n, p, n))
    dev = rng.normal(size=(N, n, p))
    u = rng.normal(size=(1, N, 4))
    return {
        "christoffel": (ginv, dg),
        "curvature": (ginv, dg, d2g),
        "lsq_density": (hinv, phi, dev),
        "lsq_partials": (hinv, phi, dphi, dX, dev),
        "diff1": (u, 0.01),
        "diff1_adjoint": (u, 0.01),
        "diff2": (u, 0.01),
        "invert": (ginv,),
    }


def _best(fn, args, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, dtype=float)) for o in out])
    return np.ravel(out)


def bench_kernels(N: int, repeat: int) -> list[tuple]:
    if "numba" not in _kernels.IMPLEMENTATIONS:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    cases = _inputs(N, d=3, n=3, p=2, rng=rng)
    rows = []
    for name, args in cases.items():
        args = tuple(np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in args)
        nb = _kernels.IMPLEMENTATIONS["numba"][name]
        npy = _kernels.IMPLEMENTATIONS["numpy"][name]
        ref, got = _flat(npy(*args)), _flat(nb(*args))
        scale = max(float(np.max(np.abs(ref))), 1.0)
        gap = float(np.max(np.abs(ref - got))) / scale
        rows.append((name, _best(npy, args, repeat), _best(nb, args, repeat), gap))
    return rows


def bench_gradient(repeat: int) -> tuple:
    cfg = read_config("rotation")
    sys_ = build(cfg).sys
    m = initial_map(cfg, sys_)
    ev = _GridEvaluator(sys_, m)
    times, grads = {}, {}
    saved = _kernels._impl
    try:
        for backend in ("numpy", "numba"):
            _kernels._impl = _kernels.IMPLEMENTATIONS[backend]
            grads[backend] = ev.gradient(m.values)
            times[backend] = _best(ev.gradient, (m.values,), repeat)
    finally:
        _kernels._impl = saved
    a, b = grads["numpy"], grads["numba"]
    gap = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
    return ("energy_gradient[rotation]", times["numpy"], times["numba"], gap)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=100_000, help="batch size for the kernel rows")
    args = ap.parse_args(argv)
    rows = bench_kernels(args.nodes, args.repeat) + [bench_gradient(args.repeat)]
    print(f"{'kernel':28} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'rel gap':>9}")
    for name, t_np, t_nb, gap in rows:
        print(f"{name:28} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.1f} {gap:9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
