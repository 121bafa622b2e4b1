"""Seeded random expression sources for derivative and round-trip tests.

Every generated expression is smooth on [-1, 1]^3: denominators, log and
sqrt arguments are kept away from zero, and exponent arguments are bounded.
"""
import numpy as np

VARIABLES = ["t1", "x1", "x2"]


def _leaf(rng) -> str:
    if rng.random() < 0.7:
        return str(rng.choice(VARIABLES))
    return repr(round(float(rng.uniform(-2.0, 2.0)), 3))


def source(rng, depth: int) -> str:
    if depth == 0:
        return _leaf(rng)
    a = source(rng, depth - 1)
    b = source(rng, depth - 1)
    kind = int(rng.integers(13))
    if kind == 0:
        return f"({a}) + ({b})"
    if kind == 1:
        return f"({a}) - ({b})"
    if kind == 2:
        return f"({a}) * ({b})"
    if kind == 3:
        return f"({a}) / (1.5 + sin({b}))"
    if kind == 4:
        return f"({a})^{int(rng.integers(2, 5))}"
    if kind == 5:
        return f"(1 + ({a})^2)^{rng.choice(['0.5', '1.5', '-0.5'])}"
    if kind == 6:
        return f"-({a})"
    if kind == 7:
        return f"sin({a})"
    if kind == 8:
        return f"cos({a})"
    if kind == 9:
        return f"tan(0.5 * sin({a}))"
    if kind == 10:
        return f"exp(0.5 * cos({a}))"
    if kind == 11:
        return f"log(2 + cos({a}))"
    return f"sqrt(1 + ({a})^2)"


def corpus(count: int, seed: int = 2024, depth: int = 3) -> list[str]:
    rng = np.random.default_rng(seed)
    return [source(rng, int(rng.integers(1, depth + 1))) for _ in range(count)]


def points(count: int, seed: int = 7) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [dict(zip(VARIABLES, map(float, rng.uniform(-1.0, 1.0, 3)))) for _ in range(count)]


def fd_gap(expr, var: str, at: dict, deriv, evaluate, step: float = 1e-6) -> float:
    """|d - central FD| relative to max(1, |d|, |FD|)."""
    up = dict(at)
    dn = dict(at)
    up[var] += step
    dn[var] -= step
    fd = (evaluate(expr, up) - evaluate(expr, dn)) / (2.0 * step)
    d = evaluate(deriv, at)
    return abs(d - fd) / max(1.0, abs(d), abs(fd))
