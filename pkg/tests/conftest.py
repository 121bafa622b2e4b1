import functools

import numpy as np
import pytest

from jetlab import _kernels
from jetlab.config import BUNDLED, build, read_config
from jetlab.jetgeom import JetPoint

BUNDLED_NAMES = [b[:-5] for b in BUNDLED]


@functools.lru_cache(maxsize=None)
def bundled(name: str):
    """(RunConfig, Built) for a bundled config, built once per session."""
    cfg = read_config(name)
    return cfg, build(cfg)


def jet(t, x, xdot) -> JetPoint:
    return JetPoint(np.array(t, float), np.array(x, float), np.array(xdot, float))


@pytest.fixture
def numpy_backend(monkeypatch):
    """Route every kernel through the pure-numpy implementations."""
    monkeypatch.setattr(_kernels, "_impl", _kernels.IMPLEMENTATIONS["numpy"])
    yield


@pytest.fixture(params=BUNDLED_NAMES)
def bundled_name(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
