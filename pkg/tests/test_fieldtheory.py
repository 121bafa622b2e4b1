import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BUNDLED_NAMES, bundled, jet
from jetlab.config import sample_points
from jetlab.fieldtheory import (
    einstein_report, em_field, maxwell_report, maxwell_residuals, sasakian_metric, stress_energy_batch,
)
from jetlab.grids import Box, DegenerateGrid
from jetlab.jetgeom import JetPoint, SystemSpec
from jetlab.riemann import MetricField

SPHERE = MetricField.diagonal(["x1", "x2"], ["1", "sin(x1)^2"])
FLAT_T1 = MetricField.identity(["t1"])


def points(name, count=6, seed=4):
    cfg, built = bundled(name)
    T, X, Y = sample_points(cfg, built.sys, count, seed)
    return built.sys, [JetPoint(T[q], X[q], Y[q]) for q in range(count)]


def test_pfaff_field_strength_vanishes():
    for name in ("pfaff_closed", "pfaff_nonclosed"):
        sys, pts = points(name, 3)
        for P in pts:
            assert not em_field(sys, P).F.any()


def test_rotation_field_strength():
    sys, pts = points("rotation", 3)
    for P in pts:
        F = em_field(sys, P).F
        assert F[0, 0, 1] == -1.0
        assert F[0, 1, 0] == 1.0


def test_gradient_field_strength_vanishes():
    sys, pts = points("gradient", 3)
    for P in pts:
        assert np.abs(em_field(sys, P).F).max() <= 1e-15


@pytest.mark.parametrize("name", BUNDLED_NAMES)
def test_homogeneous_maxwell_equations(name):
    sys, pts = points(name, 6)
    for P in pts:
        _, eq2, eq3 = maxwell_residuals(sys, P)
        assert np.abs(eq2).max() <= 1e-9
        assert not eq3.any()


def test_maxwell_on_a_curved_fibre():
    sys = SystemSpec(1, 2, FLAT_T1, SPHERE, [["x2*t1"], ["cos(x1)"]])
    for x1 in (0.4, 1.1, 2.0):
        P = jet([0.7], [x1, 0.3], [[0.1], [0.2]])
        assert np.abs(maxwell_report(sys, P).eq2).max() <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=-4, max_value=4, allow_nan=False))
def test_field_strength_is_linear_in_the_field(c):
    X = [["x2*sin(t1)", "x1"], ["x1^2", "t2*x2"]]
    h = MetricField.identity(["t1", "t2"])
    phi = MetricField(["x1", "x2"], [["2", "0.5"], ["0.5", "1 + x1^2"]])
    base = SystemSpec(2, 2, h, phi, X)
    scaled = SystemSpec(2, 2, h, phi, [[f"{c!r}*({e})" for e in row] for row in X])
    P = jet([0.2, -0.4], [0.3, 0.9], [[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_allclose(em_field(scaled, P).F, c * em_field(base, P).F, atol=1e-13)


def test_sasakian_metric_flat_without_field():
    sys = SystemSpec(1, 2, FLAT_T1, MetricField.identity(["x1", "x2"]), [["0"], ["0"]])
    S = sasakian_metric(sys, jet([0.0], [0.1, 0.2], [[0.3], [0.4]]))
    np.testing.assert_array_equal(S.coordinate, np.eye(5))


def test_sasakian_metric_on_sphere_equator():
    sys = SystemSpec(1, 2, FLAT_T1, SPHERE, [["0"], ["0"]])
    S = sasakian_metric(sys, jet([0.0], [np.pi / 2, 0.0], [[0.0], [0.0]]))
    np.testing.assert_allclose(S.coordinate, np.eye(5), atol=1e-15)


@pytest.mark.parametrize("name", ["rotation", "sphere_orbits", "group_commuting", "yang_mills_q2"])
def test_sasakian_metric_is_positive_and_frame_orthonormal(name):
    sys, pts = points(name, 4)
    for P in pts:
        S = sasakian_metric(sys, P)
        assert np.linalg.eigvalsh(S.coordinate).min() > 0
        # pulling the coordinate form back along the adapted frame recovers the block metric
        np.testing.assert_allclose(S.frame.frame.T @ S.coordinate @ S.frame.frame, S.adapted, atol=1e-12)


def test_einstein_report_flat():
    sys, _ = points("rotation", 1)
    r = einstein_report(sys, 1.0, Box([0.0], [1.0], [64]), Box([0.0, 0.0], [1.0, 1.0], [64, 64]))
    assert not (r.Ttt.any() or r.Txx.any() or r.Tvv.any())
    assert r.conservationResiduals == (0.0, 0.0)
    assert len(r.zeroBlocks) == 6


@pytest.mark.parametrize("K", [1.0, 2.0, -0.5])
def test_einstein_report_sphere(K):
    sys = SystemSpec(1, 2, FLAT_T1, SPHERE, [["0"], ["1"]])
    r = einstein_report(sys, K, Box([0.0], [1.0], [64]), Box([0.5, 0.0], [2.5, 1.0], [64, 64]))
    # scalar curvature 2 on the fibre, 0 on the base, averaged to 1
    np.testing.assert_allclose(r.Ttt, [[-1.0 / K]], atol=1e-14)
    np.testing.assert_allclose(r.Txx, np.zeros((2, 2)), atol=1e-14)
    ginv = 1.0 / np.sin(1.5) ** 2
    np.testing.assert_allclose(r.Tvv[0, 0], -np.diag([1.0, 1.0 / ginv]) / K, atol=1e-14)
    assert max(r.conservationResiduals) <= 1e-10


def test_einstein_report_input_checks():
    sys, _ = points("rotation", 1)
    with pytest.raises(ValueError):
        einstein_report(sys, 0.0, Box([0.0], [1.0], [64]), Box([0.0, 0.0], [1.0, 1.0], [64, 64]))
    with pytest.raises(DegenerateGrid):
        einstein_report(sys, 1.0, Box([0.0], [1.0], [3]), Box([0.0, 0.0], [1.0, 1.0], [64, 64]))
    with pytest.raises(DegenerateGrid):
        einstein_report(sys, 1.0, Box([0.0], [1.0], [9]), Box([0.0, 1.0], [1.0, 1.0], [64, 64]))


def test_stress_energy_trace_identity():
    # in two fibre dimensions Ric = (R/2) phi, so T_xx reduces to (R/2 - s) phi / K
    sys = SystemSpec(1, 2, FLAT_T1, SPHERE, [["0"], ["1"]])
    x = np.array([[0.9, 0.0], [1.7, 0.4]])
    _, Txx, _, _, pd = stress_energy_batch(sys, np.zeros((2, 1)), x, 3.0)
    np.testing.assert_allclose(Txx, np.zeros_like(Txx), atol=1e-14)
    np.testing.assert_allclose(pd.scalar, [2.0, 2.0], atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-1, max_value=1, allow_nan=False), min_size=8, max_size=8))
def test_first_maxwell_equation_on_curved_nonlinear_systems(v):
    h = MetricField.diagonal(["t1", "t2"], ["1 + t2^2", "2"])
    X = [["x2*t1", "sin(x1)*t2"], ["cos(x1)*t1", "x1*x2"]]
    sys = SystemSpec(2, 2, h, SPHERE, X)
    P = jet([v[0], v[1]], [1.2 + 0.5 * v[2], v[3]], [[v[4], v[5]], [v[6], v[7]]])
    m = maxwell_report(sys, P)
    assert np.abs(m.eq1).max() <= 1e-12


def test_index_placement_matters_for_the_first_maxwell_equation():
    h = MetricField.diagonal(["t1", "t2"], ["1 + t2^2", "2"])
    sys = SystemSpec(2, 2, h, SPHERE, [["x2*t1", "t2"], ["x1", "t1"]])
    m = maxwell_report(sys, jet([0.3, 0.7], [0.9, 0.4], [[0.1, 0.2], [0.3, 0.4]]))
    assert np.abs(m.eq1_variant).max() > 1e-2
