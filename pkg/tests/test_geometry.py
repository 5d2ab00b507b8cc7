import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonholo.errors import DegenerateFrame, OutOfChart
from nonholo.geometry import (
    MechanicalSystem,
    VectorField,
    bracket_tensor,
    central_jacobian,
    coordinate_field,
    flat_system,
    frame_at,
    jacobian_mismatch,
    lie_bracket,
    lie_derivative_metric,
    lie_derivative_metric_on_D,
    metric_is_valid,
    orthogonal_complement,
)
from nonholo.systems import chaplygin as chap


def test_central_jacobian_of_polynomial():
    f = lambda q: np.array([q[0] ** 2 * q[1], np.sin(q[1])])  # noqa: E731
    q = np.array([0.7, -1.3])
    exact = np.array([[2 * q[0] * q[1], q[0] ** 2], [0.0, np.cos(q[1])]])
    assert np.allclose(central_jacobian(f, q), exact, atol=1e-9)


def test_central_jacobian_refuses_to_leave_domain():
    with pytest.raises(OutOfChart):
        central_jacobian(lambda q: q, np.array([0.0]), domain=lambda q: q[0] >= 0)


def test_lie_bracket_of_coordinate_and_linear_field():
    x_field = coordinate_field(2, 0)
    shear = VectorField(lambda q: np.array([0.0, q[0]]))  # x d/dy
    assert np.allclose(lie_bracket(x_field, shear, np.array([0.3, 0.4])), [0.0, 1.0], atol=1e-9)
    assert np.allclose(lie_bracket(shear, x_field, np.array([0.3, 0.4])), [0.0, -1.0], atol=1e-9)


def test_rotation_is_killing_and_dilation_is_not():
    flat = flat_system(2)
    rot = VectorField(lambda q: np.array([-q[1], q[0]]))
    dil = VectorField(lambda q: q.copy())
    q = np.array([0.2, -0.5])
    assert np.max(np.abs(lie_derivative_metric(flat, rot, q))) < 1e-9
    assert np.allclose(lie_derivative_metric(flat, dil, q), 2 * np.eye(2), atol=1e-9)
    assert np.allclose(lie_derivative_metric_on_D(flat, dil, q), 2 * np.eye(2), atol=1e-9)


def test_flat_system_has_no_structure_coefficients():
    fd = frame_at(flat_system(3), np.array([0.1, 0.2, 0.3]))
    assert np.all(fd.c_down == 0)
    assert np.allclose(fd.rho_bar @ fd.rho, np.eye(3))


def test_chaplygin_frame_matches_closed_form(chaplygin, chaplygin_params, rng):
    for _ in range(20):
        q = chaplygin.sample_point(rng)
        fd = frame_at(chaplygin, q)
        assert np.allclose(fd.c_down, chap.c_down_closed_form(chaplygin_params, q[1]), atol=1e-12)
        assert np.allclose(fd.gram_inv, chap.gram_inv_closed_form(chaplygin_params, q[1]), atol=1e-12)
        assert np.allclose(fd.rho_bar @ fd.rho, np.eye(3), atol=1e-12)
        assert np.allclose(fd.rho_bar @ fd.complement, 0.0, atol=1e-12)


def test_supplied_jacobians_agree_with_finite_differences(chaplygin, rng):
    for _ in range(5):
        q = chaplygin.sample_point(rng)
        for X in chaplygin.frame_fields:
            assert jacobian_mismatch(X, q) < 1e-8
    wrong = VectorField(lambda q: np.array([q[0] ** 2]), lambda q: np.array([[1.0]]))
    assert jacobian_mismatch(wrong, np.array([2.0])) > 0.5


def test_metric_validity(chaplygin, rng):
    assert metric_is_valid(chaplygin, chaplygin.sample_point(rng))
    indefinite = flat_system(2, metric=np.diag([1.0, -1.0]))
    assert not metric_is_valid(indefinite, np.zeros(2))
    asym = flat_system(2, metric=np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert not metric_is_valid(asym, np.zeros(2))


def test_degenerate_frame_is_reported():
    # complement parallel to the distribution
    sys_ = MechanicalSystem(
        name="bad",
        n=2,
        r=1,
        metric=lambda q: np.eye(2),
        frame=lambda q: np.array([[1.0], [0.0]]),
        complement=lambda q: np.array([[1.0], [0.0]]),
    )
    with pytest.raises(DegenerateFrame):
        frame_at(sys_, np.zeros(2))


def test_chart_boundary_is_enforced(chaplygin):
    with pytest.raises(OutOfChart):
        frame_at(chaplygin, np.array([0.0, 1e-4, 0.0, 0.0, 0.0]))
    assert not chaplygin.in_domain(np.array([0.0, np.pi, 0.0, 0.0, 0.0]))
    assert not chaplygin.in_domain(np.array([0.0, np.nan, 0.0, 0.0, 0.0]))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_orthogonal_complement_is_metric_orthogonal(vals):
    rho = np.array(vals[:4]).reshape(2, 2)
    rho = np.vstack([rho, np.array(vals[4:])[None, :]])  # (3, 2)
    if np.linalg.matrix_rank(rho) < 2:
        return
    g = np.diag([1.0, 2.0, 3.0])
    w = orthogonal_complement(rho, g)
    assert w.shape == (3, 1)
    assert np.allclose(rho.T @ g @ w, 0.0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, np.pi - 0.05), st.floats(-3, 3))
def test_frame_brackets_are_antisymmetric_and_match_lie_bracket(theta, psi):
    system = chap.build_chaplygin()
    q = np.array([0.4, theta, psi, 0.1, -0.2])
    br = bracket_tensor(system.frame(q), system.rho_jac(q))
    assert np.allclose(br, -np.swapaxes(br, -1, -2))
    fields = system.frame_fields
    for a in range(3):
        for b in range(3):
            assert np.allclose(br[:, a, b], lie_bracket(fields[a], fields[b], q), atol=1e-7)
