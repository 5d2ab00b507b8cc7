import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonholo.brackets import (
    PhaseState,
    ThreeFormSpec,
    alternate,
    alternation_residual,
    bracket_jacobiator,
    coordinate_function,
    coordinate_jacobiators,
    gauge_endomorphism,
    gauge_transform,
    hamiltonian_vf,
    jacobiator,
    lambda_from_generators,
    matrix_bracket,
    pi_lambda_casimir_formula,
    pi_lambda_coords,
    pi_lambda_simple,
    pi_nh,
    random_three_form,
    xi_flat,
)
from nonholo.dynamics import hamiltonian_gradient, nh_vector_field
from nonholo.errors import InconsistentGenerators
from nonholo.gauge import GaugeGenerator
from nonholo.geometry import frame_at
from nonholo.systems.chaplygin import EPS

from conftest import random_state


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=27, max_size=27))
def test_alternate_is_alternating_and_idempotent(vals):
    t = np.array(vals).reshape(3, 3, 3)
    a = alternate(t)
    assert alternation_residual(a) < 1e-12
    assert np.allclose(alternate(a), a)


def test_phase_state_round_trip():
    st_ = PhaseState(np.arange(5.0), np.array([1.0, 2.0, 3.0]))
    back = PhaseState.from_flat(st_.x, 5)
    assert np.array_equal(back.q, st_.q) and np.array_equal(back.pi, st_.pi)


def test_chaplygin_lambda_is_volume_form(chaplygin, chaplygin_params, rng):
    lam = lambda_from_generators(chaplygin, chaplygin.generators)
    mr2 = chaplygin_params.m * chaplygin_params.R ** 2
    for _ in range(20):
        q = chaplygin.sample_point(rng)
        b = lam(q)
        assert alternation_residual(b) < 1e-12
        assert b[0, 1, 2] == pytest.approx(-mr2 * np.sin(q[1]), abs=1e-10)


def test_lambda_requires_generators_first(chaplygin, rng):
    misplaced = GaugeGenerator.frame_member(1, 3, "Y2")
    lam = lambda_from_generators(chaplygin, [misplaced])
    with pytest.raises(InconsistentGenerators):
        lam(chaplygin.sample_point(rng))


def test_lambda_requires_skew_generators(ellipsoid, rng):
    system = ellipsoid["equivariant"]
    lam = lambda_from_generators(system, [GaugeGenerator.frame_member(0, 3, "W1")])
    with pytest.raises(InconsistentGenerators):
        lam(system.sample_point(rng))


def test_nonholonomic_bivector_blocks(chaplygin, rng):
    st_ = random_state(chaplygin, rng)
    blocks = pi_nh(chaplygin, st_)
    assert blocks.skew_residual() < 1e-14
    p = blocks.matrix()
    assert np.allclose(p, -p.T)
    n = chaplygin.n
    # {q, pi_b} is the b-th frame field
    for b in range(3):
        e = np.zeros(n + 3)
        e[n + b] = 1.0
        x = p @ e
        assert np.allclose(x[:n], chaplygin.frame(st_.q)[:, b])
        assert np.allclose(x[n:], blocks.lower_right[:, b])


def test_characteristic_distribution_is_second_order(chaplygin, rng):
    st_ = random_state(chaplygin, rng)
    p = pi_nh(chaplygin, st_).matrix()
    assert np.linalg.matrix_rank(p, tol=1e-10) == 2 * chaplygin.r
    rho = chaplygin.frame(st_.q)
    for _ in range(5):
        x = p @ rng.normal(size=8)
        coef, *_ = np.linalg.lstsq(rho, x[:5], rcond=None)
        assert np.allclose(rho @ coef, x[:5], atol=1e-12)


def test_nonholonomic_field_is_hamiltonian(chaplygin, ellipsoid, rng):
    for system in (chaplygin, ellipsoid["equivariant"]):
        st_ = random_state(system, rng)
        xh = hamiltonian_vf(pi_nh(system, st_), hamiltonian_gradient(system, st_))
        assert np.allclose(xh, nh_vector_field(system, st_), atol=1e-12)


def test_hamiltonian_vf_checks_shape(chaplygin, rng):
    with pytest.raises(ValueError):
        hamiltonian_vf(pi_nh(chaplygin, random_state(chaplygin, rng)), np.zeros(3))


def test_three_routes_to_gauge_transformed_bracket(chaplygin, ellipsoid, offset_sphere, rng):
    for system in (chaplygin, ellipsoid["adapted"], offset_sphere["adapted"]):
        lam = lambda_from_generators(system, system.generators, tol=1e-6)
        ell = len(system.generators)
        for _ in range(10):
            st_ = random_state(system, rng)
            a = gauge_transform(system, lam, st_)
            b = pi_lambda_coords(system, lam, st_)
            c = pi_lambda_casimir_formula(system, lam, st_, ell)
            d = pi_lambda_simple(system, st_, ell)
            assert np.allclose(a.rho, b.rho)
            for other in (b, c, d):
                assert np.allclose(a.lower_right, other.lower_right, atol=1e-12)
            assert a.skew_residual() < 1e-12


def test_gauge_transform_with_random_lambda_matches_coordinate_formula(chaplygin, rng):
    lam = random_three_form(3, 5, rng, scale=2.0)
    for _ in range(10):
        st_ = random_state(chaplygin, rng)
        assert np.allclose(gauge_transform(chaplygin, lam, st_).lower_right,
                           pi_lambda_coords(chaplygin, lam, st_).lower_right, atol=1e-12)


def test_endomorphism_is_unit_triangular(chaplygin, rng):
    lam = random_three_form(3, 5, rng)
    st_ = random_state(chaplygin, rng)
    e = gauge_endomorphism(chaplygin, lam, st_)
    assert np.allclose(e[:5, :5], np.eye(5)) and np.allclose(e[5:, 5:], np.eye(3))
    assert np.allclose(e[:5, 5:], 0.0)
    assert np.linalg.det(e) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(gauge_endomorphism(chaplygin, ThreeFormSpec.zero(3), st_), np.eye(8))


def test_contraction_annihilates_the_dynamics(chaplygin, rng):
    lam = random_three_form(3, 5, rng)
    for _ in range(5):
        st_ = random_state(chaplygin, rng)
        xi = xi_flat(chaplygin, lam, st_)
        assert np.max(np.abs(xi @ nh_vector_field(chaplygin, st_))) < 1e-12
        assert np.allclose(xi, -xi.T)


def test_gauge_momenta_q_part_is_frame_field(chaplygin, rng):
    lam = lambda_from_generators(chaplygin, chaplygin.generators)
    st_ = random_state(chaplygin, rng)
    fd = frame_at(chaplygin, st_.q)
    e = np.zeros(8)
    e[5] = 1.0
    x = gauge_transform(chaplygin, lam, st_).matrix() @ e
    assert np.allclose(x[:5], fd.rho[:, 0])
    assert np.max(np.abs(x[5:])) < 1e-12


# -- Jacobiators ---------------------------------------------------------------


def rigid_body(x):
    return -np.einsum("ijk,k->ij", EPS, x)


def test_matrix_bracket_is_skew_and_leibniz(rng):
    f = coordinate_function(3, 0)
    g = coordinate_function(3, 1)
    x = rng.normal(size=3)
    assert matrix_bracket(rigid_body, f, g, x) == pytest.approx(-matrix_bracket(rigid_body, g, f, x))
    assert matrix_bracket(rigid_body, f, g, x) == pytest.approx(-x[2])


def test_lie_poisson_bracket_satisfies_jacobi(rng):
    for _ in range(5):
        x = rng.normal(size=3)
        assert np.max(np.abs(coordinate_jacobiators(rigid_body, x))) < 1e-8


def test_deformed_bracket_violates_jacobi(rng):
    def deformed(x):
        p = rigid_body(x)
        p[0, 1] += x[0] ** 2
        p[1, 0] -= x[0] ** 2
        return p

    js = [np.max(np.abs(coordinate_jacobiators(deformed, rng.normal(size=3)))) for _ in range(5)]
    assert max(js) > 1e-2


def test_bracket_jacobiator_on_nonlinear_functions(rng):
    from nonholo.brackets import ScalarFunction

    f = ScalarFunction(lambda x: x[0] * x[1], lambda x: np.array([x[1], x[0], 0.0]))
    g = ScalarFunction(lambda x: np.sin(x[2]), lambda x: np.array([0.0, 0.0, np.cos(x[2])]))
    h = ScalarFunction(lambda x: x @ x, lambda x: 2 * x)
    x = rng.normal(size=3)
    assert abs(bracket_jacobiator(rigid_body, f, g, h, x)) < 1e-8
    # the same cyclic sum for a bracket that is not Poisson
    p = lambda y: rigid_body(y) + np.array([[0, y[0] ** 2, 0], [-y[0] ** 2, 0, 0], [0, 0, 0]])  # noqa: E731
    assert abs(bracket_jacobiator(p, f, g, h, x)) > 1e-3


def test_nonholonomic_bracket_jacobiator_is_nonzero(chaplygin, rng):
    st_ = random_state(chaplygin, rng)
    blocks_fn = lambda s: pi_nh(chaplygin, s)  # noqa: E731
    j = coordinate_jacobiators(lambda x: blocks_fn(PhaseState.from_flat(x, 5)).matrix(), st_.x)
    a, b, c = np.unravel_index(np.argmax(np.abs(j)), j.shape)
    assert abs(j[a, b, c]) > 1e-3
    fs = [coordinate_function(8, k) for k in (a, b, c)]
    assert jacobiator(chaplygin, blocks_fn, *fs, st_) == pytest.approx(j[a, b, c], rel=1e-4)
