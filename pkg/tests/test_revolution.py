import numpy as np
import pytest

from nonholo.brackets import PhaseState, fd_gradient, lambda_from_generators
from nonholo.dynamics import hamiltonian
from nonholo.errors import AdaptedBasisDegenerate, FloquetViolation, OutOfChart
from nonholo.geometry import frame_at, lie_bracket
from nonholo.systems import revolution as rev

from conftest import random_state

PROFILES = [
    rev.ShapeProfile("sphere"),
    rev.ShapeProfile("offset-sphere", offset=0.3),
    rev.ShapeProfile("ellipsoid", a=1.0, c=0.6),
]
PARAMS = [rev.RevolutionParams(I1=2.0, I3=1.0), rev.RevolutionParams(I1=1.3, I3=2.1, m=0.7)]


def test_profile_validation():
    for prof in PROFILES:
        assert prof.validate() == []
    with pytest.raises(ValueError):
        rev.ShapeProfile("cube")
    with pytest.raises(ValueError):
        rev.ShapeProfile("offset-sphere", R=1.0, offset=1.2)
    with pytest.raises(ValueError):
        rev.RevolutionParams(potential="magnetic")


def test_profile_derivatives(rng):
    prof = rev.ShapeProfile("ellipsoid", a=1.2, c=0.5)
    for g3 in rng.uniform(-0.95, 0.95, 10):
        f1, df1, f2, df2 = prof.eval(g3)
        h = 1e-6
        assert df1 == pytest.approx((prof.f1(g3 + h) - prof.f1(g3 - h)) / (2 * h), rel=1e-6)
        assert df2 == pytest.approx((prof.f2(g3 + h) - prof.f2(g3 - h)) / (2 * h), rel=1e-6)


def _l_from_skew_conditions(system, theta, gk):
    """(g', k') from <[Z, Y3], Z> = 0 and <[Z, Y2], Y3> + <[Z, Y3], Y2> = 0
    with Z = g W1 + k W2, Y2 = W1, computed from Lie brackets of the frame."""
    q = np.array([0.3, theta, 0.2, 0.0, 0.0])
    w1f, w2f, y3f = system.frame_fields
    g = system.metric(q)

    def ip(a, b):
        return a @ g @ b

    b13, b23, b21 = lie_bracket(w1f, y3f, q), lie_bracket(w2f, y3f, q), lie_bracket(w2f, w1f, q)
    w1, w2, y3 = w1f(q), w2f(q), y3f(q)
    gg, kk = gk
    z = gg * w1 + kk * w2
    lhs = np.array([[ip(w1, z), ip(w2, z)], [ip(w1, w1), ip(w2, w1)]])
    rhs = np.array([gg * ip(b13, z) + kk * ip(b23, z), kk * ip(b21, y3) + gg * ip(b13, w1) + kk * ip(b23, w1)])
    return np.linalg.solve(lhs, rhs)


@pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
@pytest.mark.parametrize("params", PARAMS, ids=["I1>I3", "I1<I3"])
def test_gauge_ode_matrix_matches_skew_conditions(prof, params):
    # frame only; no ODE solution needed
    system = rev.build_equivariant(prof, params, solutions=())
    for theta in (0.4, 1.1, 2.0, 2.9):
        lm = rev.l_matrix(prof, params, theta)
        for gk in ((1.0, 0.3), (0.2, 1.0), (-0.5, 0.7)):
            assert np.allclose(_l_from_skew_conditions(system, theta, gk), lm @ np.array(gk), atol=1e-8)


@pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.kind)
def test_gauge_ode_matrix_is_odd_and_periodic(prof):
    params = PARAMS[1]
    for theta in (0.3, 1.0, 2.5, 1e-5):
        assert np.allclose(rev.l_matrix(prof, params, -theta), -rev.l_matrix(prof, params, theta), atol=1e-12)
        assert np.allclose(rev.l_matrix(prof, params, theta + 2 * np.pi), rev.l_matrix(prof, params, theta),
                           atol=1e-9)


def test_floquet_solutions(ellipsoid, offset_sphere):
    for bundle in (ellipsoid, offset_sphere):
        sols = bundle["solutions"]
        for s in sols:
            assert s.evenness_residual < 1e-6 and s.periodicity_residual < 1e-6
        assert np.min(np.abs(rev.wronskian(sols))) > 1e-3
        assert np.allclose(sols[0](0.0), [1.0, 0.0]) and np.allclose(sols[1](0.0), [0.0, 1.0])


def test_homogeneous_ball_has_constant_solution():
    for params in PARAMS:
        sols = rev.solve_gauge_ode(rev.ShapeProfile("sphere"), params)
        assert np.max(np.abs(sols[0].values - [1.0, 0.0])) < 1e-9


def test_coarse_grid_reports_floquet_violation():
    with pytest.raises(FloquetViolation):
        rev.solve_gauge_ode(rev.ShapeProfile("offset-sphere", offset=0.3), PARAMS[0], n=6)


def test_solution_interpolant_and_derivative(ellipsoid):
    sol = ellipsoid["solutions"][1]
    h = 1e-6
    for theta in (0.37, 1.4, 2.2, 5.0):
        fd = (sol(theta + h) - sol(theta - h)) / (2 * h)
        assert np.allclose(sol.derivative(theta), fd, atol=1e-6)
    assert np.allclose(sol(0.5), sol(0.5 + 2 * np.pi))


def test_adapted_generator_passes_and_w1_fails_skew(ellipsoid, rng):
    from nonholo.gauge import GaugeGenerator, skew_test

    samples = [ellipsoid["adapted"].sample_point(rng) for _ in range(20)]
    assert skew_test(ellipsoid["adapted"], ellipsoid["adapted"].generators[0], samples).passed
    assert not skew_test(ellipsoid["equivariant"], GaugeGenerator.frame_member(0, 3, "W1"), samples).passed


def test_lambda_matches_closed_form(ellipsoid, offset_sphere, rng):
    for bundle in (ellipsoid, offset_sphere):
        system, prof, params = bundle["adapted"], bundle["profile"], bundle["params"]
        lam = lambda_from_generators(system, system.generators, tol=1e-6)
        closed = rev.lambda_closed_form(prof, params, system)
        for _ in range(10):
            q = system.sample_point(rng)
            d = prof.theta_functions(q[1])
            coord = lam.coords(system, q)[0, 1, 2]
            assert coord == pytest.approx(-params.m * d["z"] * d["Rp"] * np.sin(q[1]), abs=1e-8)
            assert np.allclose(lam(q), closed(q), atol=1e-8)


def test_structure_coefficient_of_adapted_frame(ellipsoid, rng):
    system, prof, params = ellipsoid["adapted"], ellipsoid["profile"], ellipsoid["params"]
    sol = system.params["gauge_solution"]
    for _ in range(5):
        q = system.sample_point(rng)
        _, k = sol(q[1])
        d = prof.theta_functions(q[1])
        assert frame_at(system, q).c_down[0, 1, 2] == pytest.approx(-params.m * k * d["z"] * d["a1"], abs=1e-8)


def test_equivariant_momenta_are_reduced_quantities(ellipsoid, rng):
    system, prof, params = ellipsoid["equivariant"], ellipsoid["profile"], ellipsoid["params"]
    for _ in range(10):
        st = random_state(system, rng)
        M, gamma, sigma = rev.reduce_revolution(prof, params, system, st)
        assert st.pi[0] == pytest.approx(M @ gamma, abs=1e-12)
        assert st.pi[1] == pytest.approx(M[2], abs=1e-12)
        assert rev.sigma_variety_residual(sigma) < 1e-12
        for sol in ellipsoid["solutions"]:
            assert rev.casimir_MG(sol, M, gamma) == pytest.approx(float(sol(st.q[1]) @ st.pi[:2]), abs=1e-9)
            assert rev.casimir_sigma(sol, sigma) == pytest.approx(rev.casimir_MG(sol, M, gamma), abs=1e-12)


def test_both_frames_reduce_to_the_same_point(ellipsoid, rng):
    eq, ad = ellipsoid["equivariant"], ellipsoid["adapted"]
    prof, params = ellipsoid["profile"], ellipsoid["params"]
    for _ in range(5):
        st = random_state(ad, rng)
        q = st.q
        # same velocity expressed in the equivariant frame
        u = ad.frame(q) @ np.linalg.solve(ad.frame(q).T @ ad.metric(q) @ ad.frame(q), st.pi)
        pi_eq = eq.frame(q).T @ eq.metric(q) @ u
        M1, g1, _ = rev.reduce_revolution(prof, params, ad, st)
        M2, g2, _ = rev.reduce_revolution(prof, params, eq, PhaseState(q, pi_eq))
        assert np.allclose(M1, M2, atol=1e-10) and np.allclose(g1, g2)


def test_reduced_hamiltonians_agree(ellipsoid, rng):
    system, prof, params = ellipsoid["equivariant"], ellipsoid["profile"], ellipsoid["params"]
    for _ in range(10):
        st = random_state(system, rng)
        M, gamma, sigma = rev.reduce_revolution(prof, params, system, st)
        h = hamiltonian(system, st)
        assert rev.hamiltonian_MG(prof, params, M, gamma) == pytest.approx(h, abs=1e-12)
        assert rev.hamiltonian_sigma(prof, params, sigma) == pytest.approx(h, abs=1e-10)


def test_casimir_fields_are_vertical(ellipsoid, rng):
    prof, params = ellipsoid["profile"], ellipsoid["params"]
    for _ in range(10):
        gamma = rng.normal(size=3)
        gamma /= np.linalg.norm(gamma)
        M = rng.normal(size=3)
        p = rev.reduced_bracket_revolution(prof, params, M, gamma)
        assert np.allclose(p, -p.T)
        for sol in ellipsoid["solutions"]:
            dc = fd_gradient(lambda x: rev.casimir_MG(sol, x[:3], x[3:]), np.concatenate([M, gamma]), 1e-6)
            k = sol.of_gamma3(gamma[2])[1]
            # a rotation about the symmetry axis, which the sigma variables quotient out
            expected = k * np.array([M[1], -M[0], 0.0, gamma[1], -gamma[0], 0.0])
            assert np.allclose(p @ dc, expected, atol=1e-7)


def test_sigma_lift_round_trip(rng):
    for _ in range(10):
        gamma = rng.normal(size=3)
        gamma /= np.linalg.norm(gamma)
        M = rng.normal(size=3)
        sigma = rev.sigma_from_MG(M, gamma)
        M2, g2 = rev.lift_sigma(sigma)
        assert np.allclose(rev.sigma_from_MG(M2, g2), sigma)
        fd = np.stack([
            (rev.sigma_from_MG(*np.split(np.concatenate([M, gamma]) + e, 2))
             - rev.sigma_from_MG(*np.split(np.concatenate([M, gamma]) - e, 2))) / 2e-6
            for e in 1e-6 * np.eye(6)
        ], axis=1)
        assert np.allclose(rev.sigma_jacobian(M, gamma), fd, atol=1e-8)


def test_bracket_is_continuous_at_the_poles():
    prof = rev.ShapeProfile("ellipsoid", a=1.0, c=0.6)
    params = PARAMS[0]
    M = np.array([0.3, -0.2, 0.5])
    for pole in (1.0, -1.0):
        at_pole = rev.reduced_bracket_revolution(prof, params, M, np.array([0.0, 0.0, pole]))
        assert np.all(np.isfinite(at_pole))
        for g1 in (1e-3, 1e-5, 1e-7):
            gamma = np.array([g1, 0.0, pole * np.sqrt(1 - g1 * g1)])
            diff = np.max(np.abs(rev.reduced_bracket_revolution(prof, params, M, gamma) - at_pole))
            assert diff < 10 * g1


def test_adapted_basis_degenerates_for_heavy_ellipsoid():
    prof = rev.ShapeProfile("ellipsoid", a=1.0, c=0.6)
    params = rev.RevolutionParams(I1=1.3, I3=2.1, m=2.7)
    with pytest.raises(AdaptedBasisDegenerate) as info:
        rev.build_revolution(prof, params)
    assert len(info.value.thetas) > 0
    # the equivariant frame still works and carries both gauge momenta
    assert len(rev.build_equivariant(prof, params).generators) == 2


def test_reduction_outside_chart(ellipsoid):
    st = PhaseState(np.zeros(5), np.ones(3))
    with pytest.raises(OutOfChart):
        rev.reduce_revolution(ellipsoid["profile"], ellipsoid["params"], ellipsoid["equivariant"], st)
