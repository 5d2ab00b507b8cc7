"""Axisymmetric Chaplygin sphere rolling on a plane.

Chart ``q = (phi, theta, psi, x, y)`` with Euler angles in the x-convention.
The frame is ``(Z1, Y2, Y3)`` with ``Z1 = d_phi`` the gauge generator and
``W = span{d_x, d_y}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .._jit import jit
from .._kernel import all_finite, nh_rhs_from_geometry
from ..brackets import fd_gradient
from ..errors import DegenerateDenominator, OutOfChart
from ..gauge import GaugeGenerator
from ..geometry import KernelSpec, MechanicalSystem, VectorField, coordinate_field

THETA_MIN = 1e-3

# parameter vector layout shared by the compiled geometry functions
_I1, _I3, _M, _R, _G0, _D1, _D2, _D3, _TMIN = range(9)


@dataclass(frozen=True)
class ChaplyginParams:
    """Physical data.  ``potential`` is ``"none"``, ``"uniform-gravity-like"``
    (``V = m g0 (d, gamma)`` for a body-fixed vector ``d``) or a callable
    ``V(theta, psi)``."""

    I1: float = 2.0
    I3: float = 1.0
    m: float = 1.0
    R: float = 1.0
    potential: object = "none"
    g0: float = 9.81
    offset: tuple = (0.0, 0.0, 0.1)
    theta_min: float = THETA_MIN

    def __post_init__(self):
        for name in ("I1", "I3", "m", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Chaplygin parameter {name} must be positive")
        if not (callable(self.potential) or self.potential in ("none", "uniform-gravity-like")):
            raise ValueError(f"unknown Chaplygin potential {self.potential!r}")

    def vector(self):
        gravity = self.potential == "uniform-gravity-like"
        g0 = self.g0 if gravity else 0.0
        d = tuple(self.offset) if gravity else (0.0, 0.0, 0.0)
        return np.array([self.I1, self.I3, self.m, self.R, g0, *d, self.theta_min], dtype=float)


@dataclass(frozen=True)
class ReducedStateMG:
    M: np.ndarray
    gamma: np.ndarray

    @property
    def x(self):
        return np.concatenate([self.M, self.gamma])


# -- compiled geometry ---------------------------------------------------------


@jit
def frame_fn(q, p):
    R = p[_R]
    sf, cf = np.sin(q[0]), np.cos(q[0])
    st = np.sin(q[1])
    out = np.zeros((5, 3))
    out[0, 0] = 1.0
    out[1, 1] = 1.0
    out[3, 1] = R * sf
    out[4, 1] = -R * cf
    out[2, 2] = 1.0
    out[3, 2] = -R * cf * st
    out[4, 2] = -R * sf * st
    return out


@jit
def frame_jac_fn(q, p):
    R = p[_R]
    sf, cf = np.sin(q[0]), np.cos(q[0])
    st, ct = np.sin(q[1]), np.cos(q[1])
    out = np.zeros((5, 3, 5))
    out[3, 1, 0] = R * cf
    out[4, 1, 0] = R * sf
    out[3, 2, 0] = R * sf * st
    out[4, 2, 0] = -R * cf * st
    out[3, 2, 1] = -R * cf * ct
    out[4, 2, 1] = -R * sf * ct
    return out


@jit
def metric_fn(q, p):
    I1, I3, m = p[_I1], p[_I3], p[_M]
    st, ct = np.sin(q[1]), np.cos(q[1])
    g = np.zeros((5, 5))
    g[0, 0] = I1 * st * st + I3 * ct * ct
    g[1, 1] = I1
    g[2, 2] = I3
    g[0, 2] = I3 * ct
    g[2, 0] = I3 * ct
    g[3, 3] = m
    g[4, 4] = m
    return g


@jit
def metric_jac_fn(q, p):
    I1, I3 = p[_I1], p[_I3]
    st, ct = np.sin(q[1]), np.cos(q[1])
    dg = np.zeros((5, 5, 5))
    dg[0, 0, 1] = 2.0 * (I1 - I3) * st * ct
    dg[0, 2, 1] = -I3 * st
    dg[2, 0, 1] = -I3 * st
    return dg


@jit
def potential_fn(q, p):
    st, ct = np.sin(q[1]), np.cos(q[1])
    sp, cp = np.sin(q[2]), np.cos(q[2])
    return p[_M] * p[_G0] * (p[_D1] * st * sp + p[_D2] * st * cp + p[_D3] * ct)


@jit
def grad_v_fn(q, p):
    st, ct = np.sin(q[1]), np.cos(q[1])
    sp, cp = np.sin(q[2]), np.cos(q[2])
    c = p[_M] * p[_G0]
    out = np.zeros(5)
    out[1] = c * (p[_D1] * ct * sp + p[_D2] * ct * cp - p[_D3] * st)
    out[2] = c * (p[_D1] * st * cp - p[_D2] * st * sp)
    return out


@jit
def inside_fn(q, p):
    return p[_TMIN] < q[1] < np.pi - p[_TMIN]


# -- system --------------------------------------------------------------------

@jit
def kernel_rhs(x, p):
    q = x[:5]
    return nh_rhs_from_geometry(x, frame_fn(q, p), frame_jac_fn(q, p), metric_fn(q, p), metric_jac_fn(q, p),
                                grad_v_fn(q, p), 5, 3)


@jit
def kernel_rk4(x0, p, h, nsteps, stride, out):
    x = x0.copy()
    out[0] = x
    rows = 1
    for step in range(1, nsteps + 1):
        k1 = kernel_rhs(x, p)
        y = x + 0.5 * h * k1
        if not (all_finite(y) and inside_fn(y[:5], p)):
            return step - 1, rows, x
        k2 = kernel_rhs(y, p)
        y = x + 0.5 * h * k2
        if not (all_finite(y) and inside_fn(y[:5], p)):
            return step - 1, rows, x
        k3 = kernel_rhs(y, p)
        y = x + h * k3
        if not (all_finite(y) and inside_fn(y[:5], p)):
            return step - 1, rows, x
        k4 = kernel_rhs(y, p)
        xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (all_finite(xn) and inside_fn(xn[:5], p)):
            return step - 1, rows, x
        x = xn
        if step % stride == 0 or step == nsteps:
            out[rows] = x
            rows += 1
    return nsteps, rows, x


def _sampler(theta_margin=0.2):
    def sample(rng):
        return np.array([
            rng.uniform(0.0, 2 * np.pi),
            rng.uniform(theta_margin, np.pi - theta_margin),
            rng.uniform(0.0, 2 * np.pi),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        ])

    return sample


def _user_potential(params: ChaplyginParams):
    fn = params.potential

    def V(q):
        return float(fn(q[1], q[2]))

    return V


def build_chaplygin(params: ChaplyginParams = ChaplyginParams()) -> MechanicalSystem:
    pv = params.vector()
    if callable(params.potential):
        potential, grad, kernel = _user_potential(params), None, None
    else:
        potential = (lambda q: potential_fn(np.asarray(q, dtype=float), pv)) if params.potential != "none" else None
        grad = (lambda q: grad_v_fn(np.asarray(q, dtype=float), pv)) if params.potential != "none" else None
        kernel = KernelSpec(kernel_rhs, kernel_rk4, pv, "chaplygin")

    def rotation(q):
        return np.array([1.0, 0.0, 0.0, -q[4], q[3]])

    def rotation_jac(q):
        j = np.zeros((5, 5))
        j[3, 4] = -1.0
        j[4, 3] = 1.0
        return j

    orbit = (
        VectorField(rotation, rotation_jac, "rotate"),
        coordinate_field(5, 3, "d_x"),
        coordinate_field(5, 4, "d_y"),
    )
    return MechanicalSystem(
        name="chaplygin",
        n=5,
        r=3,
        metric=lambda q: metric_fn(np.asarray(q, dtype=float), pv),
        frame=lambda q: frame_fn(np.asarray(q, dtype=float), pv),
        frame_jacobian=lambda q: frame_jac_fn(np.asarray(q, dtype=float), pv),
        metric_jacobian=lambda q: metric_jac_fn(np.asarray(q, dtype=float), pv),
        potential=potential,
        potential_gradient=grad,
        complement=lambda q: np.eye(5)[:, 3:],
        domain=lambda q: bool(inside_fn(np.asarray(q, dtype=float), pv)),
        orbit_generators=orbit,
        generators=(GaugeGenerator.frame_member(0, 3, "Z1"),),
        sampler=_sampler(),
        coord_names=("phi", "theta", "psi", "x", "y"),
        frame_names=("Z1", "Y2", "Y3"),
        params={"I1": params.I1, "I3": params.I3, "m": params.m, "R": params.R},
        kernel=kernel,
    )


# -- closed forms used as oracles -------------------------------------------------


def gram_closed_form(params: ChaplyginParams, theta):
    I1, I3, mR2 = params.I1, params.I3, params.m * params.R ** 2
    s, c = np.sin(theta), np.cos(theta)
    return np.array([
        [I1 * s * s + I3 * c * c, 0.0, I3 * c],
        [0.0, I1 + mR2, 0.0],
        [I3 * c, 0.0, I3 + mR2 * s * s],
    ])


def k_function(params: ChaplyginParams, theta):
    mR2 = params.m * params.R ** 2
    s, c = np.sin(theta), np.cos(theta)
    return params.I1 * mR2 * s * s + params.I3 * mR2 * c * c + params.I1 * params.I3


def gram_inv_closed_form(params: ChaplyginParams, theta):
    I1, I3, mR2 = params.I1, params.I3, params.m * params.R ** 2
    s, c = np.sin(theta), np.cos(theta)
    K = k_function(params, theta)
    mat = np.array([
        [I3 + mR2 * s * s, 0.0, -I3 * c],
        [0.0, K * s * s / (I1 + mR2), 0.0],
        [-I3 * c, 0.0, I1 * s * s + I3 * c * c],
    ])
    return mat / (K * s * s)


def c_down_closed_form(params: ChaplyginParams, theta):
    """Nonzero ``<[X_a, X_b], X_c>``, extended by antisymmetry in (a, b)."""
    mR2 = params.m * params.R ** 2
    s, c = np.sin(theta), np.cos(theta)
    out = np.zeros((3, 3, 3))
    for (a, b, k), v in (((0, 1, 2), -mR2 * s), ((0, 2, 1), mR2 * s), ((1, 2, 2), mR2 * s * c)):
        out[a, b, k] = v
        out[b, a, k] = -v
    return out


def gamma_from_angles(theta, psi):
    st = np.sin(theta)
    return np.array([st * np.sin(psi), st * np.cos(psi), np.cos(theta)])


def body_angular_velocity(q, qdot):
    """Body angular velocity from Euler angles and their rates."""
    th, psi = q[1], q[2]
    dphi, dth, dpsi = qdot[0], qdot[1], qdot[2]
    return np.array([
        dth * np.cos(psi) + dphi * np.sin(psi) * np.sin(th),
        -dth * np.sin(psi) + dphi * np.cos(psi) * np.sin(th),
        dphi * np.cos(th) + dpsi,
    ])


def inertia(params: ChaplyginParams):
    return np.diag([params.I1, params.I1, params.I3])


def reduce_to_MG(params: ChaplyginParams, state) -> ReducedStateMG:
    """``(M, gamma)`` from a state on D*; ``M`` is the momentum about the contact point."""
    q = np.asarray(state.q, dtype=float)
    if not (params.theta_min < q[1] < np.pi - params.theta_min):
        raise OutOfChart(f"theta={q[1]} outside the Euler chart")
    p1, p2, p3 = np.asarray(state.pi, dtype=float)
    th, psi = q[1], q[2]
    st, ct = np.sin(th), np.cos(th)
    sp, cp = np.sin(psi), np.cos(psi)
    M = np.array([
        (sp * p1 + cp * st * p2 - sp * ct * p3) / st,
        (cp * p1 - sp * st * p2 - cp * ct * p3) / st,
        p3,
    ])
    return ReducedStateMG(M, gamma_from_angles(th, psi))


def angular_momentum_physical(params: ChaplyginParams, q, qdot):
    """``M = I Omega + m R^2 gamma x (Omega x gamma)`` from velocities."""
    omega = body_angular_velocity(q, qdot)
    gamma = gamma_from_angles(q[1], q[2])
    mR2 = params.m * params.R ** 2
    return inertia(params) @ omega + mR2 * np.cross(gamma, np.cross(omega, gamma))


def _mg(s, gamma=None):
    if gamma is None:
        return np.asarray(s.M, dtype=float), np.asarray(s.gamma, dtype=float)
    return np.asarray(s, dtype=float), np.asarray(gamma, dtype=float)


def omega_from_MG(params: ChaplyginParams, M, gamma):
    mR2 = params.m * params.R ** 2
    A = np.diag(1.0 / (np.array([params.I1, params.I1, params.I3]) + mR2))
    den = 1.0 - mR2 * gamma @ A @ gamma
    if den < 1e-12:
        raise DegenerateDenominator(f"1 - mR^2 (A gamma, gamma) = {den:.3g}")
    AM, Ag = A @ M, A @ gamma
    return AM + mR2 * (AM @ gamma) / den * Ag


def potential_of_gamma(params: ChaplyginParams, gamma):
    if params.potential == "none":
        return 0.0
    if callable(params.potential):
        theta = np.arccos(np.clip(gamma[2], -1.0, 1.0))
        psi = np.arctan2(gamma[0], gamma[1])
        return float(params.potential(theta, psi))
    return params.m * params.g0 * float(np.dot(params.offset, gamma))


def hamiltonian_MG(params: ChaplyginParams, s, gamma=None):
    M, g = _mg(s, gamma)
    return 0.5 * M @ omega_from_MG(params, M, g) + potential_of_gamma(params, g)


def levi_civita():
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    return eps


EPS = levi_civita()


def reduced_bracket_MG(params: ChaplyginParams, s, gamma=None):
    """6x6 bracket matrix in coordinates ``(M1, M2, M3, g1, g2, g3)``."""
    M, g = _mg(s, gamma)
    mR2 = params.m * params.R ** 2
    spin = omega_from_MG(params, M, g) @ g
    out = np.zeros((6, 6))
    out[:3, :3] = -np.einsum("ijk,k->ij", EPS, M - mR2 * spin * g)
    out[:3, 3:] = -np.einsum("ijk,k->ij", EPS, g)
    out[3:, :3] = -out[:3, 3:].T
    return out


def reduced_vector_field_MG(params: ChaplyginParams, s, gamma=None, rel=1e-6):
    """``P(x) dH(x)`` for the reduced Hamiltonian (gradient by central differences)."""
    M, g = _mg(s, gamma)
    x = np.concatenate([M, g])
    dh = fd_gradient(lambda y: hamiltonian_MG(params, y[:3], y[3:]), x, rel)
    return reduced_bracket_MG(params, M, g) @ dh


def casimir_MG(s, gamma=None):
    M, g = _mg(s, gamma)
    return float(M @ g)
