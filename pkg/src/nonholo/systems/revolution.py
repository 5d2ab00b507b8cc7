"""Convex solid of revolution rolling without slipping on a plane.

Chart ``q = (phi, theta, psi, x, y)``.  The body is described by the contact
vector ``(f1 g1, f1 g2, f2)`` with ``f1, f2`` functions of ``g3 = cos(theta)``.
Two frames are provided: the equivariant frame ``(W1, W2, Y3)`` (fast, used
for integration) and the adapted frame ``(Z1, W1, Y3)`` built from a solution
``(g, k)`` of the linear gauge ODE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .._jit import jit
from .._kernel import all_finite, nh_rhs_from_geometry
from ..brackets import PhaseState, ThreeFormSpec
from ..errors import (
    AdaptedBasisDegenerate,
    DegenerateDenominator,
    FloquetViolation,
    OutOfChart,
    PoleRegularizationFailure,
    ShapeSingularity,
)
from ..gauge import GaugeGenerator
from ..geometry import KernelSpec, MechanicalSystem, VectorField, coordinate_field
from .chaplygin import EPS, body_angular_velocity, gamma_from_angles

THETA_MIN = 1e-3
POLE_SIN = 1e-4
N_ODE = 4000
FLOQUET_TOL = 1e-6
FLOQUET_FAIL = 1e-5

PROFILE_KINDS = {"sphere": 0, "offset-sphere": 1, "ellipsoid": 2}

# parameter vector layout for compiled functions
_I1, _I3, _M, _G0, _KIND, _R, _OFF, _A, _C, _TMIN = range(10)


@dataclass(frozen=True)
class ShapeProfile:
    """Closed-form body shapes.

    * ``sphere``: radius ``R``, centre of mass at the centre.
    * ``offset-sphere``: centre of mass shifted by ``offset`` along the axis.
    * ``ellipsoid``: semi-axes ``a`` (equatorial) and ``c`` (polar).
    """

    kind: str = "sphere"
    R: float = 1.0
    offset: float = 0.0
    a: float = 1.0
    c: float = 0.6

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile {self.kind!r}; expected one of {sorted(PROFILE_KINDS)}")
        if self.kind == "ellipsoid" and not (self.a > 0 and self.c > 0):
            raise ValueError("ellipsoid semi-axes must be positive")
        if self.kind != "ellipsoid" and not self.R > 0:
            raise ValueError("sphere radius must be positive")
        if self.kind == "offset-sphere" and abs(self.offset) >= self.R:
            raise ValueError("centre of mass must lie inside the sphere")

    def vector(self):
        return np.array([PROFILE_KINDS[self.kind], self.R, self.offset, self.a, self.c], dtype=float)

    def eval(self, g3):
        """``(f1, df1/dg3, f2, df2/dg3)`` at ``g3``."""
        return profile_eval(float(g3), self.vector())

    def f1(self, g3):
        return self.eval(g3)[0]

    def f2(self, g3):
        return self.eval(g3)[2]

    def Rp(self, g3):
        return self.eval(g3)[0]

    def Rm(self, g3):
        return self.eval(g3)[3]

    def contact_vector(self, gamma):
        f1, _, f2, _ = self.eval(gamma[2])
        return np.array([f1 * gamma[0], f1 * gamma[1], f2])

    def theta_functions(self, theta):
        """Dictionary of the even/odd shape functions of theta used by the frame."""
        return dict(zip(("f1", "f1_t", "f2", "f2_t", "a1", "a1_t", "z", "a2", "a2_t", "Rp", "Rm"),
                        shape_theta(float(theta), self.vector())))

    def validate(self, n=721, tol=1e-8):
        """Check positivity of the radii, their agreement at the poles, the
        derivative identity, and the parity of the shape functions."""
        problems = []
        for g3 in np.linspace(-1.0, 1.0, n):
            f1, _, _, rm = self.eval(g3)
            if not (f1 > 0 and rm > 0):
                problems.append(f"non-positive radius of curvature at g3={g3:.4f}")
                break
        for g3 in (-1.0, 1.0):
            f1, _, _, rm = self.eval(g3)
            if abs(f1 - rm) > tol:
                problems.append(f"Rp and Rm differ by {abs(f1 - rm):.3g} at g3={g3}")
        for th in np.linspace(0.05, 2 * np.pi - 0.05, 97):
            d = self.theta_functions(th)
            if abs(np.sin(th) * d["a1_t"] + np.cos(th) * d["f2_t"]) > tol:
                problems.append(f"sin a1' + cos f2' != 0 at theta={th:.4f}")
                break
            m = self.theta_functions(-th)
            for name in ("f1", "f2", "z", "Rp", "Rm"):
                if abs(d[name] - m[name]) > tol:
                    problems.append(f"{name} is not even at theta={th:.4f}")
            for name in ("a1", "a2"):
                if abs(d[name] + m[name]) > tol:
                    problems.append(f"{name} is not odd at theta={th:.4f}")
        return problems


@jit
def profile_eval(g3, pp):
    kind = int(pp[0])
    R, off, a, c = pp[1], pp[2], pp[3], pp[4]
    if kind == 2:
        lam = np.sqrt(a * a * (1.0 - g3 * g3) + c * c * g3 * g3)
        f1 = a * a / lam
        df1 = a * a * (a * a - c * c) * g3 / lam ** 3
        f2 = c * c * g3 / lam
        df2 = a * a * c * c / lam ** 3
        return f1, df1, f2, df2
    f2 = R * g3 + (off if kind == 1 else 0.0)
    return R, 0.0, f2, R


@jit
def shape_theta(theta, pp):
    s, c = np.sin(theta), np.cos(theta)
    f1, df1, f2, df2 = profile_eval(c, pp)
    f1_t = -s * df1
    f2_t = -s * df2
    a1 = s * f1
    a1_t = c * f1 + s * f1_t
    z = s * s * f1 + c * f2
    a2 = s * (c * f1 - f2)
    a2_t = c * (c * f1 - f2) + s * (-s * f1 + c * f1_t - f2_t)
    return f1, f1_t, f2, f2_t, a1, a1_t, z, a2, a2_t, f1, df2


@dataclass(frozen=True)
class RevolutionParams:
    I1: float = 2.0
    I3: float = 1.0
    m: float = 1.0
    potential: str = "none"
    g0: float = 9.81
    theta_min: float = THETA_MIN

    def __post_init__(self):
        for name in ("I1", "I3", "m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"revolution parameter {name} must be positive")
        if self.potential not in ("none", "gravity"):
            raise ValueError(f"unknown revolution potential {self.potential!r}")

    def vector(self, profile: ShapeProfile):
        g0 = self.g0 if self.potential == "gravity" else 0.0
        return np.concatenate([[self.I1, self.I3, self.m, g0], profile.vector(), [self.theta_min]])


# -- compiled geometry in the equivariant frame (W1, W2, Y3) ---------------------


@jit
def rev_metric(q, p):
    sh = shape_theta(q[1], p[4:9])
    a2 = sh[7]
    st, ct = np.sin(q[1]), np.cos(q[1])
    g = np.zeros((5, 5))
    g[0, 0] = p[_I1] * st * st + p[_I3] * ct * ct
    g[1, 1] = p[_I1] + p[_M] * a2 * a2
    g[2, 2] = p[_I3]
    g[0, 2] = p[_I3] * ct
    g[2, 0] = p[_I3] * ct
    g[3, 3] = p[_M]
    g[4, 4] = p[_M]
    return g


@jit
def rev_metric_jac(q, p):
    sh = shape_theta(q[1], p[4:9])
    a2, a2_t = sh[7], sh[8]
    st, ct = np.sin(q[1]), np.cos(q[1])
    dg = np.zeros((5, 5, 5))
    dg[0, 0, 1] = 2.0 * (p[_I1] - p[_I3]) * st * ct
    dg[1, 1, 1] = 2.0 * p[_M] * a2 * a2_t
    dg[0, 2, 1] = -p[_I3] * st
    dg[2, 0, 1] = -p[_I3] * st
    return dg


@jit
def rev_frame(q, p):
    sh = shape_theta(q[1], p[4:9])
    a1, z, a2 = sh[4], sh[6], sh[7]
    sf, cf = np.sin(q[0]), np.cos(q[0])
    out = np.zeros((5, 3))
    out[0, 0] = 1.0
    out[3, 0] = -a2 * cf
    out[4, 0] = -a2 * sf
    out[2, 1] = 1.0
    out[3, 1] = -a1 * cf
    out[4, 1] = -a1 * sf
    out[1, 2] = 1.0
    out[3, 2] = z * sf
    out[4, 2] = -z * cf
    return out


@jit
def rev_frame_jac(q, p):
    sh = shape_theta(q[1], p[4:9])
    a1, a1_t, z, a2, a2_t = sh[4], sh[5], sh[6], sh[7], sh[8]
    sf, cf = np.sin(q[0]), np.cos(q[0])
    out = np.zeros((5, 3, 5))
    out[3, 0, 0] = a2 * sf
    out[4, 0, 0] = -a2 * cf
    out[3, 0, 1] = -a2_t * cf
    out[4, 0, 1] = -a2_t * sf
    out[3, 1, 0] = a1 * sf
    out[4, 1, 0] = -a1 * cf
    out[3, 1, 1] = -a1_t * cf
    out[4, 1, 1] = -a1_t * sf
    out[3, 2, 0] = z * cf
    out[4, 2, 0] = z * sf
    out[3, 2, 1] = a2 * sf  # dz/dtheta = a2
    out[4, 2, 1] = -a2 * cf
    return out


@jit
def rev_potential(q, p):
    return p[_M] * p[_G0] * shape_theta(q[1], p[4:9])[6]


@jit
def rev_grad_v(q, p):
    out = np.zeros(5)
    out[1] = p[_M] * p[_G0] * shape_theta(q[1], p[4:9])[7]
    return out


@jit
def rev_inside(q, p):
    return p[_TMIN] < q[1] < np.pi - p[_TMIN]


# -- gauge ODE ---------------------------------------------------------------------

@jit
def kernel_rhs(x, p):
    q = x[:5]
    return nh_rhs_from_geometry(x, rev_frame(q, p), rev_frame_jac(q, p), rev_metric(q, p), rev_metric_jac(q, p),
                                rev_grad_v(q, p), 5, 3)


@jit
def kernel_rk4(x0, p, h, nsteps, stride, out):
    x = x0.copy()
    out[0] = x
    rows = 1
    for step in range(1, nsteps + 1):
        k1 = kernel_rhs(x, p)
        y = x + 0.5 * h * k1
        if not (all_finite(y) and rev_inside(y[:5], p)):
            return step - 1, rows, x
        k2 = kernel_rhs(y, p)
        y = x + 0.5 * h * k2
        if not (all_finite(y) and rev_inside(y[:5], p)):
            return step - 1, rows, x
        k3 = kernel_rhs(y, p)
        y = x + h * k3
        if not (all_finite(y) and rev_inside(y[:5], p)):
            return step - 1, rows, x
        k4 = kernel_rhs(y, p)
        xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (all_finite(xn) and rev_inside(xn[:5], p)):
            return step - 1, rows, x
        x = xn
        if step % stride == 0 or step == nsteps:
            out[rows] = x
            rows += 1
    return nsteps, rows, x


def k_function(profile: ShapeProfile, params: RevolutionParams, theta):
    d = profile.theta_functions(theta)
    return params.I1 * params.I3 + params.m * params.I1 * d["a1"] ** 2 + params.m * params.I3 * d["f2"] ** 2


def _l_direct(profile, params, theta):
    d = profile.theta_functions(theta)
    I1, I3, m = params.I1, params.I3, params.m
    s, c = np.sin(theta), np.cos(theta)
    f1, f2, a1, a2, z, rp, rm = d["f1"], d["f2"], d["a1"], d["a2"], d["z"], d["Rp"], d["Rm"]
    q_mp = (rm - rp) / s
    lt = np.empty((2, 2))
    lt[0, 0] = m * I3 * f2 * q_mp - m * a2 * f1 * (I3 + m * z * f1)
    lt[0, 1] = m * I3 * f2 * c * q_mp - m * f1 * a1 * (I3 + m * z * f1)
    lt[1, 0] = (m * f1 * (I1 * s * s + I3 * c * c) * (-q_mp)
                + m * a2 / (s * s) * (m * a1 * a2 * z + (rm - rp) * I3 * c + (I3 - I1) * a1 * s * c))
    lt[1, 1] = m * c * (I1 * a1 * s + I3 * f2 * c) * (-q_mp) + m * f1 ** 2 * (m * z * a2 + (I3 - I1) * s * c)
    K = I1 * I3 + m * I1 * a1 ** 2 + m * I3 * f2 ** 2
    return lt / K


def l_matrix(profile: ShapeProfile, params: RevolutionParams, theta):
    """Coefficient matrix of the linear gauge ODE ``d(g, k)/dtheta = L (g, k)``.

    Within ``|sin(theta)| < 1e-4`` of a pole the entries are continued linearly
    from the boundary of that window (L is odd about every pole).
    """
    theta = float(theta)
    s = np.sin(theta)
    if abs(s) >= POLE_SIN:
        return _l_direct(profile, params, theta)
    pole = np.pi * np.round(theta / np.pi)
    gap = abs(profile.Rm(np.cos(pole)) - profile.Rp(np.cos(pole)))
    if gap > 1e-8:
        raise ShapeSingularity(f"Rm - Rp = {gap:.3g} at the pole theta={pole:.6g}; (Rm - Rp)/sin has no finite limit")
    delta = np.arcsin(POLE_SIN)
    if theta == pole:
        return np.zeros((2, 2))
    side = np.sign(theta - pole)
    edge = _l_direct(profile, params, pole + side * delta)
    return edge * (theta - pole) / (side * delta)


@dataclass(frozen=True)
class GaugeSolution:
    """A solution of the gauge ODE on ``[0, 2 pi]`` with cubic Hermite interpolation."""

    theta_grid: np.ndarray
    values: np.ndarray
    evenness_residual: float
    periodicity_residual: float
    profile: ShapeProfile
    params: RevolutionParams
    spline: object = field(repr=False, default=None)

    @property
    def g(self):
        return self.values[:, 0]

    @property
    def k(self):
        return self.values[:, 1]

    def __call__(self, theta):
        """``(g, k)`` at ``theta`` (any real, wrapped into one period)."""
        return self.spline(np.mod(theta, 2 * np.pi))

    def derivative(self, theta):
        """``d(g, k)/dtheta`` from the ODE itself, consistent with :meth:`__call__`."""
        return l_matrix(self.profile, self.params, float(np.mod(theta, 2 * np.pi))) @ self(theta)

    def of_gamma3(self, g3):
        return self(np.arccos(np.clip(g3, -1.0, 1.0)))

    def combine(self, other: "GaugeSolution", c_self, c_other) -> "GaugeSolution":
        """The solution ``c_self * self + c_other * other`` (the ODE is linear)."""
        values = c_self * self.values + c_other * other.values
        dvals = np.array([l_matrix(self.profile, self.params, t) @ v for t, v in zip(self.theta_grid, values)])
        spline = CubicHermiteSpline(self.theta_grid, values, dvals, axis=0)
        return GaugeSolution(
            self.theta_grid, values,
            abs(c_self) * self.evenness_residual + abs(c_other) * other.evenness_residual,
            abs(c_self) * self.periodicity_residual + abs(c_other) * other.periodicity_residual,
            self.profile, self.params, spline,
        )


def _rk4_linear(profile, params, x0, n):
    h = 2 * np.pi / n
    grid = np.linspace(0.0, 2 * np.pi, n + 1)
    xs = np.empty((n + 1, 2))
    dxs = np.empty((n + 1, 2))
    x = np.asarray(x0, dtype=float)
    lm = lambda t: l_matrix(profile, params, t)  # noqa: E731
    cache = {}
    for i in range(n):
        t = grid[i]
        l0 = cache.pop(i, None)
        l0 = lm(t) if l0 is None else l0
        lh = lm(t + h / 2)
        l1 = lm(grid[i + 1])
        cache[i + 1] = l1
        xs[i] = x
        dxs[i] = l0 @ x
        k1 = dxs[i]
        k2 = lh @ (x + h / 2 * k1)
        k3 = lh @ (x + h / 2 * k2)
        k4 = l1 @ (x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    xs[n] = x
    dxs[n] = cache[n] @ x
    return grid, xs, dxs


def solve_gauge_ode(profile: ShapeProfile, params: RevolutionParams, n=N_ODE, tol=FLOQUET_FAIL):
    """Solutions from ``(1, 0)`` and ``(0, 1)`` at ``theta = 0``.

    Evenness is measured as ``max |x(theta) - x(2 pi - theta)|`` on the grid and
    periodicity as ``|x(2 pi) - x(0)|``.
    """
    sols = []
    for x0 in ((1.0, 0.0), (0.0, 1.0)):
        grid, xs, dxs = _rk4_linear(profile, params, x0, n)
        even = float(np.max(np.abs(xs - xs[::-1])))
        period = float(np.max(np.abs(xs[-1] - xs[0])))
        if not (even <= tol and period <= tol):
            raise FloquetViolation(
                f"gauge ODE solution from {x0}: evenness residual {even:.3g}, periodicity residual {period:.3g}"
            )
        spline = CubicHermiteSpline(grid, xs, dxs, axis=0)
        sols.append(GaugeSolution(grid, xs, even, period, profile, params, spline))
    return tuple(sols)


def wronskian(solutions):
    a, b = solutions
    return a.g * b.k - b.g * a.k


# -- systems -------------------------------------------------------------------------


def _orbit_generators():
    def rotation(q):
        return np.array([1.0, 0.0, 0.0, -q[4], q[3]])

    def rotation_jac(q):
        j = np.zeros((5, 5))
        j[3, 4] = -1.0
        j[4, 3] = 1.0
        return j

    return (
        VectorField(rotation, rotation_jac, "rotate"),
        coordinate_field(5, 2, "spin"),
        coordinate_field(5, 3, "d_x"),
        coordinate_field(5, 4, "d_y"),
    )


def _sampler(margin=0.2):
    def sample(rng):
        return np.array([
            rng.uniform(0.0, 2 * np.pi),
            rng.uniform(margin, np.pi - margin),
            rng.uniform(0.0, 2 * np.pi),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        ])

    return sample


def _solution_generator(sol: GaugeSolution, name):
    def coeffs(q):
        g, k = sol(q[1])
        return np.array([g, k, 0.0])

    def jac(q):
        out = np.zeros((3, 5))
        out[:2, 1] = sol.derivative(q[1])
        return out

    return GaugeGenerator(coeffs, True, name, jac)


def build_equivariant(profile: ShapeProfile, params: RevolutionParams, solutions=None) -> MechanicalSystem:
    """System in the frame ``(W1, W2, Y3)``; the gauge generators are
    ``g_j W1 + k_j W2`` for each ODE solution (solved here if not given)."""
    problems = profile.validate()
    if problems:
        raise ShapeSingularity("; ".join(problems))
    if solutions is None:
        solutions = solve_gauge_ode(profile, params)
    pv = params.vector(profile)
    gravity = params.potential == "gravity"
    return MechanicalSystem(
        name=f"revolution-{profile.kind}",
        n=5,
        r=3,
        metric=lambda q: rev_metric(np.asarray(q, dtype=float), pv),
        frame=lambda q: rev_frame(np.asarray(q, dtype=float), pv),
        frame_jacobian=lambda q: rev_frame_jac(np.asarray(q, dtype=float), pv),
        metric_jacobian=lambda q: rev_metric_jac(np.asarray(q, dtype=float), pv),
        potential=(lambda q: rev_potential(np.asarray(q, dtype=float), pv)) if gravity else None,
        potential_gradient=(lambda q: rev_grad_v(np.asarray(q, dtype=float), pv)) if gravity else None,
        complement=lambda q: np.eye(5)[:, 3:],
        domain=lambda q: bool(rev_inside(np.asarray(q, dtype=float), pv)),
        orbit_generators=_orbit_generators(),
        generators=tuple(_solution_generator(s, f"Z{j + 1}") for j, s in enumerate(solutions)),
        sampler=_sampler(),
        coord_names=("phi", "theta", "psi", "x", "y"),
        frame_names=("W1", "W2", "Y3"),
        params={"I1": params.I1, "I3": params.I3, "m": params.m, "profile": profile.kind},
        kernel=KernelSpec(kernel_rhs, kernel_rk4, pv, "revolution"),
    )


def _k_margin(sol: GaugeSolution, params: RevolutionParams):
    th = sol.theta_grid
    inside = (th > params.theta_min) & (th < np.pi - params.theta_min)
    k = sol.k[inside]
    scale = max(1.0, float(np.max(np.abs(sol.values))))
    if np.any(np.signbit(k[1:]) != np.signbit(k[:-1])):
        return 0.0, th[inside]
    return float(np.min(np.abs(k))) / scale, th[inside]


def choose_adapted_solution(solutions, params: RevolutionParams, rel_tol=1e-8):
    """A solution whose ``k`` stays away from zero on the chart.

    Tries the second solution, the first, then the best combination of the two
    over a grid of directions.  Raises :class:`AdaptedBasisDegenerate` listing
    the chart angles where ``k`` vanishes if none qualifies.
    """
    for idx in (1, 0):
        margin, _ = _k_margin(solutions[idx], params)
        if margin > rel_tol:
            return solutions[idx], idx
    best, best_margin = None, 0.0
    for ang in np.linspace(0.0, np.pi, 181)[1:-1]:
        cand = solutions[0].combine(solutions[1], np.cos(ang), np.sin(ang))
        margin, _ = _k_margin(cand, params)
        if margin > best_margin:
            best, best_margin = cand, margin
    if best is not None and best_margin > rel_tol:
        return best, "combined"
    sol = solutions[1]
    _, th = _k_margin(sol, params)
    k = np.interp(th, sol.theta_grid, sol.k)
    crossing = th[1:][np.signbit(k[1:]) != np.signbit(k[:-1])].tolist()
    raise AdaptedBasisDegenerate(
        f"k(theta) vanishes inside the chart for every solution (e.g. theta={crossing[:5]})", crossing
    )


def build_revolution(profile: ShapeProfile, params: RevolutionParams, solutions=None, solution_index=None):
    """System in the adapted frame ``(Z1 = g W1 + k W2, Y2 = W1, Y3)``."""
    if solutions is None:
        solutions = solve_gauge_ode(profile, params)
    eq = build_equivariant(profile, params, solutions)
    if solution_index is None:
        sol, solution_index = choose_adapted_solution(solutions, params)
    else:
        sol = solutions[solution_index]
        margin, th = _k_margin(sol, params)
        if margin <= 1e-8:
            k = np.interp(th, sol.theta_grid, sol.k)
            small = np.abs(k) <= 1e-8 * max(1.0, float(np.max(np.abs(sol.values))))
            cross = np.zeros_like(small)
            cross[1:] = np.signbit(k[1:]) != np.signbit(k[:-1])
            zero = th[small | cross].tolist()
            raise AdaptedBasisDegenerate(f"k(theta) vanishes for solution {solution_index}", zero)
    def transfer(q):
        g, k = sol(q[1])
        return np.array([[g, 1.0, 0.0], [k, 0.0, 0.0], [0.0, 0.0, 1.0]])

    def transfer_jac(q):
        out = np.zeros((3, 3, 5))
        out[0, 0, 1], out[1, 0, 1] = sol.derivative(q[1])
        return out

    def frame(q):
        return eq.frame(q) @ transfer(q)

    def frame_jac(q):
        return np.einsum("iak,ab->ibk", eq.rho_jac(q), transfer(q)) + np.einsum("ia,abk->ibk", eq.frame(q), transfer_jac(q))

    z1 = GaugeGenerator.frame_member(0, 3, "Z1")
    return MechanicalSystem(
        name=f"revolution-{profile.kind}-adapted",
        n=5,
        r=3,
        metric=eq.metric,
        frame=frame,
        frame_jacobian=frame_jac,
        metric_jacobian=eq.metric_jacobian,
        potential=eq.potential,
        potential_gradient=eq.potential_gradient,
        complement=eq.complement,
        domain=eq.domain,
        orbit_generators=eq.orbit_generators,
        generators=(z1,),
        sampler=eq.sampler,
        coord_names=eq.coord_names,
        frame_names=("Z1", "Y2", "Y3"),
        params=dict(eq.params, solution=solution_index, gauge_solution=sol),
    )


def lambda_closed_form(profile: ShapeProfile, params: RevolutionParams, system: MechanicalSystem) -> ThreeFormSpec:
    """``-m z Rp sin(theta) dphi^dtheta^dpsi`` evaluated on the frame of ``system``."""

    def b_down(q):
        d = profile.theta_functions(q[1])
        coef = -params.m * d["z"] * d["Rp"] * np.sin(q[1])
        det = np.linalg.det(system.frame(q)[:3, :])
        out = np.zeros((3, 3, 3))
        out[0, 1, 2] = out[1, 2, 0] = out[2, 0, 1] = coef * det
        out[0, 2, 1] = out[2, 1, 0] = out[1, 0, 2] = -coef * det
        return out

    return ThreeFormSpec(b_down, "closed-form")


# -- reduction -----------------------------------------------------------------------


def inertia(params):
    return np.diag([params.I1, params.I1, params.I3])


def reduce_revolution(profile: ShapeProfile, params: RevolutionParams, system: MechanicalSystem, state: PhaseState):
    """``(M, gamma, sigma)`` for a state of either revolution frame."""
    q = np.asarray(state.q, dtype=float)
    if not system.in_domain(q):
        raise OutOfChart(f"theta={q[1]} outside the Euler chart")
    rho = system.frame(q)
    gram = rho.T @ system.metric(q) @ rho
    qdot = rho @ np.linalg.solve(gram, np.asarray(state.pi, dtype=float))
    omega = body_angular_velocity(q, qdot)
    gamma = gamma_from_angles(q[1], q[2])
    cv = profile.contact_vector(gamma)
    M = inertia(params) @ omega + params.m * np.cross(cv, np.cross(omega, cv))
    return M, gamma, sigma_from_MG(M, gamma)


def sigma_from_MG(M, gamma):
    return np.array([
        gamma[2],
        gamma[0] * M[1] - gamma[1] * M[0],
        gamma[0] * M[0] + gamma[1] * M[1],
        M[2],
        M[0] ** 2 + M[1] ** 2,
    ])


def sigma_jacobian(M, gamma):
    """``d sigma / d(M, gamma)`` as a 5x6 matrix."""
    j = np.zeros((5, 6))
    j[0, 5] = 1.0
    j[1, :] = [-gamma[1], gamma[0], 0.0, M[1], -M[0], 0.0]
    j[2, :] = [gamma[0], gamma[1], 0.0, M[0], M[1], 0.0]
    j[3, 2] = 1.0
    j[4, :] = [2 * M[0], 2 * M[1], 0.0, 0.0, 0.0, 0.0]
    return j


def sigma_variety_residual(sigma):
    s = np.asarray(sigma, dtype=float)
    return float(abs(s[1] ** 2 + s[2] ** 2 - s[4] * (1 - s[0] ** 2)))


def lift_sigma(sigma):
    """A representative ``(M, gamma)`` of a sigma point with ``gamma_2 = 0``."""
    s1, s2, s3, s4 = sigma[:4]
    g1 = np.sqrt(1.0 - s1 * s1)
    return np.array([s3 / g1, s2 / g1, s4]), np.array([g1, 0.0, s1])


def omega_from_MG(profile, params, M, gamma):
    cv = profile.contact_vector(gamma)
    A = np.diag(1.0 / (np.array([params.I1, params.I1, params.I3]) + params.m * cv @ cv))
    den = 1.0 - params.m * cv @ A @ cv
    if den < 1e-12:
        raise DegenerateDenominator(f"1 - m (A rho, rho) = {den:.3g}")
    AM = A @ M
    return AM + params.m * (AM @ cv) / den * (A @ cv)


def potential_of_g3(profile, params, g3):
    if params.potential != "gravity":
        return 0.0
    f1, _, f2, _ = profile.eval(g3)
    return params.m * params.g0 * ((1 - g3 * g3) * f1 + g3 * f2)


def hamiltonian_MG(profile, params, M, gamma):
    return 0.5 * M @ omega_from_MG(profile, params, M, gamma) + potential_of_g3(profile, params, gamma[2])


def _split_ratio(profile, g3, pole_tol=1e-8):
    """``(Rp - Rm) / (1 - g3^2)``, regularized near the poles by ``df1/dg3 / g3``."""
    f1, df1, _, rm = profile.eval(g3)
    one = 1.0 - g3 * g3
    if one >= pole_tol:
        return (f1 - rm) / one
    if abs(f1 - rm) > 1e-6:
        raise PoleRegularizationFailure(f"Rp - Rm = {f1 - rm:.3g} does not vanish at g3={g3}")
    return df1 / g3


def reduced_bracket_revolution(profile: ShapeProfile, params: RevolutionParams, M, gamma):
    """6x6 bracket in ``(M1, M2, M3, g1, g2, g3)``."""
    M = np.asarray(M, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    I1, I3, m = params.I1, params.I3, params.m
    g3 = gamma[2]
    f1, _, f2, rm = profile.eval(g3)
    cv = profile.contact_vector(gamma)
    z = (1 - g3 * g3) * f1 + g3 * f2
    K = I1 * I3 + m * I1 * (1 - g3 * g3) * f1 ** 2 + m * I3 * f2 ** 2
    omega = omega_from_MG(profile, params, M, gamma)
    ratio = _split_ratio(profile, g3)
    # (Rp - Rm) T_k with the 1/(1 - g3^2) factor absorbed into ratio
    t_scaled = np.array([
        I3 * (M[0] * gamma[0] + M[1] * gamma[1]) * gamma[0] * ratio,
        I3 * (M[0] * gamma[0] + M[1] * gamma[1]) * gamma[1] * ratio,
        I1 * M[2] * (f1 - rm),
    ])
    # the (M, rho) rho term carries a factor m; without it the units do not match T_k
    vec = -M + m * rm * (omega @ gamma) * cv + m * z / K * ((f1 - rm) * m * (M @ cv) * cv + t_scaled)
    out = np.zeros((6, 6))
    out[:3, :3] = np.einsum("ijk,k->ij", EPS, vec)
    out[:3, 3:] = -np.einsum("ijk,k->ij", EPS, gamma)
    out[3:, :3] = -out[:3, 3:].T
    return out


def casimir_MG(sol: GaugeSolution, M, gamma):
    g, k = sol.of_gamma3(gamma[2])
    return float(g * (M @ gamma) + k * M[2])


def casimir_sigma(sol: GaugeSolution, sigma):
    g, k = sol.of_gamma3(sigma[0])
    return float(g * sigma[2] + (g * sigma[0] + k) * sigma[3])


def hamiltonian_sigma(profile: ShapeProfile, params: RevolutionParams, sigma):
    """Reduced Hamiltonian on the sigma variety (potential term included)."""
    s1, _, s3, s4, s5 = np.asarray(sigma, dtype=float)
    f1, _, f2, _ = profile.eval(s1)
    m = params.m
    K1 = params.I1 + m * (1 - s1 * s1) * f1 ** 2 + m * f2 ** 2
    K3 = params.I3 + m * (1 - s1 * s1) * f1 ** 2 + m * f2 ** 2
    K = params.I1 * params.I3 + m * params.I1 * (1 - s1 * s1) * f1 ** 2 + m * params.I3 * f2 ** 2
    kinetic = 0.5 * (s5 / K1 + s4 ** 2 / K3) + 0.5 * m * (s3 * f1 * K3 + s4 * f2 * K1) ** 2 / (K * K1 * K3)
    return float(kinetic + potential_of_g3(profile, params, s1))


def sigma_bracket(profile: ShapeProfile, params: RevolutionParams, sigma4):
    """Bracket of ``(sigma1, .., sigma4)`` induced from the (M, gamma) bracket."""
    M, gamma = lift_sigma(sigma4)
    j = sigma_jacobian(M, gamma)[:4]
    return j @ reduced_bracket_revolution(profile, params, M, gamma) @ j.T
