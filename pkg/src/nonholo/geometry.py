"""Charts, vector fields and the data derived from a moving frame.

Conventions used throughout the package:

* ``rho[i, a]`` is the i-th coordinate component of the frame field ``X_a``.
* ``drho[i, a, k] = d rho[i, a] / d q^k`` and ``dg[i, j, k] = d g_ij / d q^k``.
* ``c_down[a, b, c] = <[X_a, X_b], X_c>`` and ``c_up[c, a, b]`` is the same
  tensor with the last index raised by the inverse Gram matrix.

Frame indices of gauge generators come first (indices ``0 .. l-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateFrame, OutOfChart

FD_REL_STEP = 1e-5
COND_MAX = 1e8


def fd_steps(q, rel=FD_REL_STEP):
    """Per-component central-difference steps ``rel * max(1, |q_i|)``."""
    return rel * np.maximum(1.0, np.abs(np.asarray(q, dtype=float)))


def central_jacobian(f, q, rel=FD_REL_STEP, domain=None):
    """Central-difference derivative of ``f`` at ``q``.

    ``f`` maps an (n,) array to an array of any shape ``S``; the result has
    shape ``S + (n,)``.  When ``domain`` is given every stencil point is
    checked and :class:`OutOfChart` is raised if one leaves it.
    """
    q = np.asarray(q, dtype=float)
    h = fd_steps(q, rel)
    cols = []
    for k in range(q.size):
        e = np.zeros_like(q)
        e[k] = h[k]
        qp, qm = q + e, q - e
        if domain is not None and not (domain(qp) and domain(qm)):
            raise OutOfChart(f"finite-difference stencil leaves the chart at component {k}")
        cols.append((np.asarray(f(qp)) - np.asarray(f(qm))) / (2.0 * h[k]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class VectorField:
    """A vector field given by its coordinate coefficients.

    ``jacobian(q)[k, l] = d coeffs[k] / d q^l``; when absent it is computed by
    central differences.
    """

    coeffs: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, q):
        return np.asarray(self.coeffs(np.asarray(q, dtype=float)), dtype=float)

    def jac(self, q, domain=None):
        q = np.asarray(q, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(q), dtype=float)
        return central_jacobian(self.coeffs, q, domain=domain)


def coordinate_field(n, k, name=""):
    """The constant field d/dq^k on an n-dimensional chart."""
    e = np.zeros(n)
    e[k] = 1.0
    return VectorField(lambda q, e=e: e.copy(), lambda q: np.zeros((n, n)), name or f"d{k}")


@dataclass(frozen=True)
class KernelSpec:
    """Compiled ``rhs(x, params)`` and ``run_rk4(x0, params, h, nsteps, stride, out)``.

    Both must agree with the nonholonomic field of the owning
    :class:`MechanicalSystem`; ``run_rk4`` returns ``(steps_done, rows, x)``.
    """

    rhs: Callable
    run_rk4: Callable
    params: np.ndarray
    key: str = ""


@dataclass(frozen=True)
class MechanicalSystem:
    """A nonholonomic mechanical system on a single chart.

    The frame is supplied as one matrix-valued function ``frame(q) -> (n, r)``
    whose columns span D.  All callables take a single chart point.
    """

    name: str
    n: int
    r: int
    metric: Callable[[np.ndarray], np.ndarray]
    frame: Callable[[np.ndarray], np.ndarray]
    frame_jacobian: Optional[Callable] = None
    metric_jacobian: Optional[Callable] = None
    potential: Optional[Callable] = None
    potential_gradient: Optional[Callable] = None
    complement: Optional[Callable] = None
    domain: Optional[Callable[[np.ndarray], bool]] = None
    orbit_generators: tuple = ()
    generators: tuple = ()
    sampler: Optional[Callable] = None
    coord_names: tuple = ()
    frame_names: tuple = ()
    params: dict = field(default_factory=dict)
    kernel: Optional["KernelSpec"] = None

    def in_domain(self, q) -> bool:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n or not np.all(np.isfinite(q)):
            return False
        return True if self.domain is None else bool(self.domain(q))

    def check(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(f"{self.name}: chart point must have shape ({self.n},), got {q.shape}")
        if not self.in_domain(q):
            raise OutOfChart(f"{self.name}: point {q} is outside the chart domain")
        return q

    # -- derived quantities with FD fallbacks ---------------------------------

    def rho_jac(self, q):
        if self.frame_jacobian is not None:
            return np.asarray(self.frame_jacobian(q), dtype=float)
        return central_jacobian(self.frame, q, domain=self.in_domain)

    def metric_jac(self, q):
        if self.metric_jacobian is not None:
            return np.asarray(self.metric_jacobian(q), dtype=float)
        return central_jacobian(self.metric, q, domain=self.in_domain)

    def V(self, q):
        if self.potential is None:
            return np.zeros(np.shape(q)[:-1])
        return self.potential(q)

    def dV(self, q):
        if self.potential is None:
            return np.zeros(np.shape(q))
        if self.potential_gradient is not None:
            return np.asarray(self.potential_gradient(q), dtype=float)
        return central_jacobian(self.potential, q, domain=self.in_domain)

    def complement_basis(self, q):
        """Columns spanning W; defaults to the metric-orthogonal complement of D."""
        if self.complement is not None:
            return np.asarray(self.complement(q), dtype=float).reshape(self.n, self.n - self.r)
        return orthogonal_complement(self.frame(q), self.metric(q))

    def frame_field(self, a) -> VectorField:
        name = self.frame_names[a] if a < len(self.frame_names) else f"X{a + 1}"
        return VectorField(
            lambda q: self.frame(q)[..., :, a],
            lambda q: self.rho_jac(q)[..., :, a, :],
            name,
        )

    @property
    def frame_fields(self):
        return [self.frame_field(a) for a in range(self.r)]

    def sample_point(self, rng):
        if self.sampler is None:
            raise NotImplementedError(f"{self.name} has no chart sampler")
        return np.asarray(self.sampler(rng), dtype=float)


def orthogonal_complement(rho, g):
    """Orthonormal-coordinate basis of {w : rho^T g w = 0}."""
    a = np.asarray(rho).T @ np.asarray(g)
    _, s, vt = np.linalg.svd(a)
    r = a.shape[0]
    return vt[r:].T


@dataclass(frozen=True)
class FrameData:
    q: np.ndarray
    rho: np.ndarray
    rho_bar: np.ndarray
    gram: np.ndarray
    gram_inv: np.ndarray
    c_up: np.ndarray
    c_down: np.ndarray
    complement: np.ndarray


def bracket_tensor(rho, drho):
    """All pairwise Lie brackets of the frame: ``out[..., i, a, b] = [X_a, X_b]^i``."""
    t = np.einsum("...ibk,...ka->...iab", drho, rho)
    return t - np.swapaxes(t, -1, -2)


def structure_down(rho, drho, g):
    """``c_down[..., a, b, c] = <[X_a, X_b], X_c>``."""
    br = bracket_tensor(rho, drho)
    grho = g @ rho
    return np.einsum("...iab,...ic->...abc", br, grho)


def frame_at(system: MechanicalSystem, q, cond_max=COND_MAX) -> FrameData:
    """Evaluate the frame, its dual coframe, Gram matrix and structure coefficients at ``q``."""
    q = system.check(q)
    rho = np.asarray(system.frame(q), dtype=float)
    w = system.complement_basis(q)
    full = np.hstack([rho, w])
    cond = np.linalg.cond(full)
    if not np.isfinite(cond) or cond > cond_max:
        raise DegenerateFrame(f"{system.name}: [rho | W] has condition number {cond:.3g} at q={q}")
    rho_bar = np.linalg.inv(full)[: system.r]
    g = np.asarray(system.metric(q), dtype=float)
    gram = rho.T @ g @ rho
    gram_inv = np.linalg.inv(gram)
    c_down = structure_down(rho, system.rho_jac(q), g)
    c_up = np.einsum("cd,abd->cab", gram_inv, c_down)
    return FrameData(q, rho, rho_bar, gram, gram_inv, c_up, c_down, w)


def lie_bracket(X: VectorField, Y: VectorField, q, domain=None):
    """``[X, Y](q) = (DY) X - (DX) Y``."""
    q = np.asarray(q, dtype=float)
    if domain is not None and not domain(q):
        raise OutOfChart(f"point {q} is outside the chart domain")
    return Y.jac(q, domain) @ X(q) - X.jac(q, domain) @ Y(q)


def lie_derivative_metric(system: MechanicalSystem, Z: VectorField, q):
    """Full (n, n) Lie derivative of the metric along ``Z``."""
    q = system.check(q)
    g = system.metric(q)
    dg = system.metric_jac(q)
    dz = Z.jac(q, system.in_domain)
    return np.einsum("k,ijk->ij", Z(q), dg) + dz.T @ g + g @ dz


def lie_derivative_metric_on_D(system: MechanicalSystem, Z: VectorField, q):
    """``(L_Z g)(X_a, X_b)`` for the system frame, an (r, r) matrix."""
    lg = lie_derivative_metric(system, Z, q)
    rho = system.frame(np.asarray(q, dtype=float))
    return rho.T @ lg @ rho


def jacobian_mismatch(X: VectorField, q):
    """Relative difference between a supplied jacobian and central differences."""
    if X.jacobian is None:
        return 0.0
    q = np.asarray(q, dtype=float)
    exact = X.jacobian(q)
    approx = central_jacobian(X.coeffs, q)
    scale = max(1.0, float(np.max(np.abs(exact))))
    return float(np.max(np.abs(exact - approx)) / scale)


def metric_is_valid(system: MechanicalSystem, q, sym_tol=1e-12) -> bool:
    """Symmetric to ``sym_tol`` and positive definite (Cholesky succeeds)."""
    g = np.asarray(system.metric(np.asarray(q, dtype=float)))
    if np.max(np.abs(g - g.T)) > sym_tol * max(1.0, np.max(np.abs(g))):
        return False
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return False
    return True


def euler_domain(theta_index=1, theta_min=1e-3):
    """Domain predicate for Euler-angle charts: ``theta_min < theta < pi - theta_min``."""

    def inside(q):
        th = np.asarray(q)[..., theta_index]
        return bool(np.all((th > theta_min) & (th < np.pi - theta_min)))

    return inside


def flat_system(n, metric=None):
    """Euclidean R^n with D = TQ and the coordinate frame (useful as a baseline)."""
    g0 = np.eye(n) if metric is None else np.asarray(metric, dtype=float)

    def frame(q):
        return np.broadcast_to(np.eye(n), np.shape(q)[:-1] + (n, n)).copy()

    return MechanicalSystem(
        name=f"flat-R{n}",
        n=n,
        r=n,
        metric=lambda q: np.broadcast_to(g0, np.shape(q)[:-1] + (n, n)).copy(),
        frame=frame,
        frame_jacobian=lambda q: np.zeros(np.shape(q)[:-1] + (n, n, n)),
        metric_jacobian=lambda q: np.zeros(np.shape(q)[:-1] + (n, n, n)),
        complement=lambda q: np.zeros((n, 0)),
        sampler=lambda rng: rng.uniform(-1, 1, n),
        coord_names=tuple(f"q{i + 1}" for i in range(n)),
    )
