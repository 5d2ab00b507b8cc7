"""Linear first integrals, the skew criterion for gauge momenta, and drift diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NotOrbitTangent
from .geometry import (
    MechanicalSystem,
    VectorField,
    central_jacobian,
    lie_derivative_metric,
)

SKEW_TOL = 1e-8


@dataclass(frozen=True)
class GaugeGenerator:
    """A section Z = Z^a X_a of D given by its frame coefficients.

    ``jacobian(q)[a, k] = d Z^a / d q^k`` (central differences when absent).
    """

    coeffs_in_frame: Callable[[np.ndarray], np.ndarray]
    tangent_to_orbit: bool = True
    name: str = "Z"
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def frame_member(cls, a, r, name=None, tangent_to_orbit=True):
        """The generator equal to the a-th frame field."""
        e = np.zeros(r)
        e[a] = 1.0
        return cls(lambda q, e=e: e.copy(), tangent_to_orbit, name or f"X{a + 1}",
                   lambda q, n=None: np.zeros((r, np.shape(q)[-1])))

    def coeffs(self, q):
        return np.asarray(self.coeffs_in_frame(np.asarray(q, dtype=float)), dtype=float)

    def coeffs_jac(self, q):
        if self.jacobian is not None:
            return np.asarray(self.jacobian(np.asarray(q, dtype=float)), dtype=float)
        return central_jacobian(self.coeffs_in_frame, q)

    def vector_field(self, system: MechanicalSystem) -> VectorField:
        def coeffs(q):
            return system.frame(q) @ self.coeffs(q)

        def jac(q):
            c = self.coeffs(q)
            return np.einsum("iak,a->ik", system.rho_jac(q), c) + system.frame(q) @ self.coeffs_jac(q)

        return VectorField(coeffs, jac, self.name)


def momentum_value(system: MechanicalSystem, Z: GaugeGenerator, state) -> float:
    """``p_Z(q, pi) = Z^a(q) pi_a``."""
    q = system.check(state.q)
    return float(Z.coeffs(q) @ np.asarray(state.pi, dtype=float))


def generator_structure(system: MechanicalSystem, Z: GaugeGenerator, q):
    """``out[a, b] = <[Z, X_a], X_b>`` for the system frame."""
    q = system.check(q)
    rho = system.frame(q)
    drho = system.rho_jac(q)
    zf = Z.vector_field(system)
    z = zf(q)
    dz = zf.jac(q)
    # [Z, X_a] = (DX_a) Z - (DZ) X_a
    br = np.einsum("iak,k->ia", drho, z) - dz @ rho
    return br.T @ system.metric(q) @ rho


def orbit_tangency_residual(system: MechanicalSystem, Z: GaugeGenerator, q) -> float:
    """Distance from Z(q) to the span of the declared orbit generators."""
    q = np.asarray(q, dtype=float)
    z = Z.vector_field(system)(q)
    if not system.orbit_generators:
        return float(np.linalg.norm(z))
    basis = np.stack([xi(q) for xi in system.orbit_generators], axis=1)
    coef, *_ = np.linalg.lstsq(basis, z, rcond=None)
    return float(np.linalg.norm(basis @ coef - z))


@dataclass(frozen=True)
class SkewReport:
    generator: str
    max_residual: float
    tolerance: float
    passed: bool
    residuals: tuple

    def __bool__(self):
        return self.passed


def skew_test(system: MechanicalSystem, Z: GaugeGenerator, samples, tol=SKEW_TOL) -> SkewReport:
    """Check ``<[Z, X_a], X_b> = -<[Z, X_b], X_a>`` at every sample.

    The tolerance is scaled by the largest metric entry at each sample.
    """
    if not Z.tangent_to_orbit:
        raise NotOrbitTangent(f"{Z.name} is not declared tangent to the group orbits")
    residuals = []
    ok = True
    for q in samples:
        c = generator_structure(system, Z, q)
        res = float(np.max(np.abs(c + c.T)))
        scale = max(1.0, float(np.max(np.abs(system.metric(np.asarray(q, dtype=float))))))
        residuals.append(res)
        ok = ok and res <= tol * scale
    return SkewReport(Z.name, float(max(residuals, default=0.0)), tol, ok, tuple(residuals))


def velocity(system: MechanicalSystem, q, pi):
    """Coordinate velocity ``rho G^{-1} pi`` reconstructed from momenta."""
    rho = system.frame(q)
    gram = rho.T @ system.metric(q) @ rho
    return rho @ np.linalg.solve(gram, pi)


def momentum_drift(system: MechanicalSystem, Z: GaugeGenerator, state) -> float:
    """Time derivative of ``p_Z`` along the nonholonomic flow at ``state``.

    Equals ``Z^{TQ}[L]`` on D, i.e. ``(1/2)(L_Z g)(u, u) - Z[V]``.
    """
    q = system.check(state.q)
    u = velocity(system, q, np.asarray(state.pi, dtype=float))
    zf = Z.vector_field(system)
    lg = lie_derivative_metric(system, zf, q)
    return float(0.5 * u @ lg @ u - system.dV(q) @ zf(q))
