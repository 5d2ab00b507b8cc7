"""Numerical checks of the structural claims, each returning a :class:`Report`."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .brackets import (
    PhaseState,
    ThreeFormSpec,
    coordinate_jacobiators,
    gauge_endomorphism,
    gauge_transform,
    lambda_from_generators,
    pi_nh,
)
from .dynamics import hamiltonian_gradient, nh_vector_field
from .geometry import MechanicalSystem, frame_at


@dataclass(frozen=True)
class Report:
    check: str
    system: str
    n_samples: int
    seed: int
    max_residual: float
    threshold: float
    passed: bool
    expected_fail: bool = False

    @property
    def ok(self):
        """True when the outcome is the expected one."""
        return self.passed != self.expected_fail

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _report(check, system, n, seed, residuals, threshold, expected_fail=False):
    worst = float(np.max(residuals)) if len(residuals) else 0.0
    passed = worst < threshold
    return Report(check, system, int(n), int(seed), worst, float(threshold), bool(passed), bool(expected_fail))


def random_states(system: MechanicalSystem, n, seed, momentum_scale=1.0):
    rng = np.random.default_rng(seed)
    return [PhaseState(system.sample_point(rng), momentum_scale * rng.normal(size=system.r)) for _ in range(n)]


def momentum_gradient(z, state: PhaseState):
    """Gradient of ``p_Z(q, pi) = Z^a(q) pi_a`` in ``(q, pi)``."""
    return np.concatenate([z.coeffs_jac(state.q).T @ state.pi, z.coeffs(state.q)])


def casimir_residual(system: MechanicalSystem, blocks, z, state: PhaseState):
    """Largest deviation of ``P dp_Z`` from the vertical lift of ``Z``.

    Zero means the pi-components vanish and the q-components equal ``Z(q)``,
    a vector tangent to the group orbits.
    """
    x = blocks.matrix() @ momentum_gradient(z, state)
    n = system.n
    zq = system.frame(state.q) @ z.coeffs(state.q)
    return max(float(np.max(np.abs(x[n:]))), float(np.max(np.abs(x[:n] - zq))))


def verify_theorem_main(system: MechanicalSystem, generators=None, n_samples=1000, seed=0, lam=None,
                        threshold=1e-7, expected_fail=False, check="casimir"):
    """Hamiltonian fields of the gauge momenta under ``Pi^Lambda`` are vertical.

    ``lam=None`` builds Lambda from the generators; pass ``ThreeFormSpec.zero``
    for the negative control.
    """
    generators = list(system.generators if generators is None else generators)
    if lam is None:
        lam = lambda_from_generators(system, generators, tol=1e-6)
    res = []
    for st in random_states(system, n_samples, seed):
        blocks = gauge_transform(system, lam, st)
        res.append(max(casimir_residual(system, blocks, z, st) for z in generators))
    return _report(check, system.name, n_samples, seed, res, threshold, expected_fail)


def verify_dynamics_equivalence(system: MechanicalSystem, lam: ThreeFormSpec, n_samples=1000, seed=0,
                                threshold=1e-12, check="dynamics"):
    """``Pi^Lambda dH = Pi_nh dH = X_nh`` componentwise."""
    res = []
    for st in random_states(system, n_samples, seed):
        dh = hamiltonian_gradient(system, st)
        a = gauge_transform(system, lam, st).matrix() @ dh
        b = pi_nh(system, st).matrix() @ dh
        c = nh_vector_field(system, st)
        res.append(max(float(np.max(np.abs(a - b))), float(np.max(np.abs(a - c)))))
    return _report(check, system.name, n_samples, seed, res, threshold)


def verify_invertibility(system: MechanicalSystem, lam: ThreeFormSpec, n_samples=100, seed=0,
                         threshold=1e-10, check="invertibility"):
    """``Id + Pi_nh o Xi`` has determinant one and the block inverse is exact."""
    res = []
    for st in random_states(system, n_samples, seed):
        e = gauge_endomorphism(system, lam, st)
        fd = frame_at(system, st.q)
        n = system.n
        bmat = np.einsum("abd,d->ab", lam(st.q), fd.gram_inv @ st.pi)
        inv = np.eye(e.shape[0])
        inv[n:, :n] = bmat @ fd.rho_bar
        det_err = abs(np.linalg.det(e) - 1.0)
        inv_err = float(np.max(np.abs(inv @ e - np.eye(e.shape[0]))))
        res.append(max(det_err, inv_err))
    return _report(check, system.name, n_samples, seed, res, threshold)


def verify_rank2_jacobi(bracket_fn, sampler, n_samples=200, seed=0, threshold=1e-7, expected_fail=False,
                        system="reduced", check="rank2-jacobi", rel=1e-5):
    """All coordinate Jacobiators of a matrix bracket at sampled points.

    ``bracket_fn(x)`` returns the bracket matrix of the coordinate functions at
    ``x``; ``sampler(rng)`` draws points (for instance on a Casimir level set).
    """
    rng = np.random.default_rng(seed)
    res = []
    for _ in range(n_samples):
        x = np.asarray(sampler(rng), dtype=float)
        res.append(float(np.max(np.abs(coordinate_jacobiators(bracket_fn, x, rel)))))
    return _report(check, system, n_samples, seed, res, threshold, expected_fail)

