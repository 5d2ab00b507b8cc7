"""Nonholonomic bivector, 3-form gauge transformations and Jacobiators.

Sign convention: a bivector is stored as the antisymmetric matrix

    P = [[0, rho], [-rho^T, lower_right]]

on the coordinates ``(q, pi)`` and ``X_f = P @ df``, so that ``dF/dt = dF . P dH``.
With this convention ``P @ dH_c`` is exactly the nonholonomic vector field.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Optional

import numpy as np

from .errors import InconsistentGenerators
from .gauge import GaugeGenerator, generator_structure
from .geometry import MechanicalSystem, fd_steps, frame_at


@dataclass(frozen=True)
class PhaseState:
    """A point ``(q, pi)`` of D* in frame-dual momentum coordinates."""

    q: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).copy())
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float).copy())

    @property
    def x(self):
        return np.concatenate([self.q, self.pi])

    @classmethod
    def from_flat(cls, x, n):
        x = np.asarray(x, dtype=float)
        return cls(x[:n], x[n:])


# -- 3-forms -------------------------------------------------------------------


def alternate(t):
    """Fully antisymmetrize an (r, r, r) array: ``(1/6) sum sign(s) t_s``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for perm in permutations(range(3)):
        sign = np.linalg.det(np.eye(3)[list(perm)])
        out += sign * np.transpose(t, perm)
    return out / 6.0


def alternation_residual(t):
    return float(np.max(np.abs(t - alternate(t)))) if np.size(t) else 0.0


@dataclass(frozen=True)
class ThreeFormSpec:
    """Coefficients ``B_abc(q) = Lambda(X_a, X_b, X_c)`` of a section of wedge^3 D*."""

    b_down: Callable[[np.ndarray], np.ndarray]
    label: str = "Lambda"

    def __call__(self, q):
        return np.asarray(self.b_down(np.asarray(q, dtype=float)), dtype=float)

    def coords(self, system: MechanicalSystem, q):
        """Coordinate components ``Lambda_ijk`` of the 3-form on Q (annihilating W)."""
        fd = frame_at(system, q)
        return np.einsum("abc,ai,bj,ck->ijk", self(q), fd.rho_bar, fd.rho_bar, fd.rho_bar)

    @classmethod
    def zero(cls, r):
        return cls(lambda q: np.zeros((r, r, r)), "zero")


def random_three_form(r, n, rng, scale=1.0):
    """A smooth, q-dependent alternating 3-form unrelated to any generator."""
    base = alternate(rng.normal(size=(r, r, r))) * scale
    wave = alternate(rng.normal(size=(r, r, r))) * scale
    freq = rng.normal(size=n)

    def b_down(q):
        return base + np.sin(np.asarray(q) @ freq) * wave

    return ThreeFormSpec(b_down, "random")


def lambda_from_generators(system: MechanicalSystem, generators, tol=1e-8) -> ThreeFormSpec:
    """The invariant 3-form with ``B_{b beta gamma} = <[Z_b, X_beta], X_gamma>``.

    The frame must list the generators first.  Components with all indices
    outside the generator block are set to zero.
    """
    generators = list(generators)
    r = system.r
    ell = len(generators)

    def b_down(q):
        q = np.asarray(q, dtype=float)
        out = np.zeros((r, r, r))
        scale = max(1.0, float(np.max(np.abs(system.metric(q)))))
        blocks = []
        for b, z in enumerate(generators):
            c = z.coeffs(q)
            e = np.zeros(r)
            e[b] = 1.0
            if np.max(np.abs(c - e)) > 1e-12:
                raise InconsistentGenerators(
                    f"generator {z.name} is not frame member {b}; order the frame generators-first"
                )
            t = generator_structure(system, z, q)
            skew = float(np.max(np.abs(t + t.T)))
            if skew > tol * scale:
                raise InconsistentGenerators(
                    f"<[{z.name}, X_a], X_b> is not skew (residual {skew:.3g}); not a gauge generator"
                )
            t = 0.5 * (t - t.T)
            blocks.append(t)
            for beta in range(r):
                for gamma in range(r):
                    v = t[beta, gamma]
                    for (i, j, k), s in _signed_perms(b, beta, gamma):
                        out[i, j, k] = s * v
        for b, t in enumerate(blocks):
            if np.max(np.abs(out[b] - t)) > tol * scale:
                raise InconsistentGenerators("generator blocks of Lambda disagree on shared components")
        return out

    return ThreeFormSpec(b_down, "generators" if ell else "zero")


def _signed_perms(i, j, k):
    idx = (i, j, k)
    for perm in permutations(range(3)):
        sign = np.linalg.det(np.eye(3)[list(perm)])
        yield tuple(idx[p] for p in perm), sign


# -- bivectors -----------------------------------------------------------------


@dataclass(frozen=True)
class BivectorBlocks:
    rho: np.ndarray
    lower_right: np.ndarray

    @property
    def n(self):
        return self.rho.shape[0]

    @property
    def r(self):
        return self.rho.shape[1]

    def matrix(self):
        n, r = self.rho.shape
        out = np.zeros((n + r, n + r))
        out[:n, n:] = self.rho
        out[n:, :n] = -self.rho.T
        out[n:, n:] = self.lower_right
        return out

    def skew_residual(self):
        return float(np.max(np.abs(self.lower_right + self.lower_right.T)))


def _momentum_matrix(coeffs, gram_inv, pi):
    """``M_ab = coeffs^g_ab pi_g`` with ``coeffs`` given in lowered form ``coeffs[a, b, d]``."""
    return np.einsum("abd,d->ab", coeffs, gram_inv @ pi)


def pi_nh(system: MechanicalSystem, state: PhaseState) -> BivectorBlocks:
    """The nonholonomic bivector: ``{q, pi_a} = rho_a`` and ``{pi_a, pi_b} = -C^g_ab pi_g``."""
    fd = frame_at(system, state.q)
    lower = -np.einsum("gab,g->ab", fd.c_up, state.pi)
    return BivectorBlocks(fd.rho, lower)


def xi_flat(system: MechanicalSystem, lam: ThreeFormSpec, state: PhaseState):
    """Matrix of the 2-form obtained by contracting Lambda with a second-order field."""
    fd = frame_at(system, state.q)
    n, r = system.n, system.r
    bmat = _momentum_matrix(lam(state.q), fd.gram_inv, state.pi)
    out = np.zeros((n + r, n + r))
    out[:n, :n] = fd.rho_bar.T @ bmat @ fd.rho_bar
    return out


def gauge_endomorphism(system: MechanicalSystem, lam: ThreeFormSpec, state: PhaseState):
    """``Id + Pi_nh^# o Xi^flat`` as an (n+r) square matrix."""
    p = pi_nh(system, state).matrix()
    return np.eye(p.shape[0]) + p @ xi_flat(system, lam, state)


def gauge_transform(system: MechanicalSystem, lam: ThreeFormSpec, state: PhaseState) -> BivectorBlocks:
    """Gauge-transform ``Pi_nh`` by the 3-form ``lam``.

    The endomorphism is unit lower-triangular, ``[[I, 0], [-Bmat rho_bar, I]]``,
    so its inverse flips the sign of the off-diagonal block; the product with
    ``Pi_nh`` is assembled block by block.
    """
    fd = frame_at(system, state.q)
    n, r = system.n, system.r
    bmat = _momentum_matrix(lam(state.q), fd.gram_inv, state.pi)
    cmat = np.einsum("gab,g->ab", fd.c_up, state.pi)
    inv = np.eye(n + r)
    inv[n:, :n] = bmat @ fd.rho_bar
    p_nh = np.zeros((n + r, n + r))
    p_nh[:n, n:] = fd.rho
    p_nh[n:, :n] = -fd.rho.T
    p_nh[n:, n:] = -cmat
    prod = inv @ p_nh
    return BivectorBlocks(prod[:n, n:], prod[n:, n:])


def pi_lambda_coords(system: MechanicalSystem, lam: ThreeFormSpec, state: PhaseState) -> BivectorBlocks:
    """Direct coordinate formula: lower block ``(B^g_ab - C^g_ab) pi_g``."""
    fd = frame_at(system, state.q)
    v = fd.gram_inv @ state.pi
    lower = np.einsum("abd,d->ab", lam(state.q), v) - np.einsum("abd,d->ab", fd.c_down, v)
    return BivectorBlocks(fd.rho, lower)


def pi_lambda_casimir_formula(system: MechanicalSystem, lam: ThreeFormSpec, state: PhaseState, n_gauge):
    """Bracket for a generator-built Lambda, written with C and the free part B_IJK only.

    Only ``{pi_I, pi_J}`` (I, J outside the generator block) can be nonzero.
    """
    fd = frame_at(system, state.q)
    r, ell = system.r, n_gauge
    gi, cd, cu = fd.gram_inv, fd.c_down, fd.c_up
    b = lam(state.q)
    pi = state.pi
    lower = np.zeros((r, r))
    for i in range(ell, r):
        for j in range(ell, r):
            total = 0.0
            for g in range(r):
                coef = -cu[g, i, j]
                coef += sum(gi[g, c] * cd[c, i, j] for c in range(ell))
                coef += sum(gi[g, k] * b[i, j, k] for k in range(ell, r))
                total += coef * pi[g]
            lower[i, j] = total
    return BivectorBlocks(fd.rho, lower)


def pi_lambda_simple(system: MechanicalSystem, state: PhaseState, n_gauge):
    """Bracket when at most two frame fields lie outside the generator block."""
    fd = frame_at(system, state.q)
    r, ell = system.r, n_gauge
    lower = np.zeros((r, r))
    for i in range(ell, r):
        for j in range(ell, r):
            coef = -fd.c_up[:, i, j] + fd.gram_inv[:, :ell] @ fd.c_down[:ell, i, j]
            lower[i, j] = coef @ state.pi
    return BivectorBlocks(fd.rho, lower)


def hamiltonian_vf(blocks: BivectorBlocks, df):
    """``X_f = P @ df`` for the assembled antisymmetric matrix."""
    df = np.asarray(df, dtype=float)
    if df.shape != (blocks.n + blocks.r,):
        raise ValueError(f"gradient has shape {df.shape}, expected ({blocks.n + blocks.r},)")
    return blocks.matrix() @ df


# -- Jacobiators ---------------------------------------------------------------


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function with an optional analytic gradient."""

    f: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x):
        return float(self.f(x))


def coordinate_function(dim, k, name=""):
    e = np.zeros(dim)
    e[k] = 1.0
    return ScalarFunction(lambda x: x[k], lambda x, e=e: e.copy(), name or f"x{k}")


def fd_gradient(f, x, rel):
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, rel)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h[k]
        out[k] = (f(x + e) - f(x - e)) / (2.0 * h[k])
    return out


def _grad(f, x, rel=1e-6):
    if isinstance(f, ScalarFunction) and f.grad is not None:
        return np.asarray(f.grad(x), dtype=float)
    return fd_gradient(f, x, rel)


def matrix_bracket(p_fn, f, g, x):
    """``{f, g}(x) = df . P(x) dg``."""
    return float(_grad(f, x) @ p_fn(x) @ _grad(g, x))


def bracket_jacobiator(p_fn, f, g, h, x, rel=1e-5):
    """Cyclic sum ``{f,{g,h}} + {g,{h,f}} + {h,{f,g}}`` for a matrix-valued bracket.

    Inner brackets are differentiated by central differences with step ``rel``.
    """
    x = np.asarray(x, dtype=float)
    total = 0.0
    for a, b, c in ((f, g, h), (g, h, f), (h, f, g)):
        inner = lambda y, b=b, c=c: matrix_bracket(p_fn, b, c, y)  # noqa: E731
        total += _grad(a, x) @ p_fn(x) @ fd_gradient(inner, x, rel)
    return float(total)


def coordinate_jacobiators(p_fn, x, rel=1e-5):
    """All coordinate Jacobiators ``J[a,b,c] = sum_cyc sum_l P[a,l] d_l P[b,c]``."""
    x = np.asarray(x, dtype=float)
    p = p_fn(x)
    dp = np.stack(
        [(p_fn(x + e) - p_fn(x - e)) / (2 * e[k]) for k, e in enumerate(np.diag(fd_steps(x, rel)))],
        axis=-1,
    )
    t = np.einsum("al,bcl->abc", p, dp)
    return t + np.transpose(t, (1, 2, 0)) + np.transpose(t, (2, 0, 1))


def jacobiator(system: MechanicalSystem, blocks_fn, f, g, h, state: PhaseState, rel=1e-5):
    """Jacobiator of the bracket ``blocks_fn`` on D* at ``state``."""
    n = system.n

    def p_fn(x):
        return blocks_fn(PhaseState.from_flat(x, n)).matrix()

    return bracket_jacobiator(p_fn, f, g, h, state.x, rel)
