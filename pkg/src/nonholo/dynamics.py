"""Equations of motion on D*, RK4 / RKF45 integration and conservation monitors."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from ._jit import HAVE_NUMBA
from .brackets import PhaseState
from .errors import ChartExit, StepUnderflow
from .gauge import momentum_value
from .geometry import MechanicalSystem

METHODS = ("rk4-fixed", "rkf45-adaptive")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4-fixed"
    step: float = 1e-3
    t_end: float = 1.0
    rtol: float = 1e-9
    atol: float = 1e-12
    sample_stride: int = 10
    h_min: float = 1e-14

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}; expected one of {METHODS}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2]")
        if int(self.sample_stride) < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class Trajectory:
    """Sampled solution; ``x[k] = (q, pi)`` flattened at ``times[k]``."""

    times: np.ndarray
    x: np.ndarray
    n: int
    monitors: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def states(self):
        return [PhaseState.from_flat(row, self.n) for row in self.x]

    @property
    def q(self):
        return self.x[:, : self.n]

    @property
    def pi(self):
        return self.x[:, self.n:]

    def final(self):
        return PhaseState.from_flat(self.x[-1], self.n)

    def drift(self, name, relative=False):
        """Largest deviation of a monitor from its initial value."""
        m = self.monitors[name]
        d = float(np.max(np.abs(m - m[0])))
        return d / abs(m[0]) if relative and m[0] != 0 else d


# -- vector field --------------------------------------------------------------


def hamiltonian(system: MechanicalSystem, state: PhaseState) -> float:
    """``H_c = 1/2 G^{ab} pi_a pi_b + V``."""
    q = system.check(state.q)
    rho = system.frame(q)
    gram = rho.T @ system.metric(q) @ rho
    pi = np.asarray(state.pi, dtype=float)
    return float(0.5 * pi @ np.linalg.solve(gram, pi) + system.V(q))


def _pieces(system, q, pi):
    rho = np.asarray(system.frame(q), dtype=float)
    drho = system.rho_jac(q)
    g = np.asarray(system.metric(q), dtype=float)
    dg = system.metric_jac(q)
    v = np.linalg.solve(rho.T @ g @ rho, pi)
    u = rho @ v
    gu = g @ u
    # d/dq^k of 1/2 G^{ab} pi_a pi_b = -1/2 v^T (dG/dq^k) v
    quad = 2.0 * np.einsum("iak,a,i->k", drho, v, gu) + np.einsum("i,ijk,j->k", u, dg, u)
    dhq = -0.5 * quad + system.dV(q)
    return rho, drho, v, u, gu, dhq


def hamiltonian_gradient(system: MechanicalSystem, state: PhaseState):
    """``(dH/dq, dH/dpi)`` stacked into one vector of length n + r."""
    q = system.check(state.q)
    _, _, v, _, _, dhq = _pieces(system, q, np.asarray(state.pi, dtype=float))
    return np.concatenate([dhq, v])


def nh_vector_field(system: MechanicalSystem, state: PhaseState):
    """Right-hand side ``(q_dot, pi_dot)`` of the first-order system on D*."""
    q = system.check(state.q)
    rho, drho, v, u, gu, dhq = _pieces(system, q, np.asarray(state.pi, dtype=float))
    # [X_a, u] for u = v^b X_b, so that C^g_ab pi_g v^b = <[X_a, u], u>
    br = np.einsum("ibk,b,ka->ia", drho, v, rho) - np.einsum("iak,k->ia", drho, u)
    pidot = -rho.T @ dhq - br.T @ gu
    return np.concatenate([u, pidot])


# -- compiled kernel -----------------------------------------------------------

def compiled_kernel(system: MechanicalSystem):
    """``(rhs, run_rk4)`` compiled for the system, or ``None`` when unavailable."""
    spec = system.kernel
    if spec is None or not HAVE_NUMBA:
        return None
    return spec.rhs, spec.run_rk4


def make_rhs(system: MechanicalSystem, vector_field=None):
    """Flat right-hand side ``f(x) -> dx`` (compiled when possible)."""
    if vector_field is not None:
        return vector_field
    kern = compiled_kernel(system)
    if kern is not None:
        rhs, _ = kern
        p = system.kernel.params
        return lambda x: rhs(np.ascontiguousarray(x, dtype=float), p)
    n = system.n
    return lambda x: nh_vector_field(system, PhaseState.from_flat(x, n))


# -- integration ---------------------------------------------------------------


def default_monitors(system: MechanicalSystem):
    mons = {"H": lambda s: hamiltonian(system, s)}
    for z in system.generators:
        mons[f"p_{z.name}"] = lambda s, z=z: momentum_value(system, z, s)
    return mons


def _inside(system, x):
    return bool(np.all(np.isfinite(x))) and system.in_domain(x[: system.n])


def _fixed_grid(cfg):
    nsteps = max(1, int(math.ceil(cfg.t_end / cfg.step - 1e-9))) if cfg.t_end > 0 else 0
    h = cfg.t_end / nsteps if nsteps else cfg.step
    return nsteps, h


def _rk4_python(system, f, x0, cfg):
    nsteps, h = _fixed_grid(cfg)
    stride = int(cfg.sample_stride)
    xs, ts = [x0.copy()], [0.0]
    x = x0.copy()
    for step in range(1, nsteps + 1):
        k1 = f(x)
        xn = None
        y = x + 0.5 * h * k1
        if _inside(system, y):
            k2 = f(y)
            y = x + 0.5 * h * k2
            if _inside(system, y):
                k3 = f(y)
                y = x + h * k3
                if _inside(system, y):
                    k4 = f(y)
                    xn = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        # a stage outside the chart counts as leaving it
        if xn is None or not _inside(system, xn):
            return np.array(ts), np.array(xs), (step - 1) * h, x
        x = xn
        if step % stride == 0 or step == nsteps:
            xs.append(x.copy())
            ts.append(step * h)
    return np.array(ts), np.array(xs), None, x


def _rk4_compiled(system, x0, cfg):
    _, run = compiled_kernel(system)
    nsteps, h = _fixed_grid(cfg)
    stride = int(cfg.sample_stride)
    nsamp = nsteps // stride + 2
    out = np.zeros((nsamp, x0.size))
    done, k, x = run(x0, system.kernel.params, h, nsteps, stride, out)
    steps = [0] + [s for s in range(1, done + 1) if s % stride == 0 or s == nsteps]
    ts = np.array(steps[:k], dtype=float) * h
    exit_time = None if done == nsteps else done * h
    return ts, out[:k].copy(), exit_time, x


# Fehlberg 4(5) tableau
_A = np.array([
    [0, 0, 0, 0, 0],
    [1 / 4, 0, 0, 0, 0],
    [3 / 32, 9 / 32, 0, 0, 0],
    [1932 / 2197, -7200 / 2197, 7296 / 2197, 0, 0],
    [439 / 216, -8, 3680 / 513, -845 / 4104, 0],
    [-8 / 27, 2, -3544 / 2565, 1859 / 4104, -11 / 40],
])
_C = np.array([0, 1 / 4, 3 / 8, 12 / 13, 1, 1 / 2])
_B4 = np.array([25 / 216, 0, 1408 / 2565, 2197 / 4104, -1 / 5, 0])
_B5 = np.array([16 / 135, 0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


def _rkf45(system, f, x0, cfg):
    """Fehlberg pair with PI step control, advancing with the 4th-order solution."""
    t, x = 0.0, x0.copy()
    h = min(cfg.step, cfg.t_end) if cfg.t_end > 0 else cfg.step
    stride = int(cfg.sample_stride)
    xs, ts = [x.copy()], [0.0]
    err_prev = 1.0
    accepted = 0
    while t < cfg.t_end * (1 - 1e-15):
        h = min(h, cfg.t_end - t)
        if h < cfg.h_min:
            raise StepUnderflow(f"adaptive step fell below {cfg.h_min:g} at t={t:.6g}")
        k = np.zeros((6, x.size))
        for i in range(6):
            y = x + h * (_A[i, :i] @ k[:i])
            if not _inside(system, y):
                return np.array(ts), np.array(xs), t, x
            k[i] = f(y)
        x4 = x + h * (_B4 @ k)
        x5 = x + h * (_B5 @ k)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x4))
        err = float(np.sqrt(np.mean(((x5 - x4) / scale) ** 2)))
        if err <= 1.0 and np.all(np.isfinite(x4)):
            if not _inside(system, x4):
                return np.array(ts), np.array(xs), t, x
            t += h
            x = x4
            accepted += 1
            if accepted % stride == 0 or t >= cfg.t_end * (1 - 1e-15):
                xs.append(x.copy())
                ts.append(t)
            fac = 0.9 * max(err, 1e-10) ** (-0.7 / 5) * err_prev ** (0.4 / 5)
            err_prev = max(err, 1e-4)
            h *= min(5.0, max(0.2, fac))
        else:
            fac = 0.9 * err ** (-1 / 5) if np.isfinite(err) else 0.1
            h *= min(1.0, max(0.1, fac))
    return np.array(ts), np.array(xs), None, x


def integrate(
    system: MechanicalSystem,
    state0: PhaseState,
    cfg: IntegratorConfig,
    monitors: Optional[Dict[str, Callable]] = None,
    vector_field: Optional[Callable] = None,
) -> Trajectory:
    """Integrate from ``state0``; monitors are sampled with the trajectory.

    ``monitors=None`` uses the energy and every declared gauge momentum.
    ``vector_field`` replaces the nonholonomic field by any flat field ``f(x)``.
    Raises :class:`ChartExit` with the partial trajectory if the chart is left.
    """
    system.check(state0.q)
    x0 = np.asarray(state0.x, dtype=float)
    if cfg.method == "rk4-fixed" and vector_field is None and compiled_kernel(system) is not None:
        ts, xs, exit_time, last = _rk4_compiled(system, x0, cfg)
    else:
        f = make_rhs(system, vector_field)
        runner = _rk4_python if cfg.method == "rk4-fixed" else _rkf45
        ts, xs, exit_time, last = runner(system, f, x0, cfg)
    mons = default_monitors(system) if monitors is None else dict(monitors)
    traj = Trajectory(ts, xs, system.n)
    states = traj.states
    traj.monitors = {name: np.array([fn(s) for s in states]) for name, fn in mons.items()}
    if exit_time is not None:
        raise ChartExit(
            f"{system.name}: trajectory left the chart at t={exit_time:.6g}",
            exit_time,
            PhaseState.from_flat(last, system.n),
            traj,
        )
    return traj


def integrate_batch(system, states, cfg, monitors=None, jobs=1):
    """Integrate several initial states; results keep the input order."""
    states = list(states)
    if jobs <= 1:
        return [integrate(system, s, cfg, monitors) for s in states]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda s: integrate(system, s, cfg, monitors), states))
