"""Compiled nonholonomic right-hand side from pointwise geometry.

Systems call :func:`nh_rhs_from_geometry` from their own module-level jitted
functions so that numba can cache the result on disk.
"""

import numpy as np

from ._jit import jit


@jit
def nh_rhs_from_geometry(x, rho, drho, g, dg, dv, n, r):
    """Same field as ``dynamics.nh_vector_field`` with loops in place of einsum."""
    pi = x[n:]
    grho = np.zeros((n, r))
    for i in range(n):
        for a in range(r):
            s = 0.0
            for j in range(n):
                s += g[i, j] * rho[j, a]
            grho[i, a] = s
    gram = np.zeros((r, r))
    for a in range(r):
        for b in range(r):
            s = 0.0
            for i in range(n):
                s += rho[i, a] * grho[i, b]
            gram[a, b] = s
    v = np.linalg.solve(gram, pi.copy())
    u = np.zeros(n)
    gu = np.zeros(n)
    for i in range(n):
        for a in range(r):
            u[i] += rho[i, a] * v[a]
            gu[i] += grho[i, a] * v[a]
    dhq = np.zeros(n)
    for k in range(n):
        s = 0.0
        for i in range(n):
            w = 0.0
            for a in range(r):
                w += drho[i, a, k] * v[a]
            s += 2.0 * w * gu[i]
            for j in range(n):
                s += u[i] * dg[i, j, k] * u[j]
        dhq[k] = -0.5 * s + dv[k]
    out = np.zeros(n + r)
    for i in range(n):
        out[i] = u[i]
    for a in range(r):
        s = 0.0
        for i in range(n):
            s -= rho[i, a] * dhq[i]
            br = 0.0
            for k in range(n):
                w = 0.0
                for b in range(r):
                    w += drho[i, b, k] * v[b]
                br += w * rho[k, a] - drho[i, a, k] * u[k]
            s -= br * gu[i]
        out[n + a] = s
    return out


@jit
def all_finite(x):
    for i in range(x.size):
        if not np.isfinite(x[i]):
            return False
    return True
