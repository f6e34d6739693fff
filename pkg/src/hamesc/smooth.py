"""Canonical smooth step and the cutoffs built from it.

The step is the normalised primitive of the standard mollifier on
``[0, 1/8]``::

    rho(t) = N * int_0^{clip(t, 0, 1/8)} exp(-1 / (s (1/8 - s))) ds

The table is built once with a 64-node Gauss-Legendre rule per cell and
evaluated through a quintic Hermite spline carrying the exact first and
second derivatives at every knot.  ``drho`` and ``d2rho`` are the closed-form
derivatives; they agree with the spline's own derivative to ~4e-10 and are
nonnegative by construction.
"""

from functools import lru_cache

import numpy as np
from scipy.interpolate import BPoly, PPoly

TOP = 0.125
N_CELLS = 2048
GL_NODES = 64

# exp(-1/g) peaks at s = 1/16 where 1/g = 256; shift keeps values O(1)
_SHIFT = 256.0


def _bump(s):
    s = np.asarray(s, dtype=float)
    g = s * (TOP - s)
    out = np.zeros_like(s)
    inside = g > 0
    out[inside] = np.exp(_SHIFT - 1.0 / g[inside])
    return out


def _dbump(s):
    s = np.asarray(s, dtype=float)
    g = s * (TOP - s)
    out = np.zeros_like(s)
    inside = g > 0
    gi = g[inside]
    out[inside] = np.exp(_SHIFT - 1.0 / gi) * (TOP - 2.0 * s[inside]) / gi**2
    return out


class SmoothStep:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1/8, nondecreasing."""

    def __init__(self, n_cells=N_CELLS):
        knots = np.linspace(0.0, TOP, n_cells + 1)
        nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
        a, b = knots[:-1], knots[1:]
        half = 0.5 * (b - a)
        s = 0.5 * (a + b)[:, None] + half[:, None] * nodes[None, :]
        cell = (_bump(s) * weights[None, :]).sum(axis=1) * half
        cum = np.concatenate([[0.0], np.cumsum(cell)])
        total = cum[-1]
        values = cum / total
        values[-1] = 1.0
        d1 = _bump(knots) / total
        d2 = _dbump(knots) / total
        ydata = np.stack([values, d1, d2], axis=1)
        bp = BPoly.from_derivatives(knots, ydata)
        self.normalisation = 1.0 / total
        self.knots = knots
        self._rho = PPoly.from_bernstein_basis(bp)

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        out = np.clip(self._rho(np.clip(t, 0.0, TOP)), 0.0, 1.0)
        out = np.where(t <= 0.0, 0.0, out)
        return np.where(t >= TOP, 1.0, out)

    def drho(self, t):
        return self.normalisation * _bump(np.asarray(t, dtype=float))

    def d2rho(self, t):
        return self.normalisation * _dbump(np.asarray(t, dtype=float))

    def spline_drho(self, t):
        """Derivative of the tabulated spline itself, for consistency checks."""
        t = np.asarray(t, dtype=float)
        d = self._rho.derivative()(np.clip(t, 0.0, TOP))
        return np.where((t <= 0.0) | (t >= TOP), 0.0, d)

    # shifted family used by the escape weight
    def rho_plus(self, t, delta):
        return self.rho(np.asarray(t) - delta)

    def rho_minus(self, t, delta):
        return 1.0 - self.rho(np.asarray(t) + 1.0 - delta)

    def rho_zero(self, t, delta):
        return 1.0 - self.rho_plus(t, delta) - self.rho_minus(t, delta)

    def drho_plus(self, t, delta):
        return self.drho(np.asarray(t) - delta)

    def drho_minus(self, t, delta):
        return -self.drho(np.asarray(t) + 1.0 - delta)

    def drho_zero(self, t, delta):
        return -self.drho_plus(t, delta) - self.drho_minus(t, delta)

    # cutoffs: chi = 1 on t <= 1, 0 on t >= 2; transition maps [1,2] -> [0,1/8]
    def chi(self, t):
        return 1.0 - self.rho((np.asarray(t) - 1.0) / 8.0)

    def chibar(self, t):
        return self.rho((np.asarray(t) - 1.0) / 8.0)

    def dchibar(self, t):
        return self.drho((np.asarray(t) - 1.0) / 8.0) / 8.0

    # transport bump: Psi = 1 on r <= 1/2, 0 on r >= 1, Psi' <= 0
    def Psi(self, r):
        return 1.0 - self.rho((np.asarray(r) - 0.5) / 4.0)

    def dPsi(self, r):
        return -self.drho((np.asarray(r) - 0.5) / 4.0) / 4.0


@lru_cache(maxsize=1)
def smooth_step():
    """Shared immutable instance (the spline table is built once)."""
    return SmoothStep()


class CutoffPair:
    """Spatial and frequency cutoffs ``chi_M(x)`` and ``chibar_nu(xi)``."""

    def __init__(self, M, nu):
        if M <= 0 or nu <= 0:
            raise ValueError("M and nu must be positive")
        self.M = float(M)
        self.nu = float(nu)
        self._s = smooth_step()

    def chi_M(self, x):
        return self._s.chi(np.linalg.norm(x, axis=-1) / self.M)

    def chibar_M(self, x):
        return self._s.chibar(np.linalg.norm(x, axis=-1) / self.M)

    def chi_nu(self, xi):
        return self._s.chi(np.linalg.norm(xi, axis=-1) / self.nu)

    def chibar_nu(self, xi):
        return self._s.chibar(np.linalg.norm(xi, axis=-1) / self.nu)

    def in_omega1(self, x, xi):
        """``M <= |x| <= 2M`` and ``|xi| >= nu``."""
        r = np.linalg.norm(x, axis=-1)
        k = np.linalg.norm(xi, axis=-1)
        return (r >= self.M) & (r <= 2 * self.M) & (k >= self.nu)

    def in_omega2(self, x, xi):
        """``|x| >= M`` and ``nu <= |xi| <= 2 nu``."""
        r = np.linalg.norm(x, axis=-1)
        k = np.linalg.norm(xi, axis=-1)
        return (r >= self.M) & (k >= self.nu) & (k <= 2 * self.nu)
