"""Finite-difference Poisson brackets, used as an independent oracle.

Convention: ``{f, g} = d_xi f . d_x g - d_x f . d_xi g``, so that
``{p, x_j} = d_xi_j p`` is the velocity of the Hamilton flow of ``p``.
"""

import numpy as np

from .errors import DomainError
from .symbols import PhasePoint

DEFAULT_STEP = 2e-5


def _richardson_partial(f, x, xi, j, wrt, step):
    """``d f / d(wrt)_j`` by central differences, Richardson-extrapolated."""
    base = x if wrt == "x" else xi
    h = step * np.maximum(1.0, np.abs(base[..., j]))

    def central(hh):
        e = np.zeros(base.shape)
        e[..., j] = hh
        if wrt == "x":
            fp, fm = f(x + e, xi), f(x - e, xi)
        else:
            fp, fm = f(x, xi + e), f(x, xi - e)
        return (np.asarray(fp, dtype=float) - np.asarray(fm, dtype=float)) / (2 * hh)

    d1 = central(h)
    d2 = central(h / 2)
    out = (4.0 * d2 - d1) / 3.0
    if not np.all(np.isfinite(out)):
        raise DomainError("non-finite values in finite-difference stencil")
    return out


def fd_gradients(f, x, xi, step=DEFAULT_STEP):
    """``(d_x f, d_xi f)`` each of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = x.shape[-1]
    gx = np.stack([_richardson_partial(f, x, xi, j, "x", step) for j in range(n)], axis=-1)
    gxi = np.stack([_richardson_partial(f, x, xi, j, "xi", step) for j in range(n)], axis=-1)
    return gx, gxi


def bracket_fd(f, g, x, xi, step=DEFAULT_STEP):
    """Vectorised finite-difference bracket ``{f, g}`` at points ``(x, xi)``."""
    fx, fxi = fd_gradients(f, x, xi, step)
    gx, gxi = fd_gradients(g, x, xi, step)
    return np.sum(fxi * gx - fx * gxi, axis=-1)


def poisson_bracket_fd(f, g, pt: PhasePoint, step=DEFAULT_STEP) -> float:
    """``{f, g}`` at a single phase point."""
    return float(bracket_fd(f, g, pt.x, pt.xi, step))


def symbol_function(sym, part="full"):
    """``(x, xi) -> p(x, xi)`` in the vectorised form the oracle expects."""
    return lambda x, xi: sym.eval(x, xi, part)
