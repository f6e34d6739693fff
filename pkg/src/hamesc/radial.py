"""Grid experiment for the weighted radial estimate in one dimension.

For trial vectors ``phi`` the two sides are::

    LHS = ||B phi||^2_{k+(m-1)/2, -1/2} + Im z ||B phi||^2_{k, 0}
    RHS = ||B (P - z) phi||^2_{k-(m-1)/2, 1/2} + ||Bt phi||^2_{k-1+m/2, -1}
          + ||S phi||^2_{k+(m-1)/2, 0} + ||T phi||^2 + ||phi||^2_{-Nw, -Nw}

with ``B = Op(b)``, ``Bt`` the weight for shifted parameters, and ``S``,
``T`` localisers on the two transition regions of the cutoffs.  The fitted
constant is ``max LHS / RHS`` over trials.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .smooth import smooth_step
from .symbols import Symbol, make_free
from .weights import EscapeWeightParams, b_values
from .weyl import Grid, GridSymbol, apply_weight, periodization_window, weyl_quantize

WINDOW_INNER = 0.85
WINDOW_OUTER = 0.95


def tilde_params(p, delta_tilde=None, M_tilde=None, nu_tilde=None):
    """Parameters of the wider weight: ``delta < delta_t < 7/8``, ``M_t < M``, ``nu_t < nu``."""
    dt = (p.delta + 0.875) / 2 if delta_tilde is None else delta_tilde
    Mt = p.M / 2 if M_tilde is None else M_tilde
    nt = p.nu / 2 if nu_tilde is None else nu_tilde
    if not (p.delta < dt < 0.875 and 0 < Mt < p.M and 0 < nt < p.nu):
        raise UsageError("tilde parameters must satisfy delta < dt < 7/8, Mt < M, nt < nu")
    return EscapeWeightParams(dt, p.gamma, p.k, Mt, nt)


def _windowed_symbol(fn, L, tag):
    w = periodization_window(L, WINDOW_INNER, WINDOW_OUTER)
    return GridSymbol(lambda x, xi: fn(x, xi) * w(x), "joint", tag)


def weight_symbol(sym, p, L, tag="b"):
    def fn(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return b_values(sym, p, x[..., None], xi[..., None])
    return _windowed_symbol(fn, L, tag)


def localiser_symbols(p, L):
    """``S`` lives where ``chibar(|x|/M)`` switches on, ``T`` where ``chibar(|xi|/nu)`` does."""
    s = smooth_step()

    def bump(t):
        return 4.0 * s.chibar(t) * s.chi(t)

    def S(x, xi):
        t = np.abs(x) / p.M
        return bump(t) * s.chibar(np.abs(xi) / p.nu)

    def T(x, xi):
        return s.chibar(np.abs(x) / p.M) * bump(np.abs(xi) / p.nu)

    return _windowed_symbol(S, L, "S"), _windowed_symbol(T, L, "T")


def symbol_on_grid(sym):
    if sym.dim != 1:
        raise UsageError("the grid experiment needs a one-dimensional symbol")
    const = all(type(f).__name__ == "Constant" for f in sym.coeffs.values())

    def fn(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return sym.eval(x[..., None], xi[..., None], "full")

    return GridSymbol(fn, "xi" if const else "joint", sym.name)


def wave_packets(grid, count, rng, packets=3, centre_frac=0.5, width=(0.5, 2.0), k_max=3.0):
    """Seeded superpositions of Gaussian packets, columns of an ``N x count`` array."""
    x = grid.x
    out = np.zeros((grid.N, count), dtype=complex)
    for c in range(count):
        for _ in range(packets):
            x0 = rng.uniform(-centre_frac * grid.L, centre_frac * grid.L)
            sig = rng.uniform(*width)
            k0 = rng.uniform(-k_max, k_max)
            amp = rng.standard_normal() + 1j * rng.standard_normal()
            out[:, c] += amp * np.exp(-0.5 * ((x - x0) / sig) ** 2 + 1j * k0 * x)
    return out


def boundary_mass(grid, phi, frac=WINDOW_INNER):
    edge = np.abs(grid.x) > frac * grid.L
    tot = np.sum(np.abs(phi) ** 2, axis=0)
    part = np.sum(np.abs(phi[edge]) ** 2, axis=0)
    return np.divide(part, tot, out=np.zeros_like(part), where=tot > 0)


def _sq_norm(grid, s, l, vecs):
    w = apply_weight(grid, s, l, vecs)
    return grid.dx * np.sum(np.abs(w) ** 2, axis=0)


@dataclass
class EstimateReport:
    C_hat: dict
    z_spread: float
    n_trials: int
    n_skipped: int
    max_boundary_mass: float
    boundary_ok: bool
    grid: dict
    params: dict
    ratios: dict = field(repr=False, default=None)

    def to_dict(self):
        return {"C_hat": {repr(k): v for k, v in self.C_hat.items()}, "z_spread": self.z_spread,
                "n_trials": self.n_trials, "n_skipped": self.n_skipped,
                "max_boundary_mass": self.max_boundary_mass, "boundary_ok": self.boundary_ok,
                "grid": self.grid, "params": self.params}


class RadialExperiment:
    """Operators for one grid; evaluate both sides on any batch of vectors."""

    def __init__(self, grid, sym=None, p=None, tilde=None, neg_order=2):
        self.grid = grid
        self.sym = make_free(1) if sym is None else sym
        if not isinstance(self.sym, Symbol) or self.sym.dim != 1:
            raise UsageError("need a one-dimensional Symbol")
        self.p = EscapeWeightParams() if p is None else p
        self.tilde = tilde_params(self.p) if tilde is None else tilde
        self.m = self.sym.m
        self.k = self.p.k
        self.neg_order = neg_order
        self.B = weyl_quantize(grid, weight_symbol(self.sym, self.p, grid.L, "b")).matrix
        self.Bt = weyl_quantize(grid, weight_symbol(self.sym, self.tilde, grid.L, "b~")).matrix
        S, T = localiser_symbols(self.p, grid.L)
        self.S = weyl_quantize(grid, S).matrix
        self.T = weyl_quantize(grid, T).matrix
        self.P = weyl_quantize(grid, symbol_on_grid(self.sym)).matrix

    def sides(self, phi, z):
        g, k, m = self.grid, self.k, self.m
        h = (m - 1) / 2
        Bphi = self.B @ phi
        lhs = _sq_norm(g, k + h, -0.5, Bphi) + z.imag * _sq_norm(g, k, 0, Bphi)
        res = self.B @ (self.P @ phi - z * phi)
        terms = np.stack([
            _sq_norm(g, k - h, 0.5, res),
            _sq_norm(g, k - 1 + m / 2, -1, self.Bt @ phi),
            _sq_norm(g, k + h, 0, self.S @ phi),
            _sq_norm(g, 0, 0, self.T @ phi),
            _sq_norm(g, -self.neg_order, -self.neg_order, phi),
        ])
        return lhs, terms


def radial_estimate_experiment(grid, sym=None, p=None, im_z=(1.0, 0.1, 0.01), re_z=0.0,
                               trials=64, rng=None, phi=None, degenerate=1e-14, tilde=None):
    """Fit ``C_hat = max LHS/RHS`` for each ``Im z``."""
    if any(v <= 0 for v in im_z):
        raise UsageError("Im z must be positive")
    exp = RadialExperiment(grid, sym, p, tilde)
    if phi is None:
        if rng is None:
            raise UsageError("need rng or explicit trial vectors")
        phi = wave_packets(grid, trials, rng)
    phi = np.asarray(phi, dtype=complex).reshape(grid.N, -1)
    bm = boundary_mass(grid, phi)
    C_hat, ratios, skipped = {}, {}, 0
    for y in im_z:
        lhs, terms = exp.sides(phi, complex(re_z, y))
        rhs = terms.sum(axis=0)
        ok = rhs > degenerate
        skipped = max(skipped, int((~ok).sum()))
        r = np.where(ok, lhs / np.where(ok, rhs, 1.0), 0.0)
        C_hat[y] = float(r.max())
        ratios[y] = r
    vals = np.array(list(C_hat.values()))
    spread = float(vals.max() / vals.min()) if vals.min() > 0 else float("inf")
    return EstimateReport(
        C_hat=C_hat, z_spread=spread, n_trials=phi.shape[1], n_skipped=skipped,
        max_boundary_mass=float(bm.max()), boundary_ok=bool(bm.max() < 1e-10),
        grid=grid.to_dict(),
        params={"p": exp.p.to_dict(), "tilde": exp.tilde.to_dict(), "re_z": re_z,
                "im_z": list(im_z), "neg_order": exp.neg_order},
        ratios=ratios,
    )
