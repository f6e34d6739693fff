"""Weyl quantization on a one-dimensional periodic grid.

Nodes are ``x_j = -L + j dx`` with ``dx = 2L/N`` and the dual frequencies
``xi_l = pi l / L`` for ``l = -N/2 .. N/2 - 1``.  The quantized matrix is::

    Op(a)[j, k] = (1/N) sum_l exp(i (x_j - x_k) xi_l) a((x_j + x_k)/2, xi_l)

Midpoints ``(x_j + x_k)/2`` lie on the half-step grid indexed by ``j + k``,
and for fixed midpoint the sum over ``l`` is an inverse DFT in ``j - k``, so
the whole matrix costs one ``(2N - 1) x N`` FFT.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigvalsh

from .errors import DomainError, UsageError
from .smooth import smooth_step

N_MAX = 2048
MAGIC = b"WGOP"
HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class Grid:
    L: float
    N: int

    def __post_init__(self):
        if not self.L > 0:
            raise UsageError("L must be positive")
        if self.N < 2 or self.N % 2:
            raise UsageError("N must be an even integer >= 2")
        if self.N > N_MAX:
            raise UsageError(f"N is capped at {N_MAX}")

    @property
    def dx(self):
        return 2.0 * self.L / self.N

    @property
    def x(self):
        return -self.L + self.dx * np.arange(self.N)

    @property
    def xi(self):
        return np.pi * np.arange(-self.N // 2, self.N // 2) / self.L

    @property
    def xi_fft(self):
        """Frequencies in numpy FFT order."""
        return np.fft.ifftshift(self.xi)

    @property
    def midpoints(self):
        return -self.L + 0.5 * self.dx * np.arange(2 * self.N - 1)

    @property
    def xi_max(self):
        return np.pi * self.N / (2 * self.L)

    def to_dict(self):
        return {"L": self.L, "N": self.N, "dx": self.dx}


@dataclass(frozen=True)
class GridSymbol:
    """Phase-space function on the grid with optional exact partial derivatives.

    ``kind`` is ``"x"`` (function of position only), ``"xi"`` (frequency only)
    or ``"joint"``; the first two quantize by exact diagonal formulas.
    """

    fn: object
    kind: str = "joint"
    tag: str = "symbol"
    d_x: object = None
    d_xi: object = None

    def __post_init__(self):
        if self.kind not in ("x", "xi", "joint"):
            raise UsageError("kind must be 'x', 'xi' or 'joint'")

    def __call__(self, x, xi):
        return self.fn(x, xi)

    def derivatives(self, x, xi, h=1e-5):
        """``(d_x a, d_xi a)``; central differences where no derivative is given."""
        if self.d_x is not None:
            ax = self.d_x(x, xi)
        elif self.kind == "xi":
            ax = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(xi)))
        else:
            ax = (self.fn(x + h, xi) - self.fn(x - h, xi)) / (2 * h)
        if self.d_xi is not None:
            axi = self.d_xi(x, xi)
        elif self.kind == "x":
            axi = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(xi)))
        else:
            axi = (self.fn(x, xi + h) - self.fn(x, xi - h)) / (2 * h)
        return ax, axi


def x_symbol(f, tag="x-symbol", df=None):
    return GridSymbol(lambda x, xi: f(x) + 0.0 * xi, "x", tag,
                      None if df is None else (lambda x, xi: df(x) + 0.0 * xi))


def xi_symbol(g, tag="xi-symbol", dg=None):
    return GridSymbol(lambda x, xi: g(xi) + 0.0 * x, "xi", tag, None,
                      None if dg is None else (lambda x, xi: dg(xi) + 0.0 * x))


def constant_symbol(c, tag=None):
    return GridSymbol(lambda x, xi: np.full(np.broadcast_shapes(np.shape(x), np.shape(xi)),
                                            float(c)), "x", tag or f"const({c})",
                      lambda x, xi: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(xi))),
                      lambda x, xi: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(xi))))


def as_grid_symbol(a):
    if isinstance(a, GridSymbol):
        return a
    if np.isscalar(a):
        return constant_symbol(a)
    if callable(a):
        return GridSymbol(a, "joint", getattr(a, "__name__", "callable"))
    raise TypeError("symbol must be a GridSymbol, a callable (x, xi) or a scalar")


def periodization_window(L, inner=0.85, outer=0.95):
    """1 on ``|x| <= inner L``, 0 on ``|x| >= outer L``, smooth in between."""
    s = smooth_step()
    scale = 0.125 / (outer - inner)
    return lambda x: 1.0 - s.rho((np.abs(np.asarray(x, dtype=float)) / L - inner) * scale)


def windowed(a, L, inner=0.85, outer=0.95):
    """``a(x, xi) w(x)`` with the periodization window."""
    a = as_grid_symbol(a)
    w = periodization_window(L, inner, outer)
    return GridSymbol(lambda x, xi: a(x, xi) * w(x), a.kind, f"windowed({a.tag})")


@dataclass
class GridOperator:
    grid: Grid
    matrix: np.ndarray = field(repr=False)
    symbol_tag: str
    hermitian_deviation: float
    real_symbol: bool
    raw_hermitian_deviation: float = 0.0

    @property
    def N(self):
        return self.grid.N

    def hermitian_part(self):
        return 0.5 * (self.matrix + self.matrix.conj().T)

    def spectrum_summary(self, count=8):
        ev = eigvalsh(self.hermitian_part())
        return {"symbol": self.symbol_tag, "grid": self.grid.to_dict(),
                "hermitian_deviation": self.hermitian_deviation,
                "min": float(ev[0]), "max": float(ev[-1]),
                "lowest": ev[:count].tolist(), "highest": ev[-count:].tolist()}

    def dump(self, path):
        """Binary dump: 16-byte header then little-endian complex128, row-major."""
        data = HEADER.pack(MAGIC, self.N, 0, 0)
        with open(path, "wb") as fh:
            fh.write(data)
            fh.write(np.ascontiguousarray(self.matrix, dtype="<c16").tobytes(order="C"))


def load_dump(path):
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        magic, n, _, _ = HEADER.unpack(head)
        if magic != MAGIC:
            raise UsageError("not a grid-operator dump")
        body = np.frombuffer(fh.read(), dtype="<c16")
    if body.size != n * n:
        raise UsageError("truncated grid-operator dump")
    return body.reshape(n, n).astype(complex)


def _check_finite(values, where, grid):
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        x = where[idx[0]] if where is not None else None
        raise DomainError(f"non-finite symbol value at midpoint x={x}, xi index {idx[-1]}")


def weyl_quantize(grid, a, hermitian=None):
    """Dense Weyl quantization of ``a`` on ``grid``.

    Real symbols are symmetrised as ``(M + M^H)/2``, which is Hermitian to the
    last bit; position-only and frequency-only symbols use their exact
    diagonal forms so that ``Op(1) = I`` holds exactly.
    """
    a = as_grid_symbol(a)
    N = grid.N
    if a.kind == "x":
        vals = np.asarray(a(grid.x, np.zeros(N)))
        _check_finite(vals, grid.x, grid)
        M = np.diag(vals.astype(complex))
    elif a.kind == "xi":
        vals = np.asarray(a(np.zeros(N), grid.xi_fft))
        _check_finite(vals, None, grid)
        col = np.fft.ifft(vals.astype(complex))
        idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
        M = col[idx]
    else:
        mids = grid.midpoints
        vals = np.broadcast_to(np.asarray(a(mids[:, None], grid.xi[None, :])), (mids.size, N))
        _check_finite(vals, mids, grid)
        F = np.fft.ifft(np.fft.ifftshift(vals.astype(complex), axes=1), axis=1)
        j = np.arange(N)[:, None]
        k = np.arange(N)[None, :]
        M = F[j + k, (j - k) % N]
    real = not np.any(np.imag(vals))
    hermitian = real if hermitian is None else hermitian
    raw_dev = float(np.max(np.abs(M - M.conj().T)))
    if hermitian:
        M = 0.5 * (M + M.conj().T)
    dev = float(np.max(np.abs(M - M.conj().T)))
    return GridOperator(grid, M, a.tag, dev, real, raw_dev)


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

def jap(v):
    return np.sqrt(1.0 + np.asarray(v, dtype=float) ** 2)


def apply_weight(grid, s, l, vec):
    """``<D>^s <x>^l vec`` through the DFT; ``vec`` may hold vectors as columns."""
    vec = np.asarray(vec, dtype=complex)
    tail = (1,) * (vec.ndim - 1)
    u = (jap(grid.x) ** l).reshape(-1, *tail) * vec
    if s == 0:
        return u
    mult = (jap(grid.xi_fft) ** s).reshape(-1, *tail)
    return np.fft.ifft(mult * np.fft.fft(u, axis=0), axis=0)


def weighted_norm(grid, s, l, vec):
    """``|| <D>^s <x>^l vec ||`` with the ``dx``-weighted discrete L^2 norm."""
    vec = np.asarray(vec)
    if vec.shape[0] != grid.N:
        raise UsageError("vector length must equal N")
    w = apply_weight(grid, s, l, vec)
    return float(np.sqrt(grid.dx * np.sum(np.abs(w) ** 2, axis=0)))


def weight_matrix(grid, s, l):
    """Dense matrix of ``<D>^s <x>^l``."""
    return apply_weight(grid, s, l, np.eye(grid.N))


# ---------------------------------------------------------------------------
# commutators and positivity
# ---------------------------------------------------------------------------

def bracket_symbol(p, b):
    """``{p, b} = d_xi p d_x b - d_x p d_xi b`` as a grid symbol."""
    p, b = as_grid_symbol(p), as_grid_symbol(b)

    def fn(x, xi):
        px, pxi = p.derivatives(x, xi)
        bx, bxi = b.derivatives(x, xi)
        return pxi * bx - px * bxi

    return GridSymbol(fn, "joint", f"{{{p.tag},{b.tag}}}")


def interior_projector(grid, x_frac=0.5, xi_frac=0.5, xi_cut=None):
    """``(W, Pi)`` for interior measurements.

    ``W = exp(-(2x / (x_frac L))^4)`` is a smooth spatial window concentrated
    on ``|x| <= x_frac L / 2`` and negligible beyond ``x_frac L``; a sharp
    indicator would itself excite the Nyquist band.  ``Pi`` projects onto
    ``|xi| <= xi_frac xi_max``, or onto ``|xi| <= xi_cut`` when given so that
    refinement studies compare a fixed physical band.
    """
    W = np.diag(np.exp(-(2.0 * grid.x / (x_frac * grid.L)) ** 4))
    cut = xi_frac * grid.xi_max if xi_cut is None else xi_cut
    keep = (np.abs(grid.xi_fft) <= cut).astype(float)
    F = np.fft.fft(np.eye(grid.N), axis=0)
    Pi = np.fft.ifft(keep[:, None] * F, axis=0)
    return W, Pi


@dataclass
class CommutatorResult:
    residual_norm: float
    interior_residual: float
    grid: dict
    tags: tuple

    def to_dict(self):
        return {"residual_norm": self.residual_norm, "interior_residual": self.interior_residual,
                "grid": self.grid, "p": self.tags[0], "b": self.tags[1]}


def commutator_vs_bracket(grid, p, b, bracket=None, x_frac=0.5, xi_frac=0.5, xi_cut=None):
    """``i[Op(p), Op(b)] - Op({p, b})`` in operator 2-norm, full and interior.

    The interior residual is ``|| Pi W R W Pi ||_2``: wrap-around of
    non-periodic symbols and aliasing at the Nyquist frequency are confined
    to the boundary strip and the top of the spectrum, which ``W`` and ``Pi``
    remove.
    """
    p, b = as_grid_symbol(p), as_grid_symbol(b)
    P = weyl_quantize(grid, p).matrix
    B = weyl_quantize(grid, b).matrix
    C = weyl_quantize(grid, bracket if bracket is not None else bracket_symbol(p, b)).matrix
    R = 1j * (P @ B - B @ P) - C
    W, Pi = interior_projector(grid, x_frac, xi_frac, xi_cut)
    inner = Pi @ W @ R @ W @ Pi
    return CommutatorResult(float(np.linalg.norm(R, 2)), float(np.linalg.norm(inner, 2)),
                            grid.to_dict(), (p.tag, b.tag))


def interior_indices(grid, x_frac=0.5):
    """Nodes with ``|x| <= x_frac L / 2``.

    The torus midpoint kernel couples nodes near opposite ends through a
    midpoint near the origin; compressing to the interior removes those
    wrap pairs.
    """
    return np.flatnonzero(np.abs(grid.x) <= x_frac * grid.L / 2)


def positivity_margin(op, tol=1e-10, x_frac=None):
    """Smallest eigenvalue of the Hermitian part of ``op``.

    With ``x_frac`` the operator is first compressed to the interior nodes
    of its grid.
    """
    M = op.matrix if isinstance(op, GridOperator) else np.asarray(op)
    dev = float(np.max(np.abs(M - M.conj().T)))
    if dev > tol * max(1.0, float(np.max(np.abs(M)))):
        raise UsageError(f"operator is not Hermitian (deviation {dev:.3e})")
    H = 0.5 * (M + M.conj().T)
    if x_frac is not None:
        if not isinstance(op, GridOperator):
            raise UsageError("interior compression needs a GridOperator")
        idx = interior_indices(op.grid, x_frac)
        H = H[np.ix_(idx, idx)]
    return float(eigvalsh(H, subset_by_index=[0, 0])[0])


def default_garding_symbol(x, s):
    """Nonnegative ``exp(-x^2/8) (x s)^2`` in the scaled frequency ``s``."""
    return np.exp(-x**2 / 8.0) * (x * s) ** 2


@dataclass
class GardingReport:
    N: tuple
    min_eig: tuple
    eps: tuple
    decreasing: bool

    def to_dict(self):
        return {"N": list(self.N), "min_eig": list(self.min_eig), "eps": list(self.eps),
                "decreasing": self.decreasing}


def garding_experiment(L, a=default_garding_symbol, Ns=(256, 512), x_frac=0.5):
    """Interior lower bound of ``Op(a(x, xi / xi_max))`` on successive grids.

    Scaling the frequency by ``xi_max`` ties the semiclassical parameter to the
    grid, so a nonnegative ``a`` should give ``min eig >= -eps(N)`` with
    ``eps`` shrinking as ``N`` grows.
    """
    mins = []
    for N in Ns:
        g = Grid(L, N)
        scale = g.xi_max
        sym = GridSymbol(lambda x, xi, g=scale: a(x, xi / g), "joint", "garding")
        mins.append(positivity_margin(weyl_quantize(g, sym), x_frac=x_frac))
    eps = tuple(max(0.0, -m) for m in mins)
    dec = all(e2 <= e1 for e1, e2 in zip(eps, eps[1:]))
    return GardingReport(tuple(Ns), tuple(mins), eps, dec)


@dataclass
class RefinementReport:
    N: tuple
    residuals: tuple
    ratios: tuple

    def to_dict(self):
        return {"N": list(self.N), "residuals": list(self.residuals), "ratios": list(self.ratios)}


def refinement_study(L, p, b, Ns=(128, 256, 512), xi_cut=4.0, x_frac=0.5):
    """Interior commutator residual on a fixed physical band over several grids."""
    res = tuple(commutator_vs_bracket(Grid(L, N), p, b, x_frac=x_frac, xi_cut=xi_cut)
                .interior_residual for N in Ns)
    ratios = tuple(r1 / r2 if r2 > 0 else float("inf") for r1, r2 in zip(res, res[1:]))
    return RefinementReport(tuple(Ns), res, ratios)
