"""Moving phase-space bump along a null trajectory, and its backward transport.

For a seed trajectory ``(y(t), eta(t))``::

    psi_0(t, x, xi) = Psi(|x - y(t)| / (delta_1 <t>)) * Psi(|xi - eta(t)| / gamma(t))
    gamma(t)        = delta_2 - C_1 <t>^-mu

The transport inequality ``d_t psi_0 + {p_m, psi_0} >= 0`` holds for
``t >= T00`` once ``C_1`` and ``T00`` are large enough; ``tune_transport``
searches for them.  ``BackwardTransport`` solves the transport equation with
source ``rho_c(t) (d_t psi_0 + {p_m, psi_0})`` and terminal data ``psi_0`` at
``T00 + 1`` by characteristics.
"""

from dataclasses import dataclass, field

import numpy as np

from .brackets import bracket_fd, symbol_function
from .errors import DomainError, IntegrationError, UsageError
from .flow import IntegratorOpts, integrate
from .smooth import smooth_step
from .symbols import PhasePoint

TRANSPORT_STEP = 2e-6


def jt(t):
    return np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)


@dataclass(frozen=True)
class TransportParams:
    delta1: float = 1.0
    delta2: float = 0.1
    C1: float = 0.0
    T00: float = 1.0
    h: float = 1.0
    mu: float = 1.0
    separation: float = 10.0

    def __post_init__(self):
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise UsageError("delta1 and delta2 must be positive")
        if self.delta1 < self.separation * self.delta2:
            raise UsageError(f"need delta1 >= {self.separation} * delta2")
        if self.C1 < 0:
            raise UsageError("C1 must be nonnegative")
        if not 0 < self.h <= 1:
            raise DomainError("h must lie in (0, 1]")
        if not self.mu > 0:
            raise UsageError("mu must be positive")
        if not self.gamma(self.T00) > 0:
            raise UsageError("gamma(T00) must be positive")

    def gamma(self, t):
        return self.delta2 - self.C1 * jt(t) ** (-self.mu)

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)
        return self.C1 * self.mu * t * jt(t) ** (-self.mu - 2)

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return TransportParams(**d)

    def to_dict(self):
        return {"delta1": self.delta1, "delta2": self.delta2, "C1": self.C1, "T00": self.T00,
                "h": self.h, "mu": self.mu, "separation": self.separation}


def seed_trajectory(sym, seed, t_end, opts=None):
    """Forward principal flow from the seed, covering ``[0, t_end]``."""
    return integrate(sym, seed, float(t_end), opts or IntegratorOpts())


def _check_time(traj, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > traj.t_final):
        raise DomainError(f"t outside trajectory coverage [0, {traj.t_final}]")


def psi0_values(traj, tp, t, x, xi):
    """Vectorised ``psi_0``; ``t`` broadcasts against the leading shape of ``x``."""
    _check_time(traj, t)
    t = np.asarray(t, dtype=float)
    g = tp.gamma(t)
    if np.any(g <= 0):
        raise DomainError("gamma(t) must be positive")
    s = smooth_step()
    y, eta = traj.at(t)
    r1 = np.linalg.norm(np.asarray(x) - y, axis=-1) / (tp.delta1 * jt(t))
    r2 = np.linalg.norm(np.asarray(xi) - eta, axis=-1) / g
    return s.Psi(r1) * s.Psi(r2)


def transport_psi0(sym, traj, tp, t, pt):
    """``psi_0(t, x, xi)`` at one point."""
    return float(psi0_values(traj, tp, t, pt.x, pt.xi))


def transport_integrand_fd(sym, traj, tp, t, x, xi, step=TRANSPORT_STEP):
    """``d_t psi_0 + {p_m, psi_0}``: time difference on dense output, bracket by the oracle."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    ht = step * np.maximum(1.0, np.abs(t))

    def dt(hh):
        return (psi0_values(traj, tp, t + hh, x, xi) - psi0_values(traj, tp, t - hh, x, xi)) / (2 * hh)

    dpsi_dt = (4.0 * dt(ht / 2) - dt(ht)) / 3.0
    f = lambda a, b: psi0_values(traj, tp, t, a, b)
    br = bracket_fd(symbol_function(sym, "principal"), f, x, xi, step)
    return dpsi_dt + br


def transport_integrand_analytic(sym, traj, tp, t, x, xi):
    """Same quantity from ``Psi'(r1) Psi(r2) A_0 + Psi(r1) Psi'(r2) A_1``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    s = smooth_step()
    y, eta = traj.at(t)
    dx = x - y
    dxi = xi - eta
    nx = np.linalg.norm(dx, axis=-1)
    nxi = np.linalg.norm(dxi, axis=-1)
    g = tp.gamma(t)
    j = jt(t)
    r1 = nx / (tp.delta1 * j)
    r2 = nxi / g
    L = sym.dxi(x, xi, "principal") - sym.dxi(y, eta, "principal")
    K = sym.dx(y, eta, "principal") - sym.dx(x, xi, "principal")
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(nx[..., None] > 0, dx / nx[..., None], 0.0)
        uxi = np.where(nxi[..., None] > 0, dxi / nxi[..., None], 0.0)
    A0 = (np.sum(L * ux, axis=-1) - t * nx / j ** 2) / (tp.delta1 * j)
    A1 = (-tp.dgamma(t) * nxi / g + np.sum(K * uxi, axis=-1)) / g
    return s.dPsi(r1) * s.Psi(r2) * A0 + s.Psi(r1) * s.dPsi(r2) * A1


def transport_grid(traj, tp, t_lo, t_hi, count, rng, overshoot=1.15):
    """Sample ``(t, x, xi)`` filling the support of ``psi_0`` and a margin around it."""
    t = rng.uniform(t_lo, t_hi, count)
    y, eta = traj.at(t)
    n = y.shape[-1]

    def ball(k, radius):
        u = rng.standard_normal((k, n))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        return u * (radius * rng.random(k) ** (1.0 / n))[:, None]

    x = y + ball(count, tp.delta1 * jt(t) * overshoot)
    xi = eta + ball(count, tp.gamma(t) * overshoot)
    return t, x, xi


@dataclass
class TransportReport:
    minimum: float
    witness: dict
    n_points: int
    n_support: int
    tol: float
    passed: bool
    params: dict
    a0_margin: float | None
    t_range: tuple
    values: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"minimum": self.minimum, "witness": self.witness, "n_points": self.n_points,
                "n_support": self.n_support, "tol": self.tol, "passed": self.passed,
                "params": self.params, "a0_margin": self.a0_margin,
                "t_range": list(self.t_range)}


def verify_transport_inequality(sym, traj, tp, t, x, xi, tol=1e-9, step=TRANSPORT_STEP,
                                a0_margin=None):
    """Minimum of ``d_t psi_0 + {p_m, psi_0}`` over the grid ``(t, x, xi)``."""
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise UsageError("empty grid")
    if np.any(t < tp.T00):
        raise UsageError("grid times must be >= T00")
    vals = transport_integrand_fd(sym, traj, tp, t, x, xi, step)
    k = int(np.argmin(vals))
    support = psi0_values(traj, tp, t, x, xi) > 0
    return TransportReport(
        minimum=float(vals[k]),
        witness={"t": float(t[k]), "x": np.asarray(x)[k].tolist(),
                 "xi": np.asarray(xi)[k].tolist()},
        n_points=int(t.size), n_support=int(support.sum()), tol=tol,
        passed=bool(vals[k] >= -tol), params=tp.to_dict(), a0_margin=a0_margin,
        t_range=(float(t.min()), float(t.max())), values=vals,
    )


# ---------------------------------------------------------------------------
# tuning C_1 and T00
# ---------------------------------------------------------------------------

def _support_constants(sym, traj, tp, T00, t_hi, rng, count):
    """Sampled sup of ``|dx p_m(y,eta) - dx p_m(x,xi)| <t>^(1+mu)`` and of ``|L|`` on the support."""
    t = np.geomspace(max(T00, 1e-3), t_hi, 16)
    t = np.repeat(t, count // 16)
    y, eta = traj.at(t)
    n = y.shape[-1]
    u = rng.standard_normal((t.size, n))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    w = rng.standard_normal((t.size, n))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    x = y + u * (tp.delta1 * jt(t) * rng.random(t.size))[:, None]
    xi = eta + w * (tp.delta2 * rng.random(t.size))[:, None]
    K = np.linalg.norm(sym.dx(y, eta, "principal") - sym.dx(x, xi, "principal"), axis=-1)
    C = float(np.max(K * jt(t) ** (1 + tp.mu)))
    L = np.linalg.norm(sym.dxi(x, xi, "principal") - sym.dxi(y, eta, "principal"), axis=-1)
    margin = t * tp.delta1 / (2 * jt(t)) - L
    return C, float(np.min(margin))


@dataclass
class TuneResult:
    params: TransportParams
    C: float
    a0_margin: float
    history: list

    def to_dict(self):
        return {"params": self.params.to_dict(), "C": self.C, "a0_margin": self.a0_margin,
                "history": self.history}


def tune_transport(sym, traj, tp, t_hi, rng, count=4096, max_doublings=10, fixed_C1=None):
    """Pick ``T00`` then ``C_1 = 4 C <T00> / (mu T00)``, doubling ``T00`` until usable.

    ``T00`` is accepted when ``gamma(T00) >= delta_2 / 2`` and the sampled
    ``A_0`` margin ``t delta_1 / (2<t>) - |L|`` is positive on ``[T00, t_hi]``.
    """
    history = []
    T00 = tp.T00
    for _ in range(max_doublings + 1):
        if T00 + 1 > traj.t_final or T00 >= t_hi:
            break
        C, margin = _support_constants(sym, traj, tp, T00, t_hi, rng, count)
        C1 = 4.0 * C * jt(T00) / (tp.mu * T00) if fixed_C1 is None else fixed_C1
        g = tp.delta2 - C1 * jt(T00) ** (-tp.mu)
        history.append({"T00": T00, "C": C, "C1": C1, "gamma_T00": float(g),
                        "a0_margin": margin})
        if g >= tp.delta2 / 2 and margin > 0:
            return TuneResult(tp.replace(T00=T00, C1=C1), C, margin, history)
        T00 *= 2
    raise DomainError("could not find T00 with gamma(T00) >= delta2/2 and positive A0 margin")


# ---------------------------------------------------------------------------
# backward transport by characteristics
# ---------------------------------------------------------------------------

def rho_cutoff(T00):
    """``rho_c(t) = rho((t - T00)/8)``: 0 for ``t <= T00``, 1 for ``t >= T00 + 1``."""
    s = smooth_step()
    return (lambda t: s.rho((np.asarray(t) - T00) / 8.0),
            lambda t: s.drho((np.asarray(t) - T00) / 8.0) / 8.0)


def _gauss_panels(a, b, panels, nodes):
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return t, w


@dataclass
class BackwardSample:
    point: PhasePoint
    s: float
    value: float | None
    by_parts: float | None
    flagged: str | None = None

    def to_dict(self):
        return {"point": self.point.as_dict(), "s": self.s, "value": self.value,
                "by_parts": self.by_parts, "flagged": self.flagged}


class BackwardTransport:
    """``psi(s, z)`` from the source integral along the characteristic through ``z``.

    ``value`` is ``psi_0(T1, z(T1)) - int_s^T1 rho_c (d_t psi_0 + {p_m, psi_0}) dt``
    with the integrand from the finite-difference route; ``by_parts`` is the
    independent form ``rho_c(s) psi_0(s, z) + int_s^T1 rho_c' psi_0 dt``.
    """

    def __init__(self, sym, traj, tp, panels=64, nodes=8, step=TRANSPORT_STEP, opts=None):
        self.sym, self.traj, self.tp = sym, traj, tp
        self.T1 = tp.T00 + 1.0
        if traj.t_final < self.T1:
            raise DomainError("seed trajectory must cover [0, T00 + 1]")
        self.rho_c, self.drho_c = rho_cutoff(tp.T00)
        self.panels, self.nodes, self.step = panels, nodes, step
        self.opts = opts or IntegratorOpts()

    def solve_point(self, pt, s=0.0):
        if not 0 <= s <= self.T1:
            raise UsageError("s must lie in [0, T00 + 1]")
        T1, tp = self.T1, self.tp
        try:
            char = integrate(self.sym, pt, T1 - s, self.opts) if T1 > s else None
        except IntegrationError as exc:
            return BackwardSample(pt, s, None, None, flagged=str(exc))
        if char is None:
            v = float(psi0_values(self.traj, tp, T1, pt.x, pt.xi))
            return BackwardSample(pt, s, v, v)
        a = max(s, tp.T00)
        t, w = _gauss_panels(a, T1, self.panels, self.nodes)
        zx, zxi = char.at(t - s)
        src = self.rho_c(t) * transport_integrand_fd(self.sym, self.traj, tp, t, zx, zxi,
                                                     self.step)
        yx, yxi = char.y[-1], char.eta[-1]
        end = float(psi0_values(self.traj, tp, T1, yx, yxi))
        value = end - float(np.sum(w * src))
        parts = float(np.sum(w * self.drho_c(t) * psi0_values(self.traj, tp, t, zx, zxi)))
        parts += float(self.rho_c(s) * psi0_values(self.traj, tp, s, pt.x, pt.xi))
        return BackwardSample(pt, s, value, parts)

    def __call__(self, t, x, xi):
        return self.solve_point(PhasePoint(x, xi), float(t)).value


def solve_backward_transport(sym, traj, tp, points, panels=64, nodes=8):
    """``psi(0, .)`` at each point; the first entry's seed check is left to callers."""
    bt = BackwardTransport(sym, traj, tp, panels, nodes)
    return [bt.solve_point(pt) for pt in points]


def rescale_semiclassical(psi, h, m):
    """``(t, x, xi) -> psi(t/h, x, h^(1/(m-1)) xi)``."""
    if not h > 0:
        raise DomainError("h must be positive")
    if h > 1:
        raise DomainError("h must lie in (0, 1]")
    if int(m) != m or m < 2:
        raise UsageError("m must be an integer >= 2")
    scale = h ** (1.0 / (m - 1))

    def rescaled(t, x, xi):
        return psi(t / h, x, scale * np.asarray(xi, dtype=float))

    rescaled.h = h
    rescaled.xi_scale = scale
    return rescaled


def support_check(traj, tp, t, v_plus, eta_plus, count, rng, box_factor=3.0):
    """Rejection-sample ``supp psi_0(t)`` and test ``|x - t v_+| <= 2 t delta_1``, ``|xi - eta_+| <= 2 delta_2``."""
    y, eta = traj.at(t)
    n = y.size
    rx = box_factor * tp.delta1 * jt(t)
    rxi = box_factor * tp.gamma(t)
    x = y + rng.uniform(-rx, rx, (count, n))
    xi = eta + rng.uniform(-rxi, rxi, (count, n))
    live = psi0_values(traj, tp, t, x, xi) > 0
    dx = np.linalg.norm(x[live] - t * np.asarray(v_plus), axis=-1)
    dxi = np.linalg.norm(xi[live] - np.asarray(eta_plus), axis=-1)
    bad = (dx > 2 * t * tp.delta1) | (dxi > 2 * tp.delta2)
    return {"t": float(t), "n_support": int(live.sum()), "n_outside": int(bad.sum()),
            "max_x_ratio": float(np.max(dx / (2 * t * tp.delta1))) if live.any() else 0.0,
            "max_xi_ratio": float(np.max(dxi / (2 * tp.delta2))) if live.any() else 0.0}


def check_eta_plus(eta_plus, tp):
    """Require ``|eta_+| > 4 delta_1`` so the momentum support stays away from zero."""
    n = float(np.linalg.norm(np.asarray(eta_plus, dtype=float)))
    if not n > 4 * tp.delta1:
        raise UsageError(f"|eta_+| = {n:.6g} must exceed 4 delta_1 = {4 * tp.delta1:.6g}")
    return n
