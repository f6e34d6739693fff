"""Escape weights ``b^delta_{M,nu}`` and the radial lower bound.

With ``v = d_xi p_0`` and ``eta = x_hat . v_hat`` the weight is::

    b^delta = (rho_-(eta)|x|^gamma + rho_0(eta) + rho_+(eta)|x|^-gamma) exp(-gamma eta)
    b       = b^delta * chibar(|x|/M) * chibar(|xi|/nu)

It grows like ``|x|^gamma`` on incoming directions and decays like
``|x|^-gamma`` on outgoing ones, and ``{p_0, b} = v . d_x b`` is negative
up to a term supported where the spatial cutoff switches on.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .brackets import DEFAULT_STEP, bracket_fd, symbol_function
from .errors import DomainError, UsageError
from .smooth import CutoffPair, smooth_step
from .symbols import PhasePoint


def delta3(delta):
    """``min(7/8 - d, d, 1 - (d - 1)^2, 1 - (d + 1/8)^2)`` for ``d`` in ``(1/2, 7/8)``.

    Evaluated in rational arithmetic on the exact binary value of ``delta`` so
    that inputs like 0.6 give the correctly rounded result.
    """
    d = Fraction(float(delta))
    if not Fraction(1, 2) < d < Fraction(7, 8):
        raise DomainError("delta must lie in (1/2, 7/8)")
    eighth = Fraction(1, 8)
    terms = (Fraction(7, 8) - d, d, 1 - (d - 1) ** 2, 1 - (d + eighth) ** 2)
    return float(min(terms))


@dataclass(frozen=True)
class EscapeWeightParams:
    delta: float = 0.6
    gamma: float = 0.2
    k: float = 0.0
    M: float = 2.0
    nu: float = 0.5

    def __post_init__(self):
        if not 0.5 < self.delta < 0.875:
            raise UsageError("delta must lie in (1/2, 7/8)")
        if not 0 < self.gamma < 0.25:
            raise UsageError("gamma must lie in (0, 1/4)")
        if not (self.M > 0 and self.nu > 0):
            raise UsageError("M and nu must be positive")

    def check_mu(self, mu):
        if not self.gamma < min(0.25, mu / 2):
            raise UsageError(f"gamma={self.gamma} must be below min(1/4, mu/2)={min(0.25, mu / 2)}")

    @property
    def delta3(self):
        return delta3(self.delta)

    @property
    def delta4(self):
        return self.delta3 * self.gamma

    def with_M(self, M):
        return EscapeWeightParams(self.delta, self.gamma, self.k, M, self.nu)

    def to_dict(self):
        return {"delta": self.delta, "gamma": self.gamma, "k": self.k, "M": self.M,
                "nu": self.nu, "delta3": self.delta3, "delta4": self.delta4}


# ---------------------------------------------------------------------------
# eta and b
# ---------------------------------------------------------------------------

def eta_values(sym, x, xi):
    """Vectorised ``x_hat . v_hat``; NaN where ``x = 0`` or ``v = 0``."""
    x = np.asarray(x, dtype=float)
    v = sym.v(xi)
    nx = np.linalg.norm(x, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sum(x * v, axis=-1) / (nx * nv)
    return np.clip(out, -1.0, 1.0)


def eta_coord(sym, pt):
    """``eta = x_hat . v_hat(xi)`` at a phase point."""
    if not np.any(pt.x):
        raise DomainError("eta is undefined at x = 0")
    if not np.any(sym.v(pt.xi)):
        raise DomainError("eta is undefined where v(xi) = 0")
    return float(eta_values(sym, pt.x, pt.xi))


def _profile(r, eta, p):
    s = smooth_step()
    rm = s.rho_minus(eta, p.delta)
    rp = s.rho_plus(eta, p.delta)
    r0 = 1.0 - rm - rp
    return rm, r0, rp, r ** p.gamma, r ** (-p.gamma), np.exp(-p.gamma * eta)


def b_delta_values(sym, p, x, xi):
    """Uncut weight ``b^delta`` (requires ``x != 0`` and ``v != 0``)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    eta = eta_values(sym, x, xi)
    rm, r0, rp, up, down, e = _profile(r, eta, p)
    return (rm * up + r0 + rp * down) * e


def b_values(sym, p, x, xi):
    """Cut-off weight ``b^delta_{M,nu}``; exactly 0 where either cutoff vanishes."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    cut = CutoffPair(p.M, p.nu)
    c = cut.chibar_M(x) * cut.chibar_nu(xi)
    out = np.zeros(np.broadcast_shapes(x.shape[:-1], xi.shape[:-1]))
    live = np.broadcast_to(c > 0, out.shape)
    if np.any(live):
        xb = np.broadcast_to(x, out.shape + x.shape[-1:])[live]
        xib = np.broadcast_to(xi, out.shape + xi.shape[-1:])[live]
        out[live] = b_delta_values(sym, p, xb, xib) * np.broadcast_to(c, out.shape)[live]
    return out


def weight_b(sym, p, pt):
    """``b^delta_{M,nu}(x, xi) >= 0`` at a phase point."""
    return float(b_values(sym, p, pt.x, pt.xi))


def weight_w(sym, p):
    """``(x, xi) -> <xi>^(2k) b^2`` as a vectorised function."""
    def w(x, xi):
        jxi2 = 1.0 + np.sum(np.asarray(xi) ** 2, axis=-1)
        return jxi2 ** p.k * b_values(sym, p, x, xi) ** 2
    return w


# ---------------------------------------------------------------------------
# closed-form bracket {p_0, b}
# ---------------------------------------------------------------------------

@dataclass
class BracketTerms:
    angular: np.ndarray
    radial: np.ndarray
    r0: np.ndarray

    @property
    def total(self):
        return self.angular + self.radial + self.r0


def bracket_p0_b_terms(sym, p, x, xi):
    """``{p_0, b}`` split into the ``(1 - eta^2)`` term, the radial term and ``r_0``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    s = smooth_step()
    cut = CutoffPair(p.M, p.nu)
    r = np.linalg.norm(x, axis=-1)
    v = np.linalg.norm(sym.v(xi), axis=-1)
    cM, cnu = cut.chibar_M(x), cut.chibar_nu(xi)
    shape = np.broadcast_shapes(r.shape, v.shape)
    angular, radial, r0 = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    live = np.broadcast_to((cnu > 0) & (r > p.M), shape)
    if not np.any(live):
        return BracketTerms(angular, radial, r0)
    xb = np.broadcast_to(x, shape + x.shape[-1:])[live]
    xib = np.broadcast_to(xi, shape + xi.shape[-1:])[live]
    r, v = np.linalg.norm(xb, axis=-1), np.linalg.norm(sym.v(xib), axis=-1)
    eta = eta_values(sym, xb, xib)
    cM, cnu = cut.chibar_M(xb), cut.chibar_nu(xib)
    rm, r0v, rp, up, down, e = _profile(r, eta, p)
    drm = s.drho_minus(eta, p.delta)
    drp = s.drho_plus(eta, p.delta)
    g = p.gamma
    inner = drm * (up - 1.0) + drp * (down - 1.0) - g * (rm * up + r0v + rp * down)
    angular[live] = (v / r) * (1.0 - eta ** 2) * inner * cM * cnu * e
    radial[live] = g * (v / r) * (eta * rm * up - eta * rp * down) * cM * cnu * e
    bd = (rm * up + r0v + rp * down) * e
    r0[live] = v * eta * bd * s.dchibar(r / p.M) / p.M * cnu
    return BracketTerms(angular, radial, r0)


def bracket_p0_b_closed_form(sym, p, pt):
    """``{p_0, b}`` at a point, with the three contributions exposed."""
    t = bracket_p0_b_terms(sym, p, pt.x, pt.xi)
    return {"angular": float(t.angular), "radial": float(t.radial), "r0": float(t.r0),
            "total": float(t.total)}


def sign_lemma_residual(sym, p, x, xi):
    """``{p_0, b} + delta_3 gamma (|v|/|x|) b - r_0``; nonpositive when the bound holds."""
    t = bracket_p0_b_terms(sym, p, x, xi)
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    v = np.linalg.norm(sym.v(xi), axis=-1)
    b = b_values(sym, p, x, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(b > 0, p.delta4 * v / r * b, 0.0)
    return t.total + lead - t.r0


# ---------------------------------------------------------------------------
# Lemma-type lower bound for {p, <xi>^2k b^2}
# ---------------------------------------------------------------------------

def in_omega(p, x, xi):
    cut = CutoffPair(p.M, p.nu)
    return cut.in_omega1(x, xi) | cut.in_omega2(x, xi)


def sample_radcl_points(dim, p, count, rng, r_span=64.0, xi_max=8.0, transition_frac=0.4):
    """Points outside ``Omega_1 u Omega_2`` covering the support of ``b`` and its edges.

    Most points lie in ``|x| > 2M, |xi| > 2nu``; a share has ``x_hat`` steered
    so that ``eta`` (for even quadratic ``p_0`` of unit signature, roughly)
    lands in the two transition bands of the rho family.  The rest fill the
    regions where ``b`` vanishes (``|xi| < nu`` or ``|x| < M``).
    """
    n_bulk = int(round(0.8 * count))
    n_low_xi = int(round(0.1 * count))
    n_core = count - n_bulk - n_low_xi

    def dirs(k):
        u = rng.standard_normal((k, dim))
        return u / np.linalg.norm(u, axis=-1, keepdims=True)

    def logu(lo, hi, k):
        return np.exp(rng.uniform(np.log(lo), np.log(hi), k))

    xi_b = dirs(n_bulk) * logu(2 * p.nu * 1.0001, max(xi_max, 4 * p.nu), n_bulk)[:, None]
    x_b = dirs(n_bulk) * logu(2 * p.M * 1.0001, r_span * p.M, n_bulk)[:, None]
    n_tr = int(transition_frac * n_bulk) if dim > 1 else 0
    if n_tr:
        # rotate x into the plane of xi so that x_hat . xi_hat hits a transition band
        lo = np.where(rng.random(n_tr) < 0.5, p.delta - 1.0, p.delta)
        c = lo + rng.random(n_tr) * 0.125
        u = xi_b[:n_tr] / np.linalg.norm(xi_b[:n_tr], axis=-1, keepdims=True)
        w = rng.standard_normal((n_tr, dim))
        w -= np.sum(w * u, axis=-1, keepdims=True) * u
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        xh = c[:, None] * u + np.sqrt(1 - c * c)[:, None] * w
        x_b[:n_tr] = xh * np.linalg.norm(x_b[:n_tr], axis=-1, keepdims=True)
    xi_l = dirs(n_low_xi) * logu(1e-3 * p.nu, p.nu * 0.9999, n_low_xi)[:, None]
    x_l = dirs(n_low_xi) * logu(p.M / 2, r_span * p.M, n_low_xi)[:, None]
    xi_c = dirs(n_core) * logu(1e-2, xi_max, n_core)[:, None]
    x_c = dirs(n_core) * logu(1e-2 * p.M, p.M * 0.9999, n_core)[:, None]
    return np.concatenate([x_b, x_l, x_c]), np.concatenate([xi_b, xi_l, xi_c])


@dataclass
class BoundReport:
    worst_margin: float
    witness: dict
    n_points: int
    n_checked: int
    n_skipped_omega: int
    tol: float
    passed: bool
    smallness: dict
    params: dict
    n_support: int = 0
    support_worst_margin: float | None = None
    min_relative_margin: float | None = None
    margins: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"worst_margin": self.worst_margin, "witness": self.witness,
                "n_points": self.n_points, "n_checked": self.n_checked,
                "n_skipped_omega": self.n_skipped_omega, "tol": self.tol,
                "passed": self.passed, "smallness": self.smallness, "params": self.params,
                "n_support": self.n_support, "support_worst_margin": self.support_worst_margin,
                "min_relative_margin": self.min_relative_margin}


def estimate_C_prime(sym, p, rng, count=2000, r_span=64.0, xi_max=8.0, step=DEFAULT_STEP):
    """Sampled ``C'`` with ``|{q, b^delta}| <= C' M^-(mu - 2 gamma) (|v|/|x|) b^delta`` on supp b."""
    dim = sym.dim
    u = rng.standard_normal((count, dim))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    x = u * np.exp(rng.uniform(np.log(p.M), np.log(r_span * p.M), count))[:, None]
    w = rng.standard_normal((count, dim))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    xi = w * np.exp(rng.uniform(np.log(p.nu), np.log(max(xi_max, 2 * p.nu)), count))[:, None]
    q = lambda a, b: sym.eval(a, b, "full") - sym.eval(a, b, "free")
    bd = lambda a, b: b_delta_values(sym, p, a, b)
    br = bracket_fd(q, bd, x, xi, step)
    r = np.linalg.norm(x, axis=-1)
    v = np.linalg.norm(sym.v(xi), axis=-1)
    ratio = np.abs(br) * r / (v * bd(x, xi)) * p.M ** (sym.mu - 2 * p.gamma)
    k = int(np.argmax(ratio))
    return float(ratio[k]), {"x": x[k].tolist(), "xi": xi[k].tolist()}


def smallness_check(sym, p, rng, count=2000):
    Cp, witness = estimate_C_prime(sym, p, rng, count)
    lhs = 2.0 * Cp * p.M ** (-(sym.mu - 2 * p.gamma))
    return {"M": p.M, "C_prime": Cp, "lhs": lhs, "rhs": p.delta4, "holds": lhs <= p.delta4,
            "witness": witness}


def auto_M(sym, p, rng_factory, count=2000, max_doublings=12):
    """Double ``M`` until ``2 C' M^-(mu - 2 gamma) <= delta_3 gamma``."""
    p.check_mu(sym.mu)
    history = []
    for i in range(max_doublings + 1):
        chk = smallness_check(sym, p, rng_factory(i), count)
        history.append({k: chk[k] for k in ("M", "C_prime", "lhs", "holds")})
        if chk["holds"]:
            return p, chk, history
        p = p.with_M(2 * p.M)
    raise DomainError(f"smallness condition still fails at M={p.M / 2}")


def verify_radcl_bound(sym, p, x, xi, tol=1e-8, smallness=None, step=DEFAULT_STEP):
    """Check ``-{p, <xi>^2k b^2} - delta_4 (|v|/|x|) <xi>^2k b^2 >= -tol`` off ``Omega_1 u Omega_2``.

    The bracket is the finite-difference oracle applied to the full symbol.
    With the bracket convention used here, the left side is the quantity the
    positive-commutator argument needs bounded below.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if x.shape[0] == 0:
        raise UsageError("sample is empty")
    skip = in_omega(p, x, xi)
    xs, xis = x[~skip], xi[~skip]
    if xs.shape[0] == 0:
        raise UsageError("every sample point lies in Omega_1 or Omega_2")
    w = weight_w(sym, p)
    br = bracket_fd(symbol_function(sym, "full"), w, xs, xis, step)
    wv = w(xs, xis)
    r = np.linalg.norm(xs, axis=-1)
    v = np.linalg.norm(sym.v(xis), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(wv > 0, p.delta4 * v / r * wv, 0.0)
    margins = -br - lead
    k = int(np.argmin(margins))
    worst = float(margins[k])
    on = wv > 0
    # margin relative to (|v|/|x|) w, to be compared with delta_4
    rel = margins[on] / (v[on] / r[on] * wv[on])
    return BoundReport(
        worst_margin=worst,
        witness={"x": xs[k].tolist(), "xi": xis[k].tolist(), "weight": float(wv[k])},
        n_points=int(x.shape[0]), n_checked=int(xs.shape[0]),
        n_skipped_omega=int(skip.sum()), tol=tol, passed=worst >= -tol,
        smallness=smallness or {}, params=p.to_dict(), n_support=int(on.sum()),
        support_worst_margin=float(margins[on].min()) if on.any() else None,
        min_relative_margin=float(rel.min()) if on.any() else None, margins=margins,
    )


def radcl_pipeline(sym, p, rng_factory, count=10_000, tol=1e-8, smallness_count=2000):
    """Auto-tune ``M``, sample off ``Omega_1 u Omega_2`` and verify the bound."""
    p, chk, history = auto_M(sym, p, rng_factory, smallness_count)
    x, xi = sample_radcl_points(sym.dim, p, count, rng_factory("points"))
    chk = dict(chk, history=history)
    return verify_radcl_bound(sym, p, x, xi, tol=tol, smallness=chk)


def as_point(x, xi):
    return PhasePoint(x, xi)
