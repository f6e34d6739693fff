"""Hamilton flow of a symbol: integration, scaling check, null sampling.

The flow is ``y' = d_xi p_m(y, eta)``, ``eta' = -d_x p_m(y, eta)``.  Steps come
from scipy's Dormand-Prince 5(4) stepper driven one step at a time so the
loop can watch the escape radius and keep each step's dense interpolant.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, OdeSolution
from scipy.optimize import brentq

from .errors import IntegrationError, UsageError
from .symbols import PhasePoint, sphere_points


@dataclass(frozen=True)
class IntegratorOpts:
    rtol: float = 1e-10
    atol: float = 1e-12
    drift_tol: float = 1e-8
    escape_stop_radius: float | None = None
    part: str = "principal"
    max_steps: int = 200_000
    min_step: float = 1e-12

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.drift_tol > 0):
            raise UsageError("integrator tolerances must be positive")
        if self.part not in ("principal", "full"):
            raise UsageError("flow part must be 'principal' or 'full'")
        if self.escape_stop_radius is not None and not self.escape_stop_radius > 0:
            raise UsageError("escape_stop_radius must be positive")


@dataclass
class Trajectory:
    """Sampled flow with dense output.

    ``t`` holds accepted step times in the integration direction; ``dense``
    evaluates ``(y, eta)`` anywhere in the covered interval.
    """

    seed: PhasePoint
    direction: str
    t: np.ndarray
    y: np.ndarray
    eta: np.ndarray
    dense: OdeSolution = field(repr=False)
    drift: float
    drift_rel: float
    n_steps: int
    nfev: int
    stopped_early: bool
    drift_tol: float

    @property
    def t_final(self):
        return float(self.t[-1])

    @property
    def accepted(self):
        return self.drift_rel <= self.drift_tol

    def at(self, t):
        """``(y, eta)`` at time(s) ``t`` via dense output."""
        t = np.asarray(t, dtype=float)
        lo, hi = sorted((self.t[0], self.t[-1]))
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise UsageError(f"time outside trajectory coverage [{lo}, {hi}]")
        z = self.dense(t)
        n = self.seed.dim
        return z[:n].T, z[n:].T

    def radius(self):
        return np.linalg.norm(self.y, axis=-1)

    def diagnostics(self):
        steps = np.abs(np.diff(self.t))
        return {
            "direction": self.direction, "t_final": self.t_final,
            "n_steps": self.n_steps, "nfev": self.nfev,
            "min_step": float(steps.min()) if steps.size else 0.0,
            "max_step": float(steps.max()) if steps.size else 0.0,
            "drift": self.drift, "drift_rel": self.drift_rel,
            "stopped_early": self.stopped_early,
        }

    def rows(self, sym):
        """Rows ``(t, y_1..y_n, eta_1..eta_n, drift)``."""
        p = sym.eval(self.y, self.eta, "principal")
        p_seed = sym.eval(self.seed.x, self.seed.xi, "principal")
        drift = np.abs(p - p_seed)
        return np.column_stack([self.t, self.y, self.eta, drift])

    def to_csv(self, sym):
        n = self.seed.dim
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"y{j + 1}" for j in range(n)] + [f"eta{j + 1}" for j in range(n)]
                   + ["drift"])
        for row in self.rows(sym):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _rhs(sym, part):
    n = sym.dim

    def f(t, z):
        dxi, dx = sym.field(z[:n], z[n:], part)
        return np.concatenate([dxi, -dx])

    return f


def integrate(sym, seed, t_end, opts=None):
    """Integrate the flow from ``seed`` over ``[0, t_end]`` (``t_end < 0`` runs backward)."""
    opts = IntegratorOpts() if opts is None else opts
    if not np.isfinite(t_end) or t_end == 0:
        raise UsageError("t_end must be finite and nonzero")
    if seed.dim != sym.dim:
        raise UsageError("seed dimension does not match the symbol")
    n = sym.dim
    z0 = np.concatenate([seed.x, seed.xi])
    solver = RK45(_rhs(sym, opts.part), 0.0, z0, float(t_end),
                  rtol=opts.rtol, atol=opts.atol)
    ts, zs, interps = [0.0], [z0.copy()], []
    stopped = False
    r_stop = opts.escape_stop_radius
    while solver.status == "running":
        if len(ts) > opts.max_steps:
            raise IntegrationError("step budget exhausted", t=ts[-1], state=zs[-1])
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed: {msg}", t=ts[-1], state=zs[-1])
        if not np.all(np.isfinite(solver.y)):
            raise IntegrationError("non-finite state", t=ts[-1], state=zs[-1])
        if solver.t != ts[-1] and abs(solver.t - ts[-1]) < opts.min_step and solver.status == "running":
            raise IntegrationError("step size underflow", t=ts[-1], state=zs[-1])
        ts.append(solver.t)
        zs.append(solver.y.copy())
        interps.append(solver.dense_output())
        if r_stop is not None and np.linalg.norm(solver.y[:n]) > r_stop:
            stopped = solver.status == "running"
            break
    t = np.array(ts)
    Z = np.array(zs)
    dense = OdeSolution(t, interps)
    p = sym.eval(Z[:, :n], Z[:, n:], "principal")
    p_seed = float(sym.eval(seed.x, seed.xi, "principal"))
    drift = float(np.max(np.abs(p - p_seed)))
    return Trajectory(
        seed=seed, direction="forward" if t_end > 0 else "backward",
        t=t, y=Z[:, :n], eta=Z[:, n:], dense=dense,
        drift=drift, drift_rel=drift / max(1.0, abs(p_seed)),
        n_steps=len(ts) - 1, nfev=solver.nfev, stopped_early=stopped,
        drift_tol=opts.drift_tol,
    )


def scaling_residual(sym, seed, lam, t, opts=None):
    """Distance between the flows from ``lam * xi`` and the rescaled flow from ``xi``.

    Compares ``(y(t, x, lam xi), eta(t, x, lam xi))`` with
    ``(y(lam^(m-1) t, x, xi), lam eta(lam^(m-1) t, x, xi))``.
    """
    opts = IntegratorOpts() if opts is None else opts
    if not lam > 0:
        raise UsageError("lambda must be positive")
    if opts.part != "principal":
        raise UsageError("scaling identity holds for the principal flow only")
    if t == 0:
        return 0.0
    scaled = PhasePoint(seed.x, lam * seed.xi)
    a = integrate(sym, scaled, t, opts)
    b = integrate(sym, seed, lam ** (sym.m - 1) * t, opts)
    ya, ea = a.y[-1], a.eta[-1]
    yb, eb = b.y[-1], lam * b.eta[-1]
    return float(max(np.max(np.abs(ya - yb)), np.max(np.abs(ea - eb))))


@dataclass
class CharSample:
    points: list
    empty: bool
    flag: str | None
    discarded: int
    attempts: int
    tol_char: float

    def to_dict(self):
        return {"points": [p.as_dict() for p in self.points], "empty": self.empty,
                "flag": self.flag, "discarded": self.discarded,
                "attempts": self.attempts, "tol_char": self.tol_char}


def _circle_roots(f, probes):
    """Bracketed roots of ``f`` on a closed circle sampled at ``probes`` angles."""
    vals = f(probes)
    roots = []
    k = len(probes)
    for i in range(k):
        a, b = probes[i], probes[(i + 1) % k] + (2 * np.pi if i == k - 1 else 0.0)
        fa, fb = vals[i], vals[(i + 1) % k]
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(f, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps,
                                maxiter=200))
    return roots


def sample_characteristic(sym, region, count, rng, tol_char=1e-10, n_probe=72,
                          max_attempts=None):
    """Null points ``p_m(x, xi) = 0`` with ``|xi| = 1``.

    ``region`` is a box ``[(lo_1, hi_1), ...]``.  Each attempt draws ``x`` in
    the box and a great circle through a random unit ``xi``; sign changes of
    ``p_m`` along the circle are bracketed and refined, one root is kept.
    Attempts with no sign change are counted as discarded.
    """
    if count < 1:
        raise UsageError("count must be >= 1")
    box = np.asarray(region, dtype=float).reshape(sym.dim, 2)
    if np.any(box[:, 1] < box[:, 0]):
        raise UsageError("region bounds must satisfy lo <= hi")
    n = sym.dim
    max_attempts = 20 * count if max_attempts is None else max_attempts
    probes = np.linspace(0.0, 2 * np.pi, n_probe, endpoint=False)
    points, discarded, attempts = [], 0, 0
    while len(points) < count and attempts < max_attempts:
        attempts += 1
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(n)
        if n == 1:
            u = np.array([1.0])
            w = None
        else:
            u = rng.standard_normal(n)
            u /= np.linalg.norm(u)
            w = rng.standard_normal(n)
            w -= (w @ u) * u
            w /= np.linalg.norm(w)
        if w is None:
            cands = [np.array([1.0]), np.array([-1.0])]
            cands = [c for c in cands if abs(sym.eval(x, c, "principal")) <= tol_char]
        else:
            def f(th, x=x, u=u, w=w):
                th = np.asarray(th, dtype=float)
                xi = np.cos(th)[..., None] * u + np.sin(th)[..., None] * w
                return sym.eval(np.broadcast_to(x, xi.shape), xi, "principal")

            roots = _circle_roots(f, probes)
            cands = []
            for th in roots:
                xi = np.cos(th) * u + np.sin(th) * w
                xi /= np.linalg.norm(xi)
                if abs(float(sym.eval(x, xi, "principal"))) <= tol_char:
                    cands.append(xi)
        if not cands:
            discarded += 1
            continue
        pick = cands[int(rng.integers(len(cands)))]
        points.append(PhasePoint(x, pick))
    flag = None
    if not points:
        flag = ("no sign change of p_m on any probe circle: symbol appears elliptic "
                "over the region (characteristic set empty)")
    return CharSample(points=points, empty=not points, flag=flag, discarded=discarded,
                      attempts=attempts, tol_char=tol_char)


def sphere_seeds(sym, dim_points=64):
    """Deterministic unit momenta for sweeps (helper for tests and demos)."""
    return sphere_points(sym.dim, dim_points)
