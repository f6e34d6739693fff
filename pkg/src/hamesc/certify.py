"""Quantitative null non-trapping certificates.

The chain is: lattice estimate of the second derivative of ``|x|^2`` along
the principal flow (``M`` beyond ``R0``), the escape radius ``R1`` built from
``M`` and the decay constant ``C0``, then per-seed integration until the
outgoing condition ``|y| >= R1, d|y|^2/dt >= 0`` is met.  Past that time the
flow must stay outgoing with a two-sided momentum band, which is checked on
the computed trajectory rather than assumed.
"""

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from . import __version__
from .errors import DomainError, InsufficientData, IntegrationError, UsageError
from .flow import IntegratorOpts, integrate, sample_characteristic
from .rng import make_rng
from .symbols import PhasePoint, ValidationLattice, sphere_points, validate

CERTIFICATE_VERSION = "1"
DEFAULT_MOURRE_RADII = (1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0,
                        64.0, 128.0)


def symbol_hash(sym):
    blob = json.dumps(sym.describe(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Mourre constants
# ---------------------------------------------------------------------------

def mourre_quantity(sym, x, xi):
    """``H_{p_m}^2(|x|^2)`` evaluated exactly from first and mixed derivatives."""
    dxi = sym.dxi(x, xi, "principal")
    dx = sym.dx(x, xi, "principal")
    mixed = sym.dx_dxi(x, xi, "principal")      # [k, j] = d_xk d_xij
    hxi = sym.dxi_dxi(x, xi, "principal")
    t1 = 2.0 * np.sum(dxi * dxi, axis=-1)
    t2 = 2.0 * np.einsum("...j,...kj,...k->...", x, mixed, dxi)
    t3 = -2.0 * np.einsum("...j,...jk,...k->...", x, hxi, dx)
    return t1 + t2 + t3


@dataclass
class MourreConstants:
    R0: float
    M: float
    witness: PhasePoint
    shell_minima: dict
    safety_factor: float

    def to_dict(self):
        return {"R0": self.R0, "M": self.M, "witness": self.witness.as_dict(),
                "safety_factor": self.safety_factor,
                "shell_minima": {repr(k): v for k, v in self.shell_minima.items()}}


def estimate_mourre(sym, radii=DEFAULT_MOURRE_RADII, n_x_dirs=48, n_xi=96, safety_factor=1.0):
    """Smallest sampled ``R0 > 1`` with ``H^2(|x|^2) / |xi|^(2(m-1)) > 0`` beyond it.

    Each radius is a sampling shell; the minimum over all shells at or beyond
    a candidate is used, so ``M(R0)`` is nondecreasing in ``R0``.
    """
    if not 0 < safety_factor <= 1:
        raise UsageError("safety_factor must lie in (0, 1]")
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 1:
        raise UsageError("Mourre candidate radii must all exceed 1")
    dirs = sphere_points(sym.dim, n_x_dirs)
    XI = sphere_points(sym.dim, n_xi)
    shell_min, shell_arg = {}, {}
    for r in radii:
        X = r * dirs
        x = np.repeat(X, len(XI), axis=0)
        xi = np.tile(XI, (len(X), 1))
        q = mourre_quantity(sym, x, xi) / np.sum(xi * xi, axis=-1) ** (sym.m - 1)
        k = int(np.argmin(q))
        shell_min[r] = float(q[k])
        shell_arg[r] = (x[k], xi[k])
    tail_min = {}
    running, arg = np.inf, None
    for r in reversed(radii):
        if shell_min[r] < running:
            running, arg = shell_min[r], shell_arg[r]
        tail_min[r] = (running, arg)
    for r in radii:
        m_val, (wx, wxi) = tail_min[r]
        if m_val > 0:
            return MourreConstants(R0=r, M=m_val * safety_factor, witness=PhasePoint(wx, wxi),
                                   shell_minima=shell_min, safety_factor=safety_factor)
    raise DomainError("no candidate radius gives a positive sampled Mourre minimum")


def escape_radius(C0, m, mu, M, R0, safety_factor=2.0):
    """``max(R0, safety * (C0 2^((2m+1)/2) / ((1+mu) sqrt(M)))^(1/mu))``."""
    if not M > 0:
        raise DomainError("Mourre constant M must be positive")
    if C0 < 0:
        raise UsageError("C0 must be nonnegative")
    base = C0 * np.sqrt(2.0 ** (2 * m + 1) / M) / (1.0 + mu)
    return float(max(R0, safety_factor * base ** (1.0 / mu)))


# ---------------------------------------------------------------------------
# per-seed certification
# ---------------------------------------------------------------------------

@dataclass
class PointCertificate:
    seed: PhasePoint
    direction: str
    status: str
    t_exit: float | None
    eta0: float | None
    band: tuple | None
    band_limits: tuple | None
    C1: float | None
    C2: float | None
    eta_plus: np.ndarray | None
    v_plus: np.ndarray | None
    rate_residuals: dict | None
    reentries: int
    monotone_violation: float
    T_max: float
    trajectory: dict
    diagnostic: str | None = None
    plot_rows: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        vec = lambda a: None if a is None else [float(v) for v in a]
        return {
            "seed": self.seed.as_dict(), "direction": self.direction, "status": self.status,
            "t_exit": self.t_exit, "eta0": self.eta0,
            "band": None if self.band is None else list(self.band),
            "band_limits": None if self.band_limits is None else list(self.band_limits),
            "C1": self.C1, "C2": self.C2,
            "eta_plus": vec(self.eta_plus), "v_plus": vec(self.v_plus),
            "rate_residuals": self.rate_residuals, "reentries": self.reentries,
            "monotone_violation": self.monotone_violation, "T_max": self.T_max,
            "trajectory": self.trajectory, "diagnostic": self.diagnostic,
        }


def _radial_rate(sym, y, eta, sign):
    """``d|y|^2/ds`` in the direction's own time ``s = |t|``."""
    dxi = sym.dxi(y, eta, "principal")
    return 2.0 * sign * np.sum(y * dxi, axis=-1)


def _count_reentries(r, R1):
    count, outside = 0, False
    for v in r:
        if v >= R1:
            outside = True
        elif outside and v < R1 / 2:
            count += 1
            outside = False
    return count


def find_exit_time(sym, traj, R1):
    """First ``s = |t|`` where ``|y| >= R1`` and ``d|y|^2/ds >= 0`` (dense refinement)."""
    sign = 1.0 if traj.direction == "forward" else -1.0
    ok = (np.linalg.norm(traj.y, axis=-1) >= R1) & (_radial_rate(sym, traj.y, traj.eta, sign) >= 0)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return 0.0

    def cond(s):
        y, eta = traj.at(sign * s)
        return bool(np.linalg.norm(y) >= R1 and _radial_rate(sym, y, eta, sign) >= 0)

    lo, hi = abs(traj.t[i - 1]), abs(traj.t[i])
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if cond(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def _dense_tail(traj, s0, per_step=4):
    """Step nodes past ``s0`` plus interior dense samples."""
    sign = 1.0 if traj.direction == "forward" else -1.0
    s = np.abs(traj.t)
    keep = s > s0
    nodes = np.concatenate([[s0], s[keep]])
    if nodes.size > 1:
        fr = np.linspace(0, 1, per_step + 1)[1:-1]
        inner = (nodes[:-1, None] + np.diff(nodes)[:, None] * fr[None, :]).ravel()
        nodes = np.sort(np.concatenate([nodes, inner]))
    y, eta = traj.at(sign * nodes)
    return nodes, np.atleast_2d(y), np.atleast_2d(eta)


def asymptotic_data(sym, traj, t_exit=0.0, min_span=4.0, floor=1e-9, n_fit=64):
    """Limits ``eta_+ = eta(T)``, ``v_+ = d_xi p_0(eta_+)`` and tail decay fits.

    The fit window runs from ``max(t_exit, 1)`` to ``T/16``: comparing against
    the endpoint value biases the last stretch of the tail.  Points whose
    deviation is below ``floor`` are dropped; if too few remain the rate is
    reported as beyond the floor instead of fitted.
    """
    T = abs(traj.t_final)
    s0 = max(t_exit or 0.0, 1.0)
    s1 = T / 16.0
    if not s1 >= min_span * s0:
        raise InsufficientData(f"tail [{s0:g}, {s1:g}] shorter than factor {min_span}")
    sign = 1.0 if traj.direction == "forward" else -1.0
    eta_plus = traj.eta[-1].copy()
    v_plus = sym.v(eta_plus)
    s = np.geomspace(s0, s1, n_fit)
    y, eta = traj.at(sign * s)
    dev_eta = np.linalg.norm(eta - eta_plus, axis=-1)
    # in backward time y(s)/s tends to -v_+ of the reversed flow
    dev_y = np.linalg.norm(y / s[:, None] - sign * v_plus, axis=-1)
    jt = np.sqrt(1.0 + s * s)

    def fit(dev):
        scale = max(1.0, float(np.max(np.abs(eta_plus))))
        mask = dev > floor * scale
        out = {"max_deviation": float(np.max(dev)), "n_fit": int(mask.sum())}
        if mask.sum() < 4:
            out.update(exponent=None, below_floor=True)
        else:
            slope = np.polyfit(np.log(jt[mask]), np.log(dev[mask]), 1)[0]
            out.update(exponent=float(-slope), below_floor=False)
        return out

    residuals = {"window": [s0, s1], "floor": floor, "eta": fit(dev_eta), "y_over_t": fit(dev_y)}
    return eta_plus, v_plus, residuals


def certify_point(sym, seed, R1, T_max, direction="forward", opts=None, reentry_threshold=3,
                  keep_rows=False):
    """Certify one seed in one time direction."""
    if direction not in ("forward", "backward"):
        raise UsageError("direction must be 'forward' or 'backward'")
    if not T_max > 0:
        raise UsageError("T_max must be positive")
    opts = IntegratorOpts() if opts is None else opts
    sign = 1.0 if direction == "forward" else -1.0
    base = dict(seed=seed, direction=direction, t_exit=None, eta0=None, band=None,
                band_limits=None, C1=None, C2=None, eta_plus=None, v_plus=None,
                rate_residuals=None, reentries=0, monotone_violation=0.0, T_max=T_max)
    try:
        traj = integrate(sym, seed, sign * T_max, opts)
    except IntegrationError as exc:
        return PointCertificate(status="undecided", trajectory={}, diagnostic=str(exc), **base)
    info = traj.diagnostics()
    rows = traj.rows(sym) if keep_rows else None
    r = traj.radius()
    reentries = _count_reentries(r, R1)
    base["reentries"] = reentries
    eta_norm = np.linalg.norm(traj.eta, axis=-1)
    base["C1"] = float(eta_norm.min() ** (sym.m - 1))
    base["C2"] = float(eta_norm.max() ** (sym.m - 1))
    if not traj.accepted:
        return PointCertificate(status="undecided", trajectory=info, plot_rows=rows,
                                diagnostic=f"conservation drift {traj.drift_rel:.3e} over tolerance",
                                **base)
    t_exit = find_exit_time(sym, traj, R1)
    if t_exit is None:
        status = "suspected_trapped" if reentries >= reentry_threshold else "undecided"
        return PointCertificate(status=status, trajectory=info, plot_rows=rows,
                                diagnostic="outgoing condition not met before T_max", **base)
    s, y, eta = _dense_tail(traj, t_exit)
    e = np.linalg.norm(eta, axis=-1)
    eta0 = float(e[0])
    lower, upper = eta0 / 2.0, 2.0 ** (1.0 / (sym.m - 1)) * eta0
    band = (float(e.min()), float(e.max()))
    rad = np.linalg.norm(y, axis=-1)
    drops = rad[:-1] - rad[1:]
    tol = 1e-9 * np.maximum(1.0, rad[:-1])
    violation = float(max(0.0, np.max(drops - tol))) if drops.size else 0.0
    base.update(t_exit=t_exit, eta0=eta0, band=band, band_limits=(lower, upper),
                monotone_violation=violation)
    problems = []
    if band[0] < lower or band[1] > upper:
        problems.append("momentum band violated")
    if violation > 0:
        problems.append("|y| decreased after exit")
    try:
        eta_plus, v_plus, res = asymptotic_data(sym, traj, t_exit)
        base.update(eta_plus=eta_plus, v_plus=v_plus, rate_residuals=res)
    except InsufficientData as exc:
        base["rate_residuals"] = {"error": str(exc)}
    if problems:
        return PointCertificate(status="undecided", trajectory=info, plot_rows=rows,
                                diagnostic="; ".join(problems), **base)
    return PointCertificate(status="escaped", trajectory=info, plot_rows=rows, **base)


# ---------------------------------------------------------------------------
# full certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertifyParams:
    region: tuple = ((-2.0, 2.0), (-2.0, 2.0))
    count: int = 64
    rng_seed: int = 0
    mourre_radii: tuple = DEFAULT_MOURRE_RADII
    mourre_safety: float = 1.0
    r1_safety: float = 2.0
    T_factor: float = 100.0
    T_max: float | None = None
    reentry_threshold: int = 3
    tol_char: float = 1e-10
    jobs: int = 1
    keep_rows: bool = False
    opts: IntegratorOpts = IntegratorOpts()
    lattice: ValidationLattice = ValidationLattice()

    def echo(self):
        return {
            "region": [list(b) for b in self.region], "count": self.count,
            "rng_seed": self.rng_seed, "mourre_radii": list(self.mourre_radii),
            "mourre_safety": self.mourre_safety, "r1_safety": self.r1_safety,
            "T_factor": self.T_factor, "T_max": self.T_max,
            "reentry_threshold": self.reentry_threshold, "tol_char": self.tol_char,
            "integrator": {"rtol": self.opts.rtol, "atol": self.opts.atol,
                           "drift_tol": self.opts.drift_tol,
                           "escape_stop_radius": self.opts.escape_stop_radius},
        }


@dataclass
class NonTrappingCertificate:
    status: str
    vacuous: bool
    mourre: MourreConstants
    R1: float
    C0: float
    nondeg_C: float
    seeds: list
    summary: dict
    sample: dict
    symbol_hash: str
    params: dict

    def to_dict(self):
        return {
            "version": CERTIFICATE_VERSION, "package_version": __version__,
            "symbol_hash": self.symbol_hash, "status": self.status, "vacuous": self.vacuous,
            "mourre": self.mourre.to_dict(), "R1": self.R1, "C0": self.C0,
            "nondeg_C": self.nondeg_C, "seeds": [s.to_dict() for s in self.seeds],
            "summary": self.summary, "sample": self.sample, "params": self.params,
            "soundness": ("a seed is 'escaped' when |y| >= R1 with d|y|^2/dt >= 0 holds at "
                          "some t_exit <= T_max; beyond R1 the Mourre bound forces |y| to keep "
                          "growing, and the trajectory is additionally checked for monotone "
                          "|y| and the momentum band on [t_exit, T_max]"),
        }


def default_T_max(nondeg_C, R1, seed, factor=100.0):
    """``factor * C * max(R1, |x0|)``: time to cross that distance at the slowest speed."""
    return float(factor * nondeg_C * max(R1, float(np.linalg.norm(seed.x))))


def _certify_job(args):
    sym, seed, R1, T_max, direction, opts, thr, keep = args
    return certify_point(sym, seed, R1, T_max, direction, opts, thr, keep)


def resolve_jobs(jobs):
    if jobs is None:
        jobs = int(os.environ.get("HAMESC_JOBS", "1"))
    return max(1, int(jobs))


def run_parallel(fn, tasks, jobs):
    """Map ``fn`` over ``tasks`` preserving order; serial when ``jobs == 1``."""
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def certify(sym, params=None):
    """Compose validation, Mourre estimate, escape radius and per-seed checks."""
    params = CertifyParams() if params is None else params
    report = validate(sym, params.lattice)
    mourre = estimate_mourre(sym, params.mourre_radii, safety_factor=params.mourre_safety)
    R1 = escape_radius(report.C0, sym.m, sym.mu, mourre.M, mourre.R0, params.r1_safety)
    rng = make_rng(params.rng_seed, "char_sample")
    sample = sample_characteristic(sym, params.region, params.count, rng,
                                   tol_char=params.tol_char)
    tasks = []
    for pt in sample.points:
        T = params.T_max or default_T_max(report.nondeg_C, R1, pt, params.T_factor)
        for d in ("forward", "backward"):
            tasks.append((sym, pt, R1, T, d, params.opts, params.reentry_threshold,
                          params.keep_rows))
    jobs = resolve_jobs(params.jobs) if sym.picklable else 1
    seeds = run_parallel(_certify_job, tasks, jobs)
    counts = {k: 0 for k in ("escaped", "undecided", "suspected_trapped")}
    for c in seeds:
        counts[c.status] += 1
    vacuous = sample.empty
    if vacuous:
        status = "certified"
    elif counts["escaped"] == len(seeds):
        status = "certified"
    else:
        status = "not_certified"
    summary = {"n_seeds": len(sample.points), "n_records": len(seeds), **counts,
               "vacuous": vacuous, "band_violations": sum(
                   1 for c in seeds if c.diagnostic and "band" in c.diagnostic)}
    sample_info = {"empty": sample.empty, "flag": sample.flag, "discarded": sample.discarded,
                   "attempts": sample.attempts, "rng_seed": params.rng_seed,
                   "caveat": ("non-trapping is checked only at the sampled null points; "
                              "sampling density is a configuration choice")}
    return NonTrappingCertificate(
        status=status, vacuous=vacuous, mourre=mourre, R1=R1, C0=report.C0,
        nondeg_C=report.nondeg_C, seeds=seeds, summary=summary, sample=sample_info,
        symbol_hash=symbol_hash(sym), params=params.echo(),
    )
