"""Task orchestration: one function per task, each returning a report section."""

import time

import numpy as np

from . import __version__
from .brackets import bracket_fd
from .certify import (CertifyParams, asymptotic_data, certify, resolve_jobs, symbol_hash)
from .config import TASKS
from .errors import HamescError, InsufficientData, SymbolRejected, UsageError
from .flow import IntegratorOpts, integrate, sample_characteristic, scaling_residual
from .radial import radial_estimate_experiment
from .report import SCHEMA_VERSION, PlotTable, RunReport
from .rng import make_rng, stream_key
from .symbols import PhasePoint, ValidationLattice, make_free, sphere_points, validate
from .transport import (TransportParams, check_eta_plus, seed_trajectory,
                        solve_backward_transport, support_check, transport_grid,
                        tune_transport, verify_transport_inequality)
from .weights import (EscapeWeightParams, b_values, bracket_p0_b_terms, eta_values,
                      radcl_pipeline)
from .weyl import (Grid, GridSymbol, commutator_vs_bracket, constant_symbol,
                   garding_experiment, weyl_quantize, x_symbol, xi_symbol)


class Context:
    """Shared state for one run."""

    def __init__(self, cfg, jobs=None):
        self.cfg = cfg
        self.seed = cfg.rng_seed
        self.jobs = resolve_jobs(jobs if jobs is not None else cfg.jobs)
        self.sym = cfg.symbol.build()
        self.plots = {}

    def rng(self, stream, *index):
        idx = [i if isinstance(i, int) else stream_key(str(i)) for i in index]
        return make_rng(self.seed, stream, *idx)

    def add_plot(self, kind, table):
        self.plots.setdefault(kind, []).append(table)


def _opts(ic, **kw):
    return IntegratorOpts(rtol=ic.rtol, atol=ic.atol, drift_tol=ic.drift_tol,
                          max_steps=ic.max_steps, **kw)


def _lattice(vc):
    return ValidationLattice(tuple(vc.radii), vc.n_x_dirs, vc.n_xi, vc.nondeg_cap)


def _region(box, dim, task):
    if len(box) != dim:
        raise UsageError(f"{task}.region needs {dim} intervals, got {len(box)}")
    return tuple(tuple(b) for b in box)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def task_validate(ctx):
    try:
        rep = validate(ctx.sym, _lattice(ctx.cfg.validate_))
    except SymbolRejected as exc:
        return {"passed": False, "error": str(exc), "witness": exc.witness}
    return dict(rep.to_dict(), passed=True)


def _flow_seeds(ctx, fc):
    sym = ctx.sym
    if fc.seeds:
        return [PhasePoint(s.x, s.xi) for s in fc.seeds], {"source": "config"}
    region = _region(fc.region, sym.dim, "flow")
    sample = sample_characteristic(sym, region, fc.count, ctx.rng("char_sample", "flow"),
                                   tol_char=fc.tol_char)
    if not sample.empty:
        return sample.points, {"source": "characteristic", "discarded": sample.discarded}
    rng = ctx.rng("misc", "flow-seeds")
    lo = np.array([b[0] for b in region])
    hi = np.array([b[1] for b in region])
    xs = rng.uniform(lo, hi, (fc.count, sym.dim))
    xis = sphere_points(sym.dim, fc.count, rng)
    return [PhasePoint(x, xi) for x, xi in zip(xs, xis)], {
        "source": "unit cosphere over region", "flag": sample.flag}


def task_flow(ctx):
    fc, sym = ctx.cfg.flow, ctx.sym
    seeds, origin = _flow_seeds(ctx, fc)
    opts = _opts(fc.integrator)
    records, worst_scaling, all_ok = [], 0.0, True
    for i, seed in enumerate(seeds):
        rec = {"seed": seed.as_dict()}
        try:
            traj = integrate(sym, seed, fc.t_end, opts)
        except HamescError as exc:
            rec.update(status="failed", error=str(exc))
            all_ok = False
            records.append(rec)
            continue
        rec.update(status="accepted" if traj.accepted else "drift", **traj.diagnostics())
        all_ok &= traj.accepted
        n = sym.dim
        ctx.add_plot("trajectory", PlotTable(
            f"{i:03d}", ("t",) + tuple(f"y{j + 1}" for j in range(n))
            + tuple(f"eta{j + 1}" for j in range(n)) + ("drift",), traj.rows(sym)))
        res = {repr(lam): scaling_residual(sym, seed, lam, fc.scaling_t, opts)
               for lam in fc.scaling_lambdas}
        rec["scaling_residual"] = res
        worst_scaling = max(worst_scaling, max(res.values(), default=0.0))
        records.append(rec)
    passed = all_ok and worst_scaling <= fc.scaling_tol
    return {"passed": passed, "seeds": origin, "n_trajectories": len(records),
            "worst_scaling_residual": worst_scaling, "scaling_tol": fc.scaling_tol,
            "trajectories": records}


def task_certify(ctx):
    cc, sym = ctx.cfg.certify, ctx.sym
    params = CertifyParams(
        region=_region(cc.region, sym.dim, "certify"), count=cc.count, rng_seed=ctx.seed,
        mourre_safety=cc.mourre_safety, r1_safety=cc.r1_safety, T_factor=cc.T_factor,
        T_max=cc.T_max, reentry_threshold=cc.reentry_threshold, tol_char=cc.tol_char,
        jobs=ctx.jobs, keep_rows=cc.keep_rows, opts=_opts(cc.integrator),
        lattice=_lattice(ctx.cfg.validate_))
    try:
        cert = certify(sym, params)
    except SymbolRejected as exc:
        return {"passed": False, "error": str(exc), "witness": exc.witness}
    n = sym.dim
    for i, c in enumerate(cert.seeds):
        if c.plot_rows is None or c.t_exit is None:
            continue
        rows = c.plot_rows
        s = np.abs(rows[:, 0])
        tail = rows[s >= c.t_exit]
        eta = np.linalg.norm(tail[:, 1 + n:1 + 2 * n], axis=-1)
        lo, hi = c.band_limits
        table = np.column_stack([tail[:, 0], eta, np.full_like(eta, lo), np.full_like(eta, hi)])
        ctx.add_plot("band", PlotTable(f"{i // 2:03d}_{c.direction}",
                                       ("t", "abs_eta", "lower", "upper"), table))
    out = cert.to_dict()
    out["passed"] = cert.status == "certified"
    return out


def _bracket_identities(sym, p, rng, count=1000):
    """FD oracle against ``(|v|/|x|)(1 - eta^2)`` and against the closed-form ``{p_0, b}``."""
    n = sym.dim
    x = rng.standard_normal((count, n)) * 4.0
    xi = rng.standard_normal((count, n))
    p0 = lambda a, b: sym.eval(a, b, "free")
    eta = eta_values(sym, x, xi)
    r = np.linalg.norm(x, axis=-1)
    v = np.linalg.norm(sym.v(xi), axis=-1)
    fd_eta = bracket_fd(p0, lambda a, b: eta_values(sym, a, b), x, xi)
    err_eta = float(np.max(np.abs(fd_eta - v / r * (1 - eta**2))))
    fd_b = bracket_fd(p0, lambda a, b: b_values(sym, p, a, b), x, xi)
    cf_b = bracket_p0_b_terms(sym, p, x, xi).total
    err_b = float(np.max(np.abs(fd_b - cf_b)))
    return {"n_points": count, "eta_max_abs_error": err_eta, "b_max_abs_error": err_b}


def task_escape_check(ctx):
    ec, sym = ctx.cfg.escape_check, ctx.sym
    p = EscapeWeightParams(ec.delta, ec.gamma, ec.k, ec.M, ec.nu)
    p.check_mu(sym.mu)
    rep = radcl_pipeline(sym, p, lambda key: ctx.rng("radcl_sample", key), count=ec.count,
                         tol=ec.tol, smallness_count=ec.smallness_count)
    m = rep.margins
    ctx.add_plot("margin-sweep", PlotTable("sweep", ("index", "margin"),
                                           np.column_stack([np.arange(m.size), m])))
    ident = _bracket_identities(sym, p, ctx.rng("radcl_sample", "identities"))
    out = rep.to_dict()
    out["bracket_identities"] = ident
    out["passed"] = bool(rep.passed and rep.smallness.get("holds", False))
    return out


def task_transport_check(ctx):
    tc, sym = ctx.cfg.transport_check, ctx.sym
    n = sym.dim
    if tc.seed is not None:
        seed = PhasePoint(tc.seed.x, tc.seed.xi)
    else:
        seed = PhasePoint(np.zeros(n), np.eye(n)[0])
    tp = TransportParams(delta1=tc.delta1, delta2=tc.delta2, T00=tc.T00, mu=sym.mu)
    opts = _opts(tc.integrator)
    t_end = 16.0 * max(tc.t_hi, tc.T00 + 1.0)
    traj = seed_trajectory(sym, seed, t_end, opts)
    try:
        eta_plus, v_plus, rates = asymptotic_data(sym, traj, 0.0)
    except InsufficientData:
        eta_plus, v_plus, rates = traj.eta[-1], sym.v(traj.eta[-1]), None
    eta_norm = check_eta_plus(eta_plus, tp)
    tune = tune_transport(sym, traj, tp, tc.t_hi, ctx.rng("transport_grid", "tune"),
                          count=tc.tune_count)
    tp = tune.params
    t, x, xi = transport_grid(traj, tp, tp.T00, tc.t_hi, tc.count,
                              ctx.rng("transport_grid", "grid"))
    rep = verify_transport_inequality(sym, traj, tp, t, x, xi, tol=tc.tol,
                                      a0_margin=tune.a0_margin)
    back = solve_backward_transport(sym, traj, tp, [seed])[0]
    psi_ok = back.value is not None and back.value >= 1.0 - tc.psi_tol
    supp = support_check(traj, tp, tc.t_hi, v_plus, eta_plus, 16384,
                         ctx.rng("transport_grid", "support"))
    return {"passed": bool(rep.passed and psi_ok), "seed": seed.as_dict(),
            "eta_plus": eta_plus, "eta_plus_norm": eta_norm, "v_plus": v_plus,
            "rates": rates, "tune": tune.to_dict(), "inequality": rep.to_dict(),
            "psi_at_seed": back.to_dict(), "psi_tol": tc.psi_tol, "psi_ok": bool(psi_ok),
            "support": supp}


def _estimate(ctx, qc, sym1, N):
    p = EscapeWeightParams(qc.delta, qc.gamma, 0.0, qc.M, qc.nu)
    return radial_estimate_experiment(Grid(qc.L, N), sym1, p, im_z=tuple(qc.im_z),
                                      trials=qc.trials, rng=ctx.rng("trial_vectors"))


def task_quantize_check(ctx):
    qc = ctx.cfg.quantize_check
    g = Grid(qc.L, qc.N)
    ident = weyl_quantize(g, constant_symbol(1.0)).matrix
    identity_err = float(np.max(np.abs(ident - np.eye(g.N))))
    sym1 = ctx.sym if ctx.sym.dim == 1 else make_free(1)
    p = EscapeWeightParams(qc.delta, qc.gamma, 0.0, qc.M, qc.nu)
    b = GridSymbol(lambda x, k: b_values(sym1, p, np.asarray(x)[..., None],
                                         np.asarray(k)[..., None]), "joint", "b")
    herm = weyl_quantize(g, b).raw_hermitian_deviation
    comm = commutator_vs_bracket(
        g, xi_symbol(lambda k: k**2, "xi^2", lambda k: 2 * k),
        x_symbol(lambda x: x, "x", np.ones_like),
        bracket=xi_symbol(lambda k: 2 * k, "2xi", lambda k: 2 + 0 * k))
    est = _estimate(ctx, qc, sym1, qc.N)
    ref = _estimate(ctx, qc, sym1, qc.N_refine)
    change = max(abs(ref.C_hat[z] - est.C_hat[z]) / est.C_hat[z] for z in est.C_hat)
    gard = garding_experiment(qc.garding_L, Ns=tuple(qc.garding_N))
    checks = {
        "identity": identity_err == 0.0,
        "hermitian": herm <= qc.hermitian_tol,
        "commutator": comm.interior_residual <= qc.commutator_tol,
        "C_hat_z_spread": est.z_spread <= qc.z_spread_max,
        "C_hat_refinement": change <= qc.refine_max,
        "estimate_boundary": est.boundary_ok and ref.boundary_ok,
        "garding_decreasing": gard.decreasing,
    }
    return {"passed": all(checks.values()), "checks": checks,
            "symbol_1d": sym1.describe(), "identity_max_error": identity_err,
            "hermitian_deviation": herm, "commutator": comm.to_dict(),
            "estimate": est.to_dict(), "estimate_refined": ref.to_dict(),
            "C_hat_refinement_change": change, "garding": gard.to_dict()}


TASK_FUNCS = {"validate": task_validate, "flow": task_flow, "certify": task_certify,
              "escape-check": task_escape_check, "transport-check": task_transport_check,
              "quantize-check": task_quantize_check}


def expand_tasks(task):
    if task == "all":
        return list(TASKS)
    if task not in TASKS:
        raise UsageError(f"unknown task {task!r}")
    return [task]


def run_tasks(cfg, task=None, jobs=None):
    """Run the requested task(s) in dependency order and assemble the report."""
    task = task or cfg.task or "all"
    tasks = expand_tasks(task)
    ctx = Context(cfg, jobs)
    results, timing, failed = {}, {}, []
    for name in tasks:
        t0 = time.perf_counter()
        try:
            section = TASK_FUNCS[name](ctx)
        except (HamescError, ValueError) as exc:
            section = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        timing[name] = time.perf_counter() - t0
        results[name] = section
        if not section.get("passed", False):
            failed.append(name)
    data = {
        "schema_version": SCHEMA_VERSION, "package_version": __version__,
        "rng_seed": cfg.rng_seed, "config": cfg.echo(), "config_hash": cfg.content_hash(),
        "symbol": {"name": ctx.sym.name, "hash": symbol_hash(ctx.sym),
                   "description": ctx.sym.describe()},
        "requested": task, "tasks": tasks, "results": results, "failed_tasks": failed,
        "status": "fail" if failed else "pass",
    }
    timing["total"] = sum(timing.values())
    return RunReport(data=data, plots=ctx.plots, timing={"seconds": timing, "jobs": ctx.jobs})
