"""Monte Carlo experiments, one runner per tested property.

Every runner takes a materialised :class:`~spdelab.config.RunConfig` and
returns an :class:`ExperimentReport` whose criteria carry the measured value,
its standard error where relevant, and the threshold it was compared with.
Exact inequalities are tested up to ``slack = C*(dt + h)`` plus a multiple of
the Monte Carlo standard error, because the scheme only approximates the
continuous dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .. import boundary_layer as bl
from .. import diffusion as dif
from ..config import ConfigError, RunConfig, parse_list
from ..grid import Grid, eigenvalues, eigenvectors, inner, norm
from ..kinetics import (KineticAccumulator, dyadic_profile, measure_bound_report,
                        moment_growth_slope, uniform_edges)
from ..noise import (NoisePath, NoiseSpec, check_sublinear_growth, hilbert_schmidt_norm,
                     sigma_components, stochastic_convolution)
from ..profiles import build_profile, scale_to
from ..stepper import SolverConfig, integrate, integrate_coupled
from .report import Criterion, Curve, ExperimentReport, mean_se, provenance


class ExperimentError(RuntimeError):
    pass


# offset separating independent path families (pilots, second data sets)
FAMILY_STRIDE = 1_000_000


@dataclass
class _Ctx:
    cfg: RunConfig
    grid: Grid
    spec: dif.DiffusionSpec
    noise: NoiseSpec
    solver: SolverConfig
    M: int
    slack: float

    @property
    def exp(self) -> dict:
        return self.cfg.experiment

    def profile(self, key: str):
        return build_profile(self.grid, self.exp[key])

    def path(self, paths: int, offset: int = 0, zero: bool = False) -> NoisePath:
        return NoisePath.for_spec(self.noise, self.solver.dt, self.solver.steps, paths,
                                  offset=offset, zero=zero)


def _ctx(cfg: RunConfig, diffusion: dif.DiffusionSpec | None = None) -> _Ctx:
    grid = cfg.grid()
    solver = cfg.solver()
    spec = cfg.diffusion() if diffusion is None else diffusion
    slack = cfg.experiment["slack_C"] * (solver.dt + grid.h)
    return _Ctx(cfg, grid, spec, cfg.noise(), solver, cfg.experiment["paths"], slack)


def _diverged_criterion(ok: np.ndarray, max_fraction: float) -> Criterion:
    bad = int(np.count_nonzero(~ok))
    frac = bad / len(ok)
    return Criterion("diverged fraction", frac <= max_fraction, frac, max_fraction,
                     detail=f"{bad} of {len(ok)} paths diverged and were excluded")


def _report(ctx: _Ctx, kind: str, criteria, curves, summary, scope="within stated hypotheses",
            snapshots=None, **extra) -> ExperimentReport:
    extra.setdefault("paths", ctx.M)
    summary = {"slack": ctx.slack, "diffusion": ctx.spec.describe(), **summary}
    return ExperimentReport(kind, criteria, curves, summary, provenance(ctx.cfg, extra), scope,
                            snapshots or {})


SAMPLE_PATHS = 4


def _samples(ctx: _Ctx, trajs, names=("u1", "u2")) -> dict:
    """First few paths of each trajectory, in the layout ``write_snapshots`` expects."""
    return {name: {"snapshots": t.snapshots[:SAMPLE_PATHS], "times": t.times, "dt": t.dt,
                   "record_every": t.record_every, "length": ctx.grid.length}
            for name, t in zip(names, trajs)}


def _no_paths(name: str) -> Criterion:
    return Criterion(name, False, math.nan, math.nan, detail="no completed paths")


# -- contraction / comparison ------------------------------------------------


def _coupled_gaps(ctx: _Ctx, threads: int, positive: bool = True):
    u1, u2 = ctx.profile("u1"), ctx.profile("u2")
    t1, t2 = integrate_coupled([u1, u2], ctx.solver, ctx.spec, ctx.noise, ctx.path(ctx.M),
                               threads=threads)
    ok = t1.completed & t2.completed
    diff = t1.snapshots - t2.snapshots
    part = np.maximum(diff, 0.0) if positive else np.abs(diff)
    gaps = ctx.grid.h * np.sum(part, axis=-1)
    return t1, t2, ok, gaps, diff


def run_contraction(cfg: RunConfig, threads: int = 1,
                    diffusion: dif.DiffusionSpec | None = None) -> ExperimentReport:
    """Coupled ``E||(u1-u2)^+||_{L1}`` against its initial value.

    ``diffusion`` overrides the configured coefficient (used by the negative
    control, which injects an unchecked anti-diffusion).
    """
    ctx = _ctx(cfg, diffusion)
    exp = ctx.exp
    t1, t2, ok, gaps, diff = _coupled_gaps(ctx, threads)
    times = t1.times
    k = exp["se_factor"]
    criteria = [_diverged_criterion(ok, exp["max_diverged_fraction"])]
    g = gaps[ok]
    curves = []
    if len(g) == 0:
        criteria += [_no_paths("mean gap bound"), _no_paths("mean gap non-increasing")]
        return _report(ctx, "contract", criteria, curves, {"completed_paths": 0})
    mean, se = mean_se(g)
    excess = mean - mean[0] - k * se
    i = int(np.nanargmax(excess))
    criteria.append(Criterion("mean gap bound", bool(np.all(excess <= ctx.slack)),
                              float(excess[i]), ctx.slack, float(se[i]),
                              detail=f"max over t of mean(t) - mean(0) - {k}*SE(t), at t={times[i]:.6g}"))
    steps = np.diff(g, axis=1)
    if steps.shape[1]:
        dm, dse = mean_se(steps)
        worst = dm - k * dse
        j = int(np.argmax(worst))
        criteria.append(Criterion("mean gap non-increasing", bool(np.all(worst <= ctx.slack)),
                                  float(worst[j]), ctx.slack, float(dse[j]),
                                  detail="max over consecutive records of mean increment - k*SE"))
    pathwise = exp["pathwise"].lower()
    if pathwise == "true" or (pathwise == "auto" and ctx.noise.additive):
        per_path = np.max(steps, axis=1) if steps.shape[1] else np.zeros(len(g))
        frac = float(np.mean(per_path <= ctx.slack))
        criteria.append(Criterion("pathwise non-increasing fraction", frac >= exp["pathwise_fraction"],
                                  frac, exp["pathwise_fraction"], relation=">=",
                                  detail="paths whose gap never grows by more than the slack"))
    hm = norm(diff[ok], "Hminus", grid=ctx.grid)
    hm_mean, hm_se = mean_se(hm)
    curves.append(Curve("gap_l1", {"t": times, "mean": mean, "stderr": se},
                        ylabel="E ||(u1-u2)+||_L1"))
    curves.append(Curve("gap_hminus", {"t": times, "mean": hm_mean, "stderr": hm_se},
                        ylabel="E ||u1-u2||_H^-1", logy=True))
    summary = {"initial_gap": float(mean[0]), "final_gap": float(mean[-1]),
               "completed_paths": int(len(g))}
    return _report(ctx, "contract", criteria, curves, summary, snapshots=_samples(ctx, (t1, t2)))


def run_comparison(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    ctx = _ctx(cfg)
    u1, u2 = ctx.profile("u1"), ctx.profile("u2")
    if np.any(u1.values > u2.values):
        raise ConfigError("comparison needs ordered initial data u1 <= u2 at every node")
    t1, _, ok, gaps, diff = _coupled_gaps(ctx, threads)
    criteria = [_diverged_criterion(ok, ctx.exp["max_diverged_fraction"])]
    g = gaps[ok]
    if len(g) == 0:
        criteria.append(_no_paths("mean positive part bounded by slack"))
        return _report(ctx, "compare", criteria, [], {"completed_paths": 0})
    mean, se = mean_se(g)
    i = int(np.argmax(mean))
    criteria.append(Criterion("mean positive part bounded by slack", bool(np.all(mean <= ctx.slack)),
                              float(mean[i]), ctx.slack, float(se[i]),
                              detail=f"max over recorded t, at t={t1.times[i]:.6g}"))
    pathwise_max = np.max(g, axis=1)
    summary = {"pathwise_fraction_within_slack": float(np.mean(pathwise_max <= ctx.slack)),
               "max_pathwise_gap": float(np.max(pathwise_max)),
               "min_signed_gap": float(np.min(np.nanmax(diff[ok], axis=-1))),
               "completed_paths": int(len(g))}
    curves = [Curve("gap_positive", {"t": t1.times, "mean": mean, "stderr": se},
                    ylabel="E ||(u1-u2)+||_L1")]
    return _report(ctx, "compare", criteria, curves, summary)


def run_negative_control(cfg: RunConfig, strength: float = 0.5, threads: int = 1) -> ExperimentReport:
    """Contraction suite with an injected anti-diffusion ``b = -strength``.

    The inner contraction report must FAIL; this report passes exactly when it does.
    """
    inner_report = run_contraction(cfg, threads, diffusion=dif.anti_diffusion(strength))
    failed = [c.name for c in inner_report.criteria if not c.passed]
    crit = Criterion("anti-diffusion breaks contraction", not inner_report.passed,
                     float(len(failed)), 1.0, relation=">=",
                     detail="failed inner criteria: " + ", ".join(failed))
    return ExperimentReport("negative-control", [crit], inner_report.curves,
                            {"inner": inner_report.to_dict()}, inner_report.provenance,
                            "negative control")


# -- energy ------------------------------------------------------------------


def _weighted_dissipation(spec, grid: Grid, p: float):
    h = grid.h

    def f(u):
        w = (1.0 + u * u) ** (0.5 * p - 1.0) * spec(u)
        w0 = float(spec(np.zeros(1))[0])
        wp = np.concatenate([np.full((u.shape[0], 1), w0), w, np.full((u.shape[0], 1), w0)], axis=1)
        up = np.concatenate([np.zeros((u.shape[0], 1)), u, np.zeros((u.shape[0], 1))], axis=1)
        g = np.diff(up, axis=1) / h
        return h * np.sum(0.5 * (wp[:, 1:] + wp[:, :-1]) * g * g, axis=1)
    return f


def run_energy(cfg: RunConfig, p_values=None, q: float | None = None,
               threads: int = 1) -> ExperimentReport:
    """Sweep ``||u0||_{L^p}`` and fit the growth of both sides of the energy bound."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    ps = parse_list(exp["p_values"]) if p_values is None else list(p_values)
    q = exp["q"] if q is None else q
    norms = np.array(parse_list(exp["norms"]))
    base = ctx.profile("profile")
    theta = ctx.spec.theta
    criteria, curves, summary = [], [], {"p_values": ps, "q": q, "norms": norms}
    h, dt = ctx.grid.h, ctx.solver.dt
    all_ok = []
    for p in ps:
        if not 1 <= p <= 2 * theta:
            raise ConfigError(f"p={p} outside [1, 2*theta] = [1, {2 * theta}]")
        U0 = np.stack([scale_to(base, "Lp", N, p).values for N in norms])
        U = np.repeat(U0, ctx.M, axis=0)
        ids = np.tile(np.arange(ctx.M), len(norms))
        monitors = {"lp": lambda u, p=p: h * np.sum(np.abs(u) ** p, axis=1),
                    "wdiss": _weighted_dissipation(ctx.spec, ctx.grid, p)}
        traj = integrate(U, ctx.solver, ctx.spec, ctx.noise, ctx.path(ctx.M), path_ids=ids,
                         monitors=monitors, threads=threads)
        ok = traj.completed
        all_ok.append(ok)
        sup = np.nanmax(traj.diagnostics["lp"], axis=1) ** q
        diss = (dt * np.sum(traj.diagnostics["wdiss"][:, 1:], axis=1)) ** q
        sup_m, sup_se, d_m, d_se = [], [], [], []
        for g in range(len(norms)):
            sl = slice(g * ctx.M, (g + 1) * ctx.M)
            sel = ok[sl]
            m, s = mean_se(sup[sl][sel][:, None])
            sup_m.append(m[0]), sup_se.append(s[0])
            m, s = mean_se(diss[sl][sel][:, None])
            d_m.append(m[0]), d_se.append(s[0])
        sup_m, d_m = np.array(sup_m), np.array(d_m)
        x = norms ** p
        if np.all(np.isfinite(sup_m)) and np.all(sup_m > 0):
            slope_sup = float(np.polyfit(np.log(x), np.log(sup_m), 1)[0])
        else:
            slope_sup = math.nan
        if np.all(np.isfinite(d_m)) and np.all(d_m > 0):
            slope_diss = float(np.polyfit(np.log(norms), np.log(d_m), 1)[0])
        else:
            slope_diss = math.nan
        criteria.append(Criterion(f"sup-moment slope p={p:g}", slope_sup <= exp["slope_max"],
                                  slope_sup, exp["slope_max"],
                                  detail="log-log slope of E sup_t ||u||_p^(pq) against ||u0||_p^p"))
        criteria.append(Criterion(f"dissipation slope p={p:g}", slope_diss <= p * q + 0.5,
                                  slope_diss, p * q + 0.5,
                                  detail="log-log slope of E(weighted dissipation)^q against ||u0||_p"))
        curves.append(Curve(f"energy_p{p:g}", {"norm": norms, "norm_pow_p": x, "sup_mean": sup_m,
                                              "sup_stderr": sup_se, "dissipation_mean": d_m,
                                              "dissipation_stderr": d_se},
                            xlabel="||u0||_Lp", ylabel="moment", logx=True, logy=True))
        summary[f"slopes_p{p:g}"] = {"sup": slope_sup, "dissipation": slope_diss}
    ok = np.concatenate(all_ok)
    crit = _diverged_criterion(ok, 0.0)
    criteria.insert(0, Criterion("no divergence", crit.passed, crit.estimate, 0.0, detail=crit.detail))
    return _report(ctx, "energy", criteria, curves, summary)


# -- ergodic coupling --------------------------------------------------------


def run_ergodic_coupling(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Pathwise decay of ``||u1 - u2||_{L1}`` under additive noise and bounded ``b``."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    in_scope = ctx.noise.additive and ctx.spec.bounded_above is not None and not ctx.spec.is_degenerate
    t1, t2, ok, gaps, _ = _coupled_gaps(ctx, threads, positive=False)
    criteria = [_diverged_criterion(ok, 0.0)]
    g = gaps[ok]
    if len(g) == 0:
        criteria.append(_no_paths("terminal gap fraction"))
        return _report(ctx, "ergodic", criteria, [], {"completed_paths": 0})
    mean, se = mean_se(g)
    incr = np.diff(g, axis=1)
    curves = [Curve("gap_l1", {"t": t1.times, "mean": mean, "stderr": se,
                               "median": np.median(g, axis=0)}, ylabel="||u1-u2||_L1", logy=True)]
    if in_scope:
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(g[:, 0] > 0, g[:, -1] / g[:, 0], 0.0)
        frac = float(np.mean(ratio <= exp["gap_ratio"]))
        criteria.append(Criterion("terminal gap fraction", frac >= exp["pass_fraction"], frac,
                                  exp["pass_fraction"], relation=">=",
                                  detail=f"paths with gap(T) <= {exp['gap_ratio']:g} * gap(0), T={t1.times[-1]:g}"))
        mono = float(np.mean(np.max(incr, axis=1) <= ctx.slack)) if incr.shape[1] else 1.0
        criteria.append(Criterion("pathwise monotone fraction", mono >= exp["monotone_fraction"], mono,
                                  exp["monotone_fraction"], relation=">=",
                                  detail="paths whose gap never grows by more than the slack"))
        scope = "within stated hypotheses"
    else:
        scope = "outside stated hypotheses"
    dm, dse = mean_se(incr) if incr.shape[1] else (np.zeros(1), np.zeros(1))
    worst = dm - 2 * dse
    j = int(np.argmax(worst))
    criteria.append(Criterion("mean gap non-increasing", bool(np.all(worst <= ctx.slack)),
                              float(worst[j]), ctx.slack, float(dse[j])))
    summary = {"initial_gap": float(mean[0]), "terminal_gap": float(mean[-1]),
               "completed_paths": int(len(g))}
    return _report(ctx, "ergodic", criteria, curves, summary, scope, snapshots=_samples(ctx, (t1, t2)))


# -- invariant measure -------------------------------------------------------


def growth_parameters(noise: NoiseSpec) -> tuple[float, float]:
    """``(lam, c)`` with ``||sigma(h)|| <= lam*||h|| + c`` for the shipped profiles."""
    weight = np.sum(noise.nodal_profiles ** 2, axis=0)
    prof = noise.profile
    if math.isfinite(prof.sup):
        return 0.0, float(np.sqrt(noise.grid.h * np.sum(weight)) * prof.sup)
    lam = float(np.sqrt(np.max(weight)) * prof.sup_derivative)
    return lam, float(np.sqrt(noise.grid.h * np.sum(weight)) * abs(prof.at_zero))


def growth_gate(ctx: _Ctx) -> dict:
    exp = ctx.exp
    lam, c = growth_parameters(ctx.noise)
    lam = lam if exp.get("growth_lambda") is None else exp["growth_lambda"]
    c = c if exp.get("growth_c") is None else exp["growth_c"]
    return check_sublinear_growth(ctx.noise, lam, exp.get("growth_alpha", 0.5), c + 1e-12,
                                  b0=ctx.spec.b0, seed=ctx.noise.seed)


def ou_stationary_variance(noise: NoiseSpec, b0: float, dt: float) -> dict:
    """Per-mode stationary variances of the truncated linear system (scheme and continuum)."""
    a = eigenvalues(noise.grid, noise.n_modes)
    lam2 = noise.lambdas ** 2
    r = 1.0 / (1.0 + dt * b0 * a)
    a_cont = (np.arange(1, noise.n_modes + 1) * np.pi / noise.grid.length) ** 2
    return {"scheme": lam2 * dt * r * r / (1.0 - r * r), "continuum": lam2 / (2.0 * b0 * a_cont)}


def run_invariant_measure(cfg: RunConfig, functionals=None, threads: int = 1) -> ExperimentReport:
    """Time averages from two initial data plus the H1 occupation tail."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    if ctx.spec.is_degenerate:
        raise ExperimentError("invariant-measure runs need a non-degenerate diffusion")
    gate = growth_gate(ctx)
    if not gate["passes"]:
        raise ExperimentError(
            "growth gate failed: need ||sigma(h)|| <= lam*||h|| + c(1+||h||^alpha) with "
            f"lam < sqrt(2*alpha_1*b0) = {gate['threshold']:.6g}; got lam={gate['lambda']:.6g}, "
            f"estimated {gate['lambda_estimate']:.6g}, bound holds: {gate['bound_holds']}")
    u1, u2 = ctx.profile("u1"), ctx.profile("u2")
    M = ctx.M
    U = np.concatenate([np.repeat(u1.values[None], M, 0), np.repeat(u2.values[None], M, 0)])
    ids = np.concatenate([np.arange(M), FAMILY_STRIDE + np.arange(M)])
    path = NoisePath(ctx.noise.seed, ctx.noise.n_modes, ctx.solver.dt, ctx.solver.steps, ids)
    modes = eigenvectors(ctx.grid, exp["modes"])
    monitors = {f"mode{i + 1}": (lambda u, e=modes[i]: ctx.grid.h * u @ e) for i in range(len(modes))}
    traj = integrate(U, ctx.solver, ctx.spec, ctx.noise, path, path_ids=ids, monitors=monitors,
                     threads=threads)
    ok = traj.completed
    steps = ctx.solver.steps
    k0 = min(steps, int(math.ceil(exp["burn_in"] * steps)))
    R_levels = np.array(parse_list(exp["R_levels"]))
    d = traj.diagnostics
    series = {"l1": d["l1"], "h2": d["h"] ** 2}
    for name in monitors:
        series[name] = d[name]
    for R in R_levels:
        series[f"h1_gt_{R:g}"] = (d["h1"] > R).astype(float)
    if functionals is not None:
        unknown = set(functionals) - set(series)
        if unknown:
            raise ExperimentError(f"unknown functionals {sorted(unknown)}; available {sorted(series)}")
        series = {k: series[k] for k in functionals}
    criteria = [_diverged_criterion(ok, 0.0)]
    summary = {"growth_gate": gate, "burn_in_steps": k0, "averages": {}}
    first, second = ok[:M], ok[M:]
    for name, s in series.items():
        avg = np.mean(s[:, k0:], axis=1)
        m1, se1 = mean_se(avg[:M][first][:, None])
        m2, se2 = mean_se(avg[M:][second][:, None])
        comb = float(np.hypot(se1[0], se2[0]))
        diff = float(abs(m1[0] - m2[0]))
        criteria.append(Criterion(f"agree {name}", diff <= 3 * comb, diff, 3 * comb, comb,
                                  detail="|mean1 - mean2| against 3 combined standard errors"))
        summary["averages"][name] = {"u1": float(m1[0]), "u1_se": float(se1[0]),
                                     "u2": float(m2[0]), "u2_se": float(se2[0])}
    h1 = d["h1"][ok][:, k0:]
    samples = h1.size
    floor = 0.5 / max(samples, 1)
    frac = np.array([np.mean(h1 > R) for R in R_levels])
    fitted = np.maximum(frac, floor)
    slope = float(np.polyfit(np.log(R_levels), np.log(fitted), 1)[0]) if len(R_levels) > 1 else math.nan
    criteria.append(Criterion("H1 occupation slope", slope <= exp["slope_max"], slope,
                              exp["slope_max"],
                              detail=f"log-log fit over R; zero fractions floored at {floor:.3g}"))
    second_moment = float(np.mean(h1 ** 2))
    curves = [Curve("occupation", {"R": R_levels, "fraction": frac,
                                   "chebyshev_bound": np.minimum(1.0, second_moment / R_levels ** 2)},
                    xlabel="R", ylabel="fraction of time with ||u||_H1 > R", logx=True, logy=True)]
    h2 = series.get("h2", d["h"] ** 2)
    counts = np.arange(1, steps + 2)
    run1 = np.cumsum(np.nanmean(h2[:M][first], axis=0)) / counts
    run2 = np.cumsum(np.nanmean(h2[M:][second], axis=0)) / counts
    curves.append(Curve("running_average_h2", {"t": traj.step_times, "u1": run1, "u2": run2},
                        ylabel="running time average of E||u||_H^2"))
    summary["occupation_fractions"] = dict(zip([f"{R:g}" for R in R_levels], frac.tolist()))
    if ctx.spec.name == "constant" and ctx.noise.additive:
        var = ou_stationary_variance(ctx.noise, ctx.spec.b0, ctx.solver.dt)
        summary["ou_stationary_h2"] = {"scheme": float(var["scheme"].sum()),
                                       "continuum": float(var["continuum"].sum())}
    return _report(ctx, "invariant", criteria, curves, summary, second_family_offset=FAMILY_STRIDE)


# -- linear oracle -----------------------------------------------------------


def run_linear_oracle(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Constant ``b0`` with additive noise against the exact discrete OU statistics.

    Each mode obeys ``c^{n+1} = r (c^n + lambda dbeta)`` with
    ``r = 1/(1 + dt*b0*alpha_i)``, so mean and variance are known in closed form.
    """
    ctx = _ctx(cfg)
    exp = ctx.exp
    if ctx.spec.name != "constant" or not ctx.noise.additive:
        raise ExperimentError("linear oracle needs constant diffusion and additive noise")
    M = exp["oracle_paths"]
    b0, dt, n = ctx.spec.b0, ctx.solver.dt, ctx.solver.steps
    u0 = ctx.profile("u0")
    traj = integrate(np.repeat(u0.values[None], M, 0), ctx.solver, ctx.spec, ctx.noise,
                     ctx.path(M), threads=threads)
    K = min(exp["modes"], ctx.noise.n_modes)
    E = eigenvectors(ctx.grid, K)
    a = eigenvalues(ctx.grid, K)
    lam = ctx.noise.lambdas[:K]
    r = 1.0 / (1.0 + dt * b0 * a)
    c0 = ctx.grid.h * E @ u0.values
    mean_exact = r ** n * c0
    var_exact = lam ** 2 * dt * r * r * (1 - r ** (2 * n)) / (1 - r * r)
    cT = ctx.grid.h * traj.final @ E.T
    criteria = [_diverged_criterion(traj.completed, 0.0)]
    mean_hat = cT.mean(axis=0)
    var_hat = cT.var(axis=0, ddof=1)
    for i in range(K):
        se_m = math.sqrt(var_exact[i] / M)
        criteria.append(Criterion(f"mode {i + 1} mean", abs(mean_hat[i] - mean_exact[i]) <= 3 * se_m,
                                  float(abs(mean_hat[i] - mean_exact[i])), 3 * se_m, se_m))
        se_v = var_exact[i] * math.sqrt(2.0 / (M - 1))
        criteria.append(Criterion(f"mode {i + 1} variance", abs(var_hat[i] - var_exact[i]) <= 3 * se_v,
                                  float(abs(var_hat[i] - var_exact[i])), 3 * se_v, se_v))
    stationary = ou_stationary_variance(ctx.noise, b0, dt)
    target = float(stationary["scheme"].sum())
    k0 = min(n, int(math.ceil(exp["burn_in"] * n)))
    avg = np.mean(traj.diagnostics["h"][:, k0:] ** 2, axis=1)
    m, se = mean_se(avg[:, None])
    criteria.append(Criterion("stationary E||u||_H^2", abs(m[0] - target) <= 3 * se[0],
                              float(abs(m[0] - target)), 3 * float(se[0]), float(se[0]),
                              detail=f"time average after t={k0 * dt:g} vs sum of scheme stationary variances"))
    curves = [Curve("ou_modes", {"mode": np.arange(1, K + 1), "mean_exact": mean_exact,
                                 "mean_hat": mean_hat, "var_exact": var_exact, "var_hat": var_hat},
                    xlabel="mode", ylabel="terminal coefficient statistics")]
    summary = {"stationary_h2_scheme": target,
               "stationary_h2_continuum": float(stationary["continuum"].sum()),
               "time_average_h2": float(m[0]), "time_average_h2_se": float(se[0])}
    return _report(ctx, "linear", criteria, curves, summary, paths=M)


# -- irreducibility ----------------------------------------------------------


def run_irreducibility(cfg: RunConfig, M_ball: float | None = None, eps_target: float | None = None,
                       threads: int = 1) -> ExperimentReport:
    """Joint runs of ``u^z`` and the stochastic convolution on the same noise."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    if not ctx.noise.additive:
        raise ExperimentError("irreducibility runs need additive noise")
    eps = exp["eps_target"] if eps_target is None else eps_target
    z_norms = np.array(parse_list(exp["z_norms"]))
    if M_ball is not None:
        z_norms = z_norms[z_norms <= M_ball]
    base = ctx.profile("profile")
    M, K = ctx.M, len(z_norms)
    U = np.concatenate([np.repeat(scale_to(base, "H", z).values[None], M, 0) for z in z_norms])
    ids = np.arange(K * M)
    path = ctx.path(K * M)
    traj = integrate(U, ctx.solver, ctx.spec, ctx.noise, path, path_ids=ids, threads=threads)
    wa = stochastic_convolution(ctx.noise, ctx.solver.dt, ctx.solver.steps, path,
                                record_every=ctx.solver.record_every, threads=threads)
    ok = traj.completed & wa.completed
    sup_wa = wa.diagnostics["h1_running_max"][:, -1]
    u_norm = traj.diagnostics["h"][:, -1]
    hit = (u_norm < eps).astype(float)
    criteria = [_diverged_criterion(ok, 0.0)]
    frac = float(np.mean(hit[ok]))
    criteria.append(Criterion("reach fraction", frac > 0, frac, 0.0, relation=">",
                              detail=f"paths with ||u^z(T)||_H < {eps:g}"))
    x, y = sup_wa[ok], hit[ok]
    if len(x) > 1 and np.ptp(x) > 0 and np.ptp(y) > 0:
        rho, pval = (float(v) for v in scipy.stats.spearmanr(x, y))
    else:
        rho = pval = math.nan  # undefined for a constant sample
    criteria.append(Criterion("rank correlation", rho < 0, rho, 0.0, relation="<",
                              detail="Spearman correlation of sup ||W_A||_H1 with the hit indicator"))
    criteria.append(Criterion("rank correlation p-value", pval < 0.01, pval, 0.01, relation="<"))
    rate = ctx.spec.b0 * float(eigenvalues(ctx.grid, 1)[0])
    T = ctx.solver.T
    z_col = np.repeat(z_norms, M)
    surrogate = np.exp(-2 * rate * T) * z_col ** 2 + sup_wa ** 2
    curves = [Curve("scatter", {"z_norm": z_col[ok], "sup_wa_h1": sup_wa[ok],
                                "u_norm_sq": u_norm[ok] ** 2, "surrogate": surrogate[ok]},
                    xlabel="surrogate", ylabel="||u^z(T)||_H^2")]
    qs = np.quantile(sup_wa[ok], np.linspace(0.1, 1.0, 10))
    probs, ses = [], []
    for q in qs:
        sel = hit[ok][sup_wa[ok] <= q]
        p = float(sel.mean()) if len(sel) else math.nan
        probs.append(p)
        ses.append(math.sqrt(p * (1 - p) / len(sel)) if len(sel) > 1 else math.nan)
    curves.append(Curve("conditional", {"delta": qs, "probability": probs, "stderr": ses},
                        xlabel="delta", ylabel="P(||u^z|| < eps | sup ||W_A|| <= delta)"))
    per_z = {f"{z:g}": float(np.mean(hit[k * M:(k + 1) * M][ok[k * M:(k + 1) * M]]))
             for k, z in enumerate(z_norms)}
    summary = {"eps_target": eps, "z_norms": z_norms, "reach_fraction_by_z": per_z,
               "spearman_rho": rho, "spearman_p": pval, "decay_rate": rate}
    return _report(ctx, "irreducible", criteria, curves, summary)


# -- ball entry --------------------------------------------------------------


def entry_times(energy: np.ndarray, K0: float, window_steps: int, L: int) -> np.ndarray:
    """Step indices of ``tau_1..tau_L`` per path (``-1`` when not reached).

    ``tau_l`` is the first step ``>= tau_{l-1} + window`` with energy ``<= K0``
    and ``tau_0 = 0``.
    """
    B, S = energy.shape
    out = np.full((B, L), -1, dtype=np.int64)
    below = energy <= K0
    for b in range(B):
        start = 0
        for l in range(L):
            lo = start + window_steps
            if lo >= S:
                break
            idx = np.flatnonzero(below[b, lo:])
            if len(idx) == 0:
                break
            out[b, l] = lo + idx[0]
            start = out[b, l]
    return out


def _pair_energy(ctx: _Ctx, u1, u2, paths: int, offset: int, threads: int, zero=False):
    t1, t2 = integrate_coupled([u1, u2], ctx.solver, ctx.spec, ctx.noise,
                               ctx.path(paths, offset, zero), threads=threads)
    ok = t1.completed & t2.completed
    return t1.diagnostics["h"] ** 2 + t2.diagnostics["h"] ** 2, ok


def estimate_c0(energy: np.ndarray, dt: float, window_steps: int) -> float:
    """Largest ratio ``E int_t^{t+T} e / (E e(t) + T)`` over consecutive windows."""
    S = energy.shape[1]
    T = window_steps * dt
    ratios = []
    for start in range(0, S - window_steps, window_steps):
        integral = dt * np.sum(energy[:, start + 1:start + window_steps + 1], axis=1)
        ratios.append(np.mean(integral) / (np.mean(energy[:, start]) + T))
    return float(max(ratios)) if ratios else math.nan


def run_ball_entry(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Measure ``K0 = 4*c0`` on pilot runs, then the stopping times ``tau_1..tau_L``."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    dt = ctx.solver.dt
    w = max(1, int(round(exp["window"] / dt)))
    L = exp["L"]
    u1, u2 = ctx.profile("u1"), ctx.profile("u2")
    e0 = float(norm(u1, "H") ** 2 + norm(u2, "H") ** 2)
    if e0 == 0:
        raise ConfigError("ball entry needs non-zero initial data")
    pilot = exp["pilot_paths"]
    if exp["K0"] is None:
        c0s = []
        for k, scale in enumerate((1.0, math.sqrt(exp["initial_scale"]))):
            energy, ok = _pair_energy(ctx, u1 * scale, u2 * scale, pilot,
                                      (k + 1) * FAMILY_STRIDE, threads)
            c0s.append(estimate_c0(energy[ok], dt, w))
        c0 = max(c0s)
        K0 = 4.0 * c0
    else:
        c0, K0 = math.nan, float(exp["K0"])
    s = math.sqrt(exp["initial_scale"] * K0 / e0)
    energy, ok = _pair_energy(ctx, u1 * s, u2 * s, ctx.M, 0, threads)
    taus = entry_times(np.where(ok[:, None], energy, np.inf), K0, w, L)
    reached = taus[:, -1] >= 0
    frac = float(np.mean(reached & ok))
    criteria = [_diverged_criterion(ok, 0.0),
                Criterion(f"tau_{L} before horizon", frac >= 1.0, frac, 1.0, relation=">=",
                          detail=f"{int(np.count_nonzero(~reached))} paths still outside the ball "
                                 f"at T={ctx.solver.T:g} (K0={K0:.6g})")]
    tau_t = np.where(taus >= 0, taus * dt, np.nan)
    curves = [Curve("entry_times", {"level": np.arange(1, L + 1),
                                    "mean": np.nanmean(tau_t, axis=0) if np.any(taus >= 0) else np.full(L, np.nan),
                                    "max": np.nanmax(tau_t, axis=0) if np.any(taus >= 0) else np.full(L, np.nan)},
                    xlabel="l", ylabel="tau_l")]
    sizes = np.array(parse_list(exp["sizes"]))
    first_entry, first_se = [], []
    for k, size in enumerate(sizes):
        sk = math.sqrt(size * K0 / e0)
        en, okk = _pair_energy(ctx, u1 * sk, u2 * sk, pilot, (10 + k) * FAMILY_STRIDE, threads)
        t1 = entry_times(np.where(okk[:, None], en, np.inf), K0, 0, 1)[:, 0]
        t1 = np.where(t1 >= 0, t1 * dt, np.nan)
        m, se = mean_se(t1[np.isfinite(t1)][:, None])
        first_entry.append(m[0]), first_se.append(se[0])
    first_entry = np.array(first_entry)
    good = np.isfinite(first_entry) & (sizes > 1)
    slope = float(np.polyfit(np.log(sizes[good]), first_entry[good], 1)[0]) if good.sum() > 1 else math.nan
    curves.append(Curve("entry_vs_size", {"size": sizes, "first_entry_mean": first_entry,
                                          "stderr": first_se},
                        xlabel="initial energy / K0", ylabel="first entry time", logx=True))
    rate = 2 * ctx.spec.b0 * float(eigenvalues(ctx.grid, 1)[0])
    summary = {"c0_estimate": c0, "K0": K0, "window": w * dt, "initial_energy": s * s * e0,
               "log_fit_slope": slope, "deterministic_slope_bound": 1.0 / rate,
               "tau_quantiles": {f"tau_{l + 1}": np.nanquantile(tau_t[:, l], [0.5, 0.9, 1.0]).tolist()
                                 if np.any(np.isfinite(tau_t[:, l])) else None for l in range(L)}}
    return _report(ctx, "ball-entry", criteria, curves, summary)


def deterministic_crossing(a: float, K0: float, b0: float, alpha1: float, dt: float) -> int:
    """First step at which ``a * r^(2n) <= K0`` with ``r = 1/(1 + dt*b0*alpha1)``."""
    if a <= K0:
        return 0
    r = 1.0 / (1.0 + dt * b0 * alpha1)
    return int(math.ceil(math.log(a / K0) / (-2.0 * math.log(r)) - 1e-12))


# -- kinetic -----------------------------------------------------------------


def run_kinetic(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Dyadic decay of the dissipation measure and band-mass moment growth.

    Accumulation is online (every step) and therefore single-threaded.
    """
    ctx = _ctx(cfg)
    exp = ctx.exp
    norms = np.array(parse_list(exp["norms"]))
    base = ctx.profile("u0")
    M, G = ctx.M, len(norms)
    U = np.concatenate([np.repeat(scale_to(base, "L1", N).values[None], M, 0) for N in norms])
    ids = np.tile(np.arange(M), G)
    reach = 4.0 * float(np.max(np.abs(U))) + 1.0
    edges = uniform_edges(-reach, reach, exp["bins"])
    tau = ctx.solver.tau if ctx.solver.regularization == "viscous" else None
    acc = KineticAccumulator(edges, ctx.spec, ctx.grid.h, ctx.solver.dt, len(U), tau)
    traj = integrate(U, ctx.solver, ctx.spec, ctx.noise, ctx.path(M), path_ids=ids, hooks=[acc],
                     monitors={"sup": lambda u: np.max(np.abs(u), axis=1)})
    ok = traj.completed
    histo = acc.histogram()
    criteria = [_diverged_criterion(ok, 0.0)]
    curves, summary = [], {"norms": norms, "groups": {}}
    dy_cols = {}
    moments = []
    for g, N in enumerate(norms):
        sl = slice(g * M, (g + 1) * M)
        sel = np.flatnonzero(ok[sl]) + g * M
        sub = _subset(histo, sel)
        levels, tally, tally_se = dyadic_profile(sub)
        # size of the state: sup norm at every step, pooled over paths and time
        q99 = float(np.nanquantile(traj.diagnostics["sup"][sel], 0.99))
        q99_nodes = float(np.nanquantile(np.abs(traj.snapshots[sel]), 0.99))
        total = float(np.mean(sub.total))
        l_start = int(math.ceil(math.log2(q99))) if q99 > 0 else int(levels[0])
        idx = levels >= l_start
        tail = tally[idx]
        tol = 1e-12 * total
        monotone = bool(np.all(np.diff(tail) <= tol))
        window = tail[:4]
        small = float(np.min(window)) if len(window) else 0.0
        label = f"{N:g}"
        criteria.append(Criterion(f"dyadic monotone tail L1={label}", monotone,
                                  float(np.max(np.diff(tail), initial=0.0)), tol,
                                  detail=f"bands l >= {l_start} (99th percentile of sup|u| = {q99:.4g})"))
        criteria.append(Criterion(f"dyadic tail below 1e-6 total L1={label}", small <= 1e-6 * total,
                                  small, 1e-6 * total,
                                  detail=f"smallest tally among bands {l_start}..{l_start + 3}"))
        dy_cols[f"L1_{label}_mean"] = tally
        dy_cols[f"L1_{label}_stderr"] = tally_se
        rep = measure_bound_report(sub, exp["k"], exp["p"])
        moments.append(rep)
        summary["groups"][label] = {"q99_sup_u": q99, "q99_nodes": q99_nodes, "l_start": l_start,
                                    "tallies": tally, "total_mass": total,
                                    "n2_share": float(np.mean(sub.n2.sum(axis=1)) / total) if total else 0.0}
    curves.append(Curve("dyadic", {"level": histo.levels, **dy_cols}, xlabel="l",
                        ylabel="2^-l m(A_2^l)", logy=True))
    mom = np.array([r["moment"] for r in moments])
    slope = moment_growth_slope(norms, mom) if np.all(mom > 0) else math.nan
    criteria.append(Criterion("band-mass moment slope", slope <= exp["p"] + 0.5, slope, exp["p"] + 0.5,
                              detail=f"E m([0,T] x O x [-{exp['k']:g},{exp['k']:g}])^p vs ||u0||_L1"))
    curves.append(Curve("band_moments", {"norm": norms, "moment": mom,
                                         "stderr": [r["stderr"] for r in moments]},
                        xlabel="||u0||_L1", ylabel="moment", logx=True, logy=True))
    centres = 0.5 * (edges[1:] + edges[:-1])
    first = _subset(histo, np.flatnonzero(ok[:M]))
    curves.append(Curve("histogram", {"xi": centres, "n1": first.n1.mean(axis=0),
                                      "n2": first.n2.mean(axis=0)}, xlabel="xi", ylabel="mass"))
    summary["moment_slope"] = slope
    summary["threads_used"] = 1
    return _report(ctx, "kinetic", criteria, curves, summary)


def _subset(histo, rows):
    from ..kinetics import KineticHistogram
    return KineticHistogram(histo.edges, histo.n1[rows], histo.n2[rows], histo.underflow[rows],
                            histo.overflow[rows], histo.bands[rows], histo.band_below[rows],
                            histo.band_above[rows], histo.l_min, histo.l_max)


# -- validation --------------------------------------------------------------


def run_validate(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Sample-based checks of the coefficient hypotheses (no time stepping)."""
    ctx = _ctx(cfg)
    exp = ctx.exp
    spec, noise = ctx.spec, ctx.noise
    rep = dif.validate_hypotheses(spec, exp["sample_range"], exp["sample_count"])
    criteria = []
    key = "3B" if spec.is_degenerate else "3A"
    criteria.append(Criterion(f"growth bounds ({'degenerate' if spec.is_degenerate else 'non-degenerate'})",
                              bool(rep.passes[key]), float(len(rep.growth_violations)), 0.0,
                              detail=f"sampled on [-{exp['sample_range']:g}, {exp['sample_range']:g}]"))
    criteria.append(Criterion("sqrt(b) Holder continuity", bool(rep.passes["2"]),
                              rep.holder_constant_refined, 1.02 * rep.holder_constant,
                              detail=f"gamma={rep.holder_gamma:g}, constant stable under refinement"))
    D = noise.D
    criteria.append(Criterion("noise constant D finite", math.isfinite(D), D, math.inf, relation="<"))
    xs = np.linspace(0, ctx.grid.length, 257)
    xis = np.linspace(-exp["sample_range"], exp["sample_range"], 201)
    X, XI = np.meshgrid(xs, xis)
    comps = sigma_components(noise, X.ravel(), XI.ravel())
    boundary = sigma_components(noise, np.array([0.0, ctx.grid.length]), np.array([1.0, 1.0]))
    bmax = float(np.max(np.abs(boundary)))
    criteria.append(Criterion("noise vanishes on the boundary", bmax <= 1e-12, bmax, 1e-12))
    sig2 = np.sum(comps ** 2, axis=0)
    excess = float(np.max(sig2 - D * (1 + XI.ravel() ** 2))) if math.isfinite(D) else math.inf
    criteria.append(Criterion("Sigma^2 <= D(1 + xi^2)", excess <= 1e-12, excess, 0.0))
    summary = {"hypotheses": rep.to_dict(), "noise": noise.diagnostics()}
    if not spec.is_degenerate:
        gate = growth_gate(ctx)
        summary["growth_gate"] = gate
        criteria.append(Criterion("noise growth gate", bool(gate["passes"]), gate["lambda"],
                                  gate["threshold"], relation="<",
                                  detail=f"estimated rate {gate['lambda_estimate']:.4g}"))
    else:
        lo, hi = parse_list(exp["symbol_support"])
        J = exp["symbol_J"]
        deltas = [1e-3, 1e-2, 1e-1]
        est = [dif.symbol_nondegeneracy(spec, (lo, hi), J, d, n_xi=20001, n_u=51) for d in deltas]
        summary["symbol"] = {"deltas": deltas, "estimates": [e["estimate"] for e in est],
                             "reference_rates": [e["reference_rate"] for e in est],
                             "alpha": est[0]["alpha"],
                             "fitted_exponent": float(np.polyfit(np.log(deltas),
                                                                 np.log([max(e["estimate"], 1e-300) for e in est]), 1)[0])}
    return _report(ctx, "validate", criteria, [], summary, paths=0)


# -- boundary layer ----------------------------------------------------------


def run_boundary_layer(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    """Discrete boundary-layer cutoffs against the closed form, plus the flux limit."""
    grid = cfg.grid()
    exp = cfg.experiment
    criteria, rows = [], []
    for d in parse_list(exp["deltas"]):
        layer = bl.solve_zeta(grid, d)
        err = float(np.max(np.abs(layer.zeta.values - bl.closed_form(grid.x, d, grid.length))))
        props = bl.layer_properties(layer)
        criteria.append(Criterion(f"max error delta={d:g}", err <= 5 * grid.h ** 2, err, 5 * grid.h ** 2))
        criteria.append(Criterion(f"0 <= zeta <= 1 delta={d:g}", props["bounded"], props["min"], 0.0,
                                  relation=">=", detail=f"max {props['max']:.17g}"))
        criteria.append(Criterion(f"Lap zeta <= 0 delta={d:g}", props["superharmonic"],
                                  props["max_laplacian"], 0.0))
        rows.append((d, err, err / grid.h ** 2))
    flux = bl.flux_limit_check(grid, lambda x: x / grid.length, parse_list(exp["flux_deltas"]))
    criteria.append(Criterion("flux limit", flux["relative_error"] <= 0.02, flux["relative_error"], 0.02,
                              detail=f"extrapolated {flux['extrapolated']:.6g} vs {flux['target']:g}"))
    arr = np.array(rows)
    curves = [Curve("boundary_layer_error", {"delta": arr[:, 0], "max_error": arr[:, 1],
                                             "error_over_h2": arr[:, 2]},
                    xlabel="delta", ylabel="max nodal error", logx=True, logy=True),
              Curve("flux", {"delta": flux["deltas"], "value": flux["values"]},
                    xlabel="delta", ylabel="int phi zeta'")]
    summary = {"flux": flux, "h": grid.h}
    return ExperimentReport("boundary-layer", criteria, curves, summary,
                            provenance(cfg, {"paths": 0}))


RUNNERS = {
    "contract": run_contraction,
    "compare": run_comparison,
    "energy": run_energy,
    "ergodic": run_ergodic_coupling,
    "invariant": run_invariant_measure,
    "irreducible": run_irreducibility,
    "ball-entry": run_ball_entry,
    "kinetic": run_kinetic,
    "linear": run_linear_oracle,
    "validate": run_validate,
    "boundary-layer": run_boundary_layer,
}


def run(cfg: RunConfig, threads: int = 1) -> ExperimentReport:
    return RUNNERS[cfg.kind](cfg, threads=threads)
