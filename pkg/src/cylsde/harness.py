"""Experiment orchestration: one runner per experiment kind, reports and dt ladders.

Every Monte Carlo quantity is computed through :func:`cylsde.stats.map_paths`,
so a report depends only on the experiment record (seed included), never on
the worker count.
"""
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import KIND_NAMES
from .integrate import (
    MarkovSampler, ProcessSampler, duality_check, integral_path, isometry_check, isometry_samples,
    operator_pushthrough_check,
)
from .noise import TimeGrid, sample_cylindrical
from .spaces import SpaceScale
from .spde import (
    DiffusionFamily, DriftOp, energy_ladder, energy_residual, gronwall_envelope, ito_formula_residual,
    norm_squared_functional, solve_em, solve_strat, strat_gap_ladder, truncation_convergence, uniqueness_check,
)
from .stats import exact_mean, loglog_slope, map_paths, require_paths, summarize
from .stratonovich import collapse_constant_noise, collapse_moments_check, collapse_qv
from .variation import Partition, bdg_ratio, cross_variation, qv_identity_check, quadratic_variation, \
    random_constant_operators

KINDS = KIND_NAMES
PATHWISE = {"duality", "pushthrough", "ito_formula"}


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class Experiment:
    kind: str
    params: dict = field(default_factory=dict)
    n_paths: int = 10_000
    seed: int = 0
    dt: float = 1e-3
    t_final: float = 1.0
    k_modes: int = None
    tolerance: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExperimentError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind not in PATHWISE:
            require_paths(self.n_paths)
        elif self.n_paths < 1:
            raise ExperimentError("n_paths must be positive")
        if not self.tolerance > 0:
            raise ExperimentError("tolerance must be strictly positive")
        if self.workers < 1:
            raise ExperimentError("workers must be >= 1")
        TimeGrid.from_horizon(self.t_final, self.dt)

    @property
    def grid(self):
        return TimeGrid.from_horizon(self.t_final, self.dt)

    def param(self, key, default):
        return self.params.get(key, default)


@dataclass(frozen=True)
class Metric:
    """One reported number; ``passed`` is None for informational metrics."""

    name: str
    value: float
    reference: float = float("nan")
    tolerance: float = float("nan")
    passed: bool = None
    summary: object = None


@dataclass
class Report:
    experiment: Experiment
    metrics: list
    runtime: float = 0.0
    error: str = None

    @property
    def passed(self):
        return self.error is None and all(m.passed is not False for m in self.metrics)

    def metric(self, name):
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def summary_line(self):
        status = "PASS" if self.passed else "FAIL"
        failing = [m.name for m in self.metrics if m.passed is False]
        detail = f" failing={','.join(failing)}" if failing else ""
        if self.error:
            detail += f" error={self.error}"
        return f"{status} {self.experiment.kind} metrics={len(self.metrics)}{detail} runtime={self.runtime:.2f}s"

    def csv_text(self):
        """Metric table with 17 significant digits; runtime is left out so bytes are reproducible."""
        buf = io.StringIO()
        buf.write("metric,value,reference,std_err,ci_low,ci_high,tolerance,passed\n")
        for m in self.metrics:
            s = m.summary
            cells = [m.value, m.reference, s.std_err if s else float("nan"), s.ci95[0] if s else float("nan"),
                     s.ci95[1] if s else float("nan"), m.tolerance]
            flag = "" if m.passed is None else str(bool(m.passed)).lower()
            buf.write(m.name + "," + ",".join(f"{float(c):.17g}" for c in cells) + f",{flag}\n")
        if self.error:
            buf.write(f"# error={self.error}\n")
        e = self.experiment
        buf.write(f"# seed={e.seed}, dt={e.dt!r}, n={e.n_paths}\n")
        return buf.getvalue()


def _rel(value, ref):
    return abs(value - ref) / abs(ref) if ref else abs(value)


def _within(name, value, ref, tol, summary=None):
    return Metric(name, value, ref, tol, _rel(value, ref) <= tol, summary)


def _vec(x, default):
    if x is None:
        return np.asarray(default, dtype=np.float64)
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


# ------------------------------------------------------------------ runners


def _integrand(exp):
    kind = exp.param("integrand", "brownian")
    t = exp.t_final
    if kind == "constant":
        a = _vec(exp.param("a", None), [1.0])
        return ProcessSampler.constant(a), float(a @ a) * t
    if kind == "brownian":
        return ProcessSampler.brownian(), t * t / 2
    if kind == "cylindrical":
        lam = _vec(exp.param("lambdas", None), [0.6, 0.8])
        return ProcessSampler.constant(np.diag(lam)), t * float(lam @ lam)
    raise ExperimentError(f"unknown integrand {kind!r}")


def run_isometry(exp):
    sampler, ref = _integrand(exp)
    r = isometry_check(sampler, exp.t_final, exp.n_paths, grid=exp.grid, seed=exp.seed, workers=exp.workers)
    return [
        Metric("rel_err", r.rel_err, 0.0, exp.tolerance, r.rel_err <= exp.tolerance, r.diff_summary),
        _within("lhs", r.lhs, ref, exp.tolerance, r.lhs_summary),
        _within("rhs", r.rhs, ref, exp.tolerance, r.rhs_summary),
    ]


def _random_markov(rng, dim):
    c1, c2 = rng.normal(size=dim), rng.normal(size=dim)
    return MarkovSampler(lambda t, w: np.outer(w[:, 0], c1) + np.outer(np.cos(t + w[:, 0]), c2), dim, name="random")


def run_duality(exp):
    rng = np.random.Generator(np.random.PCG64(exp.seed))
    dim = int(exp.param("dim", 3))
    phi = _vec(exp.param("phi", None), rng.normal(size=dim))
    scale = SpaceScale.from_weights(H=rng.uniform(0.5, 2.0, size=dim))
    sampler = _random_markov(rng, dim)
    r = duality_check(sampler, phi, exp.t_final, exp.n_paths, grid=exp.grid, seed=exp.seed, scale=scale)
    tol = float(exp.param("pathwise_tol", 1e-10))
    return [Metric("max_rel_diff", r.relative, 0.0, tol, r.relative <= tol),
            Metric("max_abs_diff", r.max_abs_diff), Metric("term_scale", r.term_scale)]


def run_pushthrough(exp):
    rng = np.random.Generator(np.random.PCG64(exp.seed))
    dim = int(exp.param("dim", 3))
    T = rng.normal(size=(dim, dim))
    tol = float(exp.param("pathwise_tol", 1e-10))
    out = []
    for label, sampler in (("vector", _random_markov(rng, dim)),
                           ("cylindrical", ProcessSampler.constant(rng.normal(size=(dim, 2))))):
        r = operator_pushthrough_check(T, sampler, exp.t_final, exp.n_paths, grid=exp.grid, seed=exp.seed)
        out.append(Metric(f"{label}_max_rel_diff", r.relative, 0.0, tol, r.relative <= tol))
    return out


def run_qv(exp):
    sampler, ref = _integrand(exp)
    strides = [int(s) for s in exp.param("strides", [8, 4, 2, 1])]
    r = qv_identity_check(sampler, exp.t_final, strides, exp.n_paths, grid=exp.grid, seed=exp.seed,
                          workers=exp.workers, tolerance=exp.tolerance)
    out = [_within(f"qv_mesh_{rep.mesh:.6g}", rep.estimate, rep.reference, exp.tolerance) for rep in r.reports]
    out.append(_within("reference", r.reports[-1].reference, ref, exp.tolerance))
    out += [Metric(f"l1_err_mesh_{rep.mesh:.6g}", rep.abs_err, summary=rep.err_summary) for rep in r.reports]
    out += [Metric(f"l1_decrease_{i}", float(ok), 1.0, passed=ok) for i, ok in enumerate(r.decreasing)]
    return out


def run_cross(exp):
    a = _vec(exp.param("a", None), [1.0, -0.5])
    t, grid = exp.t_final, exp.grid
    part = Partition.uniform(grid, 1, t)

    def chunk(start, count):
        noise = sample_cylindrical(grid, 2, exp.seed, count, start)
        W = noise.W()
        X = integral_path(ProcessSampler.constant(a), noise, t, 0)
        return {"same": cross_variation(X, W[:, 0], part), "indep": cross_variation(X, W[:, 1], part)}

    d = map_paths(chunk, exp.n_paths, exp.workers)
    out = []
    for i in range(a.size):
        s = summarize(d["same"][:, i], 1000, exp.seed + i)
        out.append(_within(f"same_driver_{i}", s.mean, a[i] * t, exp.tolerance, s))
        z = summarize(d["indep"][:, i], 1000, exp.seed + 10 + i)
        out.append(Metric(f"independent_{i}", z.mean, 0.0, 3 * z.std_err, abs(z.mean) <= 3 * z.std_err, z))
    return out


def _bdg_constant(exp, seed):
    cases = random_constant_operators(int(exp.param("cases", 10)), int(exp.param("suite_seed", 7)))
    ratios = [bdg_ratio(ProcessSampler.constant(B), exp.t_final, exp.n_paths, grid=exp.grid, seed=seed,
                        workers=exp.workers).ratio for B in cases]
    return ratios


def run_bdg(exp):
    ratios = _bdg_constant(exp, exp.seed)
    other = _bdg_constant(exp, exp.seed + 1)
    c1, c2 = max(ratios), max(other)
    bound = float(exp.param("doob_bound", 2.0))
    stab = float(exp.param("stability", 0.10))
    out = [Metric(f"ratio_{i}", r) for i, r in enumerate(ratios)]
    out.append(Metric("constant", c1, bound, passed=c1 <= bound))
    out.append(Metric("constant_second_seed", c2, bound, passed=c2 <= bound))
    out.append(Metric("seed_stability", _rel(c2, c1), 0.0, stab, _rel(c2, c1) <= stab))
    zero = bdg_ratio(ProcessSampler.constant([[0.0]]), exp.t_final, 100, grid=exp.grid, seed=exp.seed).ratio
    out.append(Metric("zero_integrand", zero, 0.0, passed=zero == 0.0))
    return out


def run_strat_convert(exp):
    lam = _vec(exp.param("lambdas", None), [0.3, 0.4])
    psi0 = float(exp.param("psi0", 1.0))
    A = DriftOp.linear([[0.0]])
    G = DiffusionFamily.diagonal(lam, 1)
    grid, t = exp.grid, exp.t_final

    def chunk(start, count):
        noise = sample_cylindrical(grid, lam.size, exp.seed, count, start)
        return {"end": solve_strat(A, G, [psi0], noise).states[:, grid.index_of(t), 0]}

    ends = map_paths(chunk, exp.n_paths, exp.workers)["end"]
    s = summarize(ends, 1000, exp.seed)
    ref = psi0 * math.exp(0.5 * float(lam @ lam) * t)
    fine = float(exp.param("gap_dt", exp.dt))
    ladder = [4 * fine, 2 * fine, fine]
    n_gap = int(exp.param("gap_paths", min(exp.n_paths, 4000)))
    _, gaps, slope = strat_gap_ladder(A, G, [psi0], t, ladder, n_gap, seed=exp.seed, workers=exp.workers)
    min_slope = float(exp.param("min_slope", 0.4))
    out = [_within("mean_growth", s.mean, ref, exp.tolerance, s)]
    out += [Metric(f"gap_dt_{d:.6g}", g) for d, g in zip(ladder, gaps)]
    out.append(Metric("gap_slope", slope, min_slope, passed=slope >= min_slope))
    return out


def run_collapse(exp):
    lam = _vec(exp.param("lambdas", None), [0.6, 0.8])
    sigma = collapse_constant_noise(lam)
    qv, ref = collapse_qv(lam, exp.t_final, exp.n_paths, grid=exp.grid, seed=exp.seed, workers=exp.workers)
    m = collapse_moments_check(lam, exp.t_final, exp.n_paths, grid=exp.grid, seed=exp.seed, workers=exp.workers)
    return [
        Metric("sigma", sigma),
        _within("qv", qv.mean, ref, exp.tolerance, qv),
        Metric("mean_cylindrical", m.cylindrical_mean.mean, 0.0, summary=m.cylindrical_mean),
        Metric("mean_collapsed", m.collapsed_mean.mean, 0.0, summary=m.collapsed_mean),
        Metric("m2_cylindrical", m.cylindrical_m2.mean, m.analytic_m2, summary=m.cylindrical_m2),
        Metric("m2_collapsed", m.collapsed_m2.mean, m.analytic_m2, summary=m.collapsed_m2),
        Metric("first_moment_match", float(m._overlap(m.cylindrical_mean, m.collapsed_mean)), 1.0,
               passed=m._overlap(m.cylindrical_mean, m.collapsed_mean)),
        Metric("second_moment_match", float(m._overlap(m.cylindrical_m2, m.collapsed_m2)), 1.0,
               passed=m._overlap(m.cylindrical_m2, m.collapsed_m2)),
    ]


def _ou(exp):
    theta = float(exp.param("theta", 1.0))
    sigma = float(exp.param("sigma", 1.0))
    return DriftOp.linear([[-theta]]), DiffusionFamily.additive([[sigma]]), theta, sigma


def _envelope_metrics(A, G, psi0, exp, sup_sq, end_sq):
    env = gronwall_envelope(A, G, exp.t_final)
    m0 = float(np.sum(np.asarray(psi0) ** 2))
    sup_mean, end_mean = exact_mean(sup_sq), exact_mean(end_sq)
    return [
        Metric("envelope_sup", sup_mean, env.sup_bound(m0), passed=sup_mean <= env.sup_bound(m0)),
        Metric("envelope_point", end_mean, env.point_bound(m0), passed=end_mean <= env.point_bound(m0)),
    ]


def run_solve(exp):
    A, G, theta, sigma = _ou(exp)
    psi0 = [float(exp.param("psi0", 0.0))]
    grid, t = exp.grid, exp.t_final
    k = grid.index_of(t)

    def chunk(start, count):
        sol = solve_em(A, G, psi0, sample_cylindrical(grid, 1, exp.seed, count, start))
        x = sol.states[:, : k + 1, 0]
        return {"end": x[:, -1], "sup": (x**2).max(axis=1)}

    d = map_paths(chunk, exp.n_paths, exp.workers)
    mean = exact_mean(d["end"])
    var_samples = (d["end"] - mean) ** 2 * (d["end"].size / (d["end"].size - 1))
    s = summarize(var_samples, 1000, exp.seed)
    ref_mean = psi0[0] * math.exp(-theta * t)
    ref_var = sigma**2 * (-math.expm1(-2 * theta * t)) / (2 * theta)
    u = uniqueness_check(A, G, psi0, exp.seed, grid)
    out = [
        _within("variance", s.mean, ref_var, exp.tolerance, s),
        Metric("mean", mean, ref_mean),
        Metric("bit_identical", float(u.identical), 1.0, passed=u.identical),
        Metric("reorder_max_diff", u.reorder_max_diff, 0.0, 1e-10, u.reorder_max_diff <= 1e-10),
        Metric("other_seed_differs", float(u.other_seed_differs), 1.0, passed=u.other_seed_differs),
    ]
    return out + _envelope_metrics(A, G, psi0, exp, d["sup"], d["end"] ** 2)


def run_truncation(exp):
    k_max = int(exp.k_modes or exp.param("k_max", 8))
    zero = bool(exp.param("zero_noise", False))
    lam = np.zeros(k_max) if zero else 2.0 ** -np.arange(1, k_max + 1)
    theta = float(exp.param("theta", 1.0))
    A = DriftOp.linear([[-theta]])
    G = DiffusionFamily.diagonal(lam, 1)
    psi0 = [float(exp.param("psi0", 1.0))]
    js = [int(j) for j in exp.param("js", [1, 2, 3, 4])]
    tab = truncation_convergence(A, G, psi0, [k_max], js + [k_max], exp.n_paths, exp.t_final, grid=exp.grid,
                                 seed=exp.seed, workers=exp.workers)
    out = [Metric(f"err_k{e.k}_j{e.j}", e.summary.mean, e.tail_sum, summary=e.summary) for e in tab.entries]
    if zero:
        worst = max(e.summary.mean for e in tab.entries)
        out.append(Metric("all_zero", worst, 0.0, passed=worst == 0.0))
    else:
        lo, hi = float(exp.param("ratio_low", 2.0)), float(exp.param("ratio_high", 8.0))
        for (k, j), (obs, tail) in sorted(tab.ratios.items()):
            if j in js and j + 1 in js:
                out.append(Metric(f"drop_j{j}", obs, tail, passed=lo <= obs <= hi))
    same = tab.value(k_max, k_max)
    out.append(Metric("k_equals_j", same, 0.0, passed=same == 0.0))
    out.append(Metric("monotone_in_j", float(tab.monotone), 1.0, passed=tab.monotone))
    grid, t = exp.grid, exp.t_final
    kt = grid.index_of(t)

    def chunk(start, count):
        x = solve_em(A, G, psi0, sample_cylindrical(grid, k_max, exp.seed, count, start)).states[:, : kt + 1, 0]
        return {"sup": (x**2).max(axis=1), "end": x[:, -1] ** 2}

    d = map_paths(chunk, exp.n_paths, exp.workers)
    return out + _envelope_metrics(A, G, psi0, exp, d["sup"], d["end"])


def run_energy(exp):
    A, G, _, _ = _ou(exp)
    psi0 = [float(exp.param("psi0", 1.0))]
    lad = energy_ladder(A, G, psi0, exp.t_final, [2 * exp.dt, exp.dt], exp.n_paths, seed=exp.seed,
                        workers=exp.workers)
    band = float(exp.param("halving_band", 0.30))
    ratio = lad.rms_ratios[0]
    out = [Metric(f"rms_dt_{d:.6g}", r) for d, r in zip(lad.dts, lad.rms)]
    out.append(Metric("rms_ratio", ratio, 2.0, band, abs(ratio - 2.0) <= 2.0 * band))
    out.append(Metric("bias_ratio", lad.bias_ratios[0], 2.0))
    zero = solve_em(DriftOp.linear([[0.0]]), DiffusionFamily.zero(1), [1.0],
                    sample_cylindrical(exp.grid, 1, exp.seed, 4))
    z = float(np.max(np.abs(energy_residual(zero))))
    out.append(Metric("zero_equation", z, 0.0, passed=z == 0.0))
    return out


def run_ito_formula(exp):
    A, G, _, _ = _ou(exp)
    scale = G.scale
    sol = solve_em(A, G, [float(exp.param("psi0", 1.0))], sample_cylindrical(exp.grid, 1, exp.seed, exp.n_paths))
    tol = float(exp.param("match_tol", 1e-12))
    out = []
    for space in ("H", "U"):
        energy = energy_residual(sol, space=space)
        ito = ito_formula_residual(*norm_squared_functional(scale, space), sol)
        diff = float(np.max(np.abs(energy - ito)))
        out.append(Metric(f"norm_sq_{space}_vs_energy", diff, 0.0, tol, diff <= tol))
    v = np.array([0.7])
    lin = (lambda t, x: np.asarray(x) @ v, lambda t, x: np.zeros(np.shape(x)[:-1]),
           lambda t, x: np.broadcast_to(v, np.shape(x)), lambda t, x: np.zeros(np.shape(x) + (1,)))
    r = float(np.max(np.abs(ito_formula_residual(*lin, sol))))
    out.append(Metric("linear_residual", r, 0.0, 1e-10, r <= 1e-10))
    const = (lambda t, x: np.full(np.shape(x)[:-1], 2.5), lambda t, x: np.zeros(np.shape(x)[:-1]),
             lambda t, x: np.zeros(np.shape(x)), lambda t, x: np.zeros(np.shape(x) + (1,)))
    c = float(np.max(np.abs(ito_formula_residual(*const, sol))))
    out.append(Metric("constant_residual", c, 0.0, passed=c == 0.0))
    return out


RUNNERS = {
    "isometry": run_isometry, "duality": run_duality, "pushthrough": run_pushthrough, "qv": run_qv,
    "cross": run_cross, "bdg": run_bdg, "strat_convert": run_strat_convert, "collapse": run_collapse,
    "solve": run_solve, "truncation": run_truncation, "energy": run_energy, "ito_formula": run_ito_formula,
}


def run(exp):
    """Run one experiment.  Failures inside the runner become a failed report with diagnostics."""
    start = time.perf_counter()
    try:
        metrics = RUNNERS[exp.kind](exp)
        error = None
    except Exception as exc:  # reported, not raised: the experiment failed
        metrics, error = [], f"{type(exc).__name__}: {exc}"
    return Report(exp, metrics, time.perf_counter() - start, error)


# ------------------------------------------------------------------ ladders


@dataclass(frozen=True)
class RefineReport:
    kind: str
    params: list
    errors: list
    slope: float
    floor: bool
    summaries: list


def _at_floor(summary, value):
    if abs(value) <= 1e-12:
        return True
    return summary is not None and summary.ci95[0] <= 0.0 <= summary.ci95[1]


def _ladder_noise(exp, ladder, K):
    fine = min(ladder)
    grid = TimeGrid.from_horizon(exp.t_final, fine)
    factors = [int(round(d / fine)) for d in ladder]
    if any(abs(f * fine - d) > 1e-9 * d for f, d in zip(factors, ladder)):
        raise ExperimentError("ladder values must be integer multiples of the finest rung")
    return grid, factors


def refine(exp, ladder):
    """Errors along a strictly decreasing dt (or mesh) ladder and their log-log slope."""
    ladder = [float(x) for x in ladder]
    if len(ladder) < 3:
        raise ExperimentError("a refinement ladder needs at least 3 rungs")
    if any(a <= b for a, b in zip(ladder, ladder[1:])):
        raise ExperimentError("ladder must be strictly decreasing")
    kind = exp.kind
    integrand = exp.param("integrand", "brownian")
    t = exp.t_final
    summaries = [None] * len(ladder)
    if kind == "qv" and integrand == "smooth":
        v = _vec(exp.param("v", None), [1.0])
        grid, factors = _ladder_noise(exp, ladder, 1)
        X = grid.times()[:, None] * v
        errors = [float(quadratic_variation(X, Partition.uniform(grid, f), SpaceScale.uniform(v.size)))
                  for f in factors]
    elif kind == "isometry" and integrand == "brownian":
        grid, factors = _ladder_noise(exp, ladder, 1)

        def chunk(start, count):
            noise = sample_cylindrical(grid, 1, exp.seed, count, start)
            out = {}
            for i, f in enumerate(factors):
                nz = noise.coarsen(f) if f > 1 else noise
                ito = integral_path(ProcessSampler.brownian(), nz, t)[:, -1, 0]
                W = nz.W_at(t)[:, 0]
                out[f"e{i}"] = (ito - (W * W - t) / 2) ** 2
            return out

        d = map_paths(chunk, exp.n_paths, exp.workers)
        errors = [math.sqrt(exact_mean(d[f"e{i}"])) for i in range(len(ladder))]
    elif kind == "isometry":
        sampler, _ = _integrand(exp)
        errors = []
        for i, dt in enumerate(ladder):
            grid = TimeGrid.from_horizon(t, dt)
            s = isometry_samples(sampler, t, exp.n_paths, grid=grid, seed=exp.seed, workers=exp.workers)
            summ = summarize(s["lhs"] - s["rhs"], 1000, exp.seed + i)
            summaries[i] = summ
            errors.append(abs(summ.mean))
    elif kind == "strat_convert":
        lam = _vec(exp.param("lambdas", None), [0.3, 0.4])
        _, errors, _ = strat_gap_ladder(DriftOp.linear([[0.0]]), DiffusionFamily.diagonal(lam, 1), [1.0], t,
                                        ladder, exp.n_paths, seed=exp.seed, workers=exp.workers)
    elif kind == "energy":
        A, G, _, _ = _ou(exp)
        errors = energy_ladder(A, G, [1.0], t, ladder, exp.n_paths, seed=exp.seed, workers=exp.workers).rms
    else:
        raise ExperimentError(f"no refinement ladder defined for kind {kind!r} with integrand {integrand!r}")
    floor = all(_at_floor(s, e) for s, e in zip(summaries, errors))
    positive = [e for e in errors if e > 0]
    slope = loglog_slope(ladder, errors) if len(positive) == len(errors) else 0.0
    return RefineReport(kind, ladder, errors, slope, floor, summaries)


def selftest_experiments(workers=1):
    """The quick suite of trivially true cases."""
    g = dict(dt=0.01, t_final=1.0, workers=workers)
    return [
        Experiment("isometry", {"integrand": "constant", "a": [1.0, 2.0]}, n_paths=400, seed=1, tolerance=0.25, **g),
        Experiment("duality", {"phi": [0.0, 0.0, 0.0]}, n_paths=50, seed=2, **g),
        Experiment("pushthrough", {}, n_paths=50, seed=3, **g),
        Experiment("truncation", {"zero_noise": True, "js": [1, 2]}, n_paths=200, seed=4, k_modes=3, **g),
        Experiment("ito_formula", {}, n_paths=50, seed=5, **g),
    ]
