"""Replica sweeps over (N, eps) grids, aggregation and persistence.

Each ``(N index, eps index, replica)`` cell is independent: its samples are
drawn from a seed mixed out of ``(base_seed, replica, N index, eps index)``,
so cells can run in any order on any worker and still reproduce bit for bit.
Aggregation always folds records in canonical index order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
import csv
import io
import json
import logging
import math
import multiprocessing
import os
from pathlib import Path
import time

import numpy as np

from ._random import mix_seed
from .analysis import align_and_score, build_references, fit_loglog_slope, pointwise_error
from .eigen import ConvergenceError, solve_lowest
from .graph import (
    DisconnectedGraphError,
    KernelSpec,
    build_operators,
    canonical_kind,
    degree_diagnostic,
    dirichlet_form,
    heat_quadratic_forms,
)
from .manifold import (
    CIRCLE,
    analytic_spectrum,
    dirichlet_energy,
    get_density,
    get_function,
    get_manifold,
    heat_kernel,
    sample,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("eigen_sweep", "pointwise_curve", "form_check", "heat_kernel_check", "degree_check")
CSV_HEADER = [
    "experiment", "manifold", "density", "laplacian", "kernel",
    "N", "eps", "replica", "metric", "value", "wall_ms", "solver", "residual",
]
FAILED = "failed"


class ConfigError(ValueError):
    pass


def log_grid(lo, hi, num, integer=False):
    """``num`` points evenly spaced in log scale from ``lo`` to ``hi``."""
    pts = np.logspace(math.log10(lo), math.log10(hi), int(num))
    if integer:
        return tuple(int(round(x)) for x in pts)
    return tuple(float(x) for x in pts)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "eigen_sweep"
    manifold: str = "s1"
    density: str = "uniform"
    laplacian: str = "random_walk"
    kernel: str = "gaussian"
    n_grid: tuple = (1000,)
    eps_grid: tuple = (1e-3,)
    eps_rule: str = "grid"
    k_max: int = 9
    replicas: int = 1
    base_seed: int = 0
    backend: str = "iterative"
    gap_rel_tol: float = 0.05
    test_function: str = ""
    workers: int = 1
    out_dir: str = None
    name: str = "sweep"
    timings: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "eps_grid", tuple(float(e) for e in self.eps_grid))
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        try:
            object.__setattr__(self, "laplacian", canonical_kind(self.laplacian))
            get_density(self.density, get_manifold(self.manifold))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.kernel not in ("gaussian", "indicator"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.backend not in ("dense", "iterative"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.eps_rule not in ("grid", "form_optimal"):
            raise ConfigError(f"unknown eps_rule {self.eps_rule!r}")
        if self.experiment in ("heat_kernel_check", "degree_check"):
            return
        for label, grid in (("n_grid", self.n_grid), ("eps_grid", self.eps_grid)):
            if label == "eps_grid" and self.eps_rule == "form_optimal":
                continue
            if not grid:
                raise ConfigError(f"{label} must not be empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{label} must be strictly increasing")
            if min(grid) <= 0:
                raise ConfigError(f"{label} must be positive")
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if self.experiment == "eigen_sweep" and self.k_max < 2:
            raise ConfigError("k_max must be at least 2")
        density = get_density(self.density, get_manifold(self.manifold))
        if self.laplacian != "density_corrected" and not density.is_uniform:
            if self.experiment in ("eigen_sweep", "pointwise_curve", "form_check"):
                raise ConfigError(f"{self.laplacian} Laplacian needs a uniform density here")

    @property
    def model(self):
        return get_manifold(self.manifold)

    @property
    def density_model(self):
        return get_density(self.density, self.model)

    def eps_for(self, N, i_eps):
        if self.eps_rule == "form_optimal":
            d = self.model.intrinsic_dim
            return float(N ** (-1.0 / (d / 2 + 2)))
        return self.eps_grid[i_eps]

    @property
    def n_eps(self):
        return 1 if self.eps_rule == "form_optimal" else len(self.eps_grid)

    def cells(self):
        return [
            (i_n, i_eps, r)
            for i_n in range(len(self.n_grid))
            for i_eps in range(self.n_eps)
            for r in range(self.replicas)
        ]

    def seed_for(self, i_n, i_eps, r):
        return mix_seed(self.base_seed, r, i_n, i_eps)

    def resolved_test_function(self):
        if self.test_function:
            return self.test_function
        return "psi2" if self.density_model.is_uniform else "appendix"


def config_fields():
    return {f.name for f in fields(ExperimentConfig)}


@dataclass(frozen=True)
class Record:
    N: int
    eps: float
    replica: int
    metric: str
    value: float
    wall_ms: float
    solver: str
    residual: float


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: list
    summary: dict = field(default_factory=dict)
    total_ms: float = None

    def ok_records(self, metric=None):
        return [r for r in self.records if r.metric != FAILED and (metric is None or r.metric == metric)]

    @property
    def failures(self):
        return [r for r in self.records if r.metric == FAILED]


# ---------------------------------------------------------------- cells


def _spec(config, eps):
    return KernelSpec(eps, config.model.intrinsic_dim, config.kernel)


def _eigen_cell(config, samples, eps, seed):
    ops = build_operators(samples, _spec(config, eps), config.laplacian)
    res = solve_lowest(ops, config.k_max, config.backend, seed=seed)
    system = analytic_spectrum(config.model, config.k_max + 1)
    convention = "tilde_phi" if config.laplacian == "density_corrected" else "phi_scaled"
    refs = build_references(samples, system, config.k_max + 1, convention)
    report = align_and_score(res, refs, system.eigenvalues, config.k_max, config.gap_rel_tol)
    solver = f"{res.solver_meta['backend']}:{res.solver_meta['iterations']}"
    resid = res.solver_meta["max_residual"]
    return [("relerr_lambda", report.relerr_lambda, solver, resid), ("relerr_v", report.relerr_v, solver, resid)]


def _pointwise_cell(config, samples, eps, seed):
    ops = build_operators(samples, _spec(config, eps), config.laplacian)
    fn = get_function(config.resolved_test_function(), config.model, config.density_model)
    x = samples.intrinsic_coords
    err = pointwise_error(ops, fn.f(x), fn.laplacian(x))
    return [("relerr_pt", err, "", float("nan"))]


def form_target(config):
    """``<f, -Laplacian f>`` for density-corrected forms, ``p <f, -Laplacian f> p`` otherwise."""
    fn = get_function(config.resolved_test_function(), config.model, config.density_model)
    energy = dirichlet_energy(config.model, fn)
    if config.laplacian == "density_corrected":
        return energy
    p = config.density_model.constant
    return p * p * energy


def _form_cell(config, samples, eps, seed, target):
    ops = build_operators(samples, _spec(config, eps), config.laplacian)
    fn = get_function(config.resolved_test_function(), config.model, config.density_model)
    value = dirichlet_form(ops, fn.f(samples.intrinsic_coords))
    abs_err = abs(value - target)
    rel_err = abs_err / abs(target) if target != 0 else abs_err
    return [("form_abs_error", abs_err, "", float("nan")), ("form_rel_error", rel_err, "", float("nan"))]


def run_cell(config, i_n, i_eps, replica, target=None):
    """Run one ``(N, eps, replica)`` cell; failures become a single ``failed`` record."""
    N = config.n_grid[i_n]
    eps = config.eps_for(N, i_eps)
    seed = config.seed_for(i_n, i_eps, replica)
    start = time.perf_counter()
    try:
        samples = sample(config.model, config.density_model, N, seed)
        if config.experiment == "eigen_sweep":
            rows = _eigen_cell(config, samples, eps, seed)
        elif config.experiment == "pointwise_curve":
            rows = _pointwise_cell(config, samples, eps, seed)
        else:
            rows = _form_cell(config, samples, eps, seed, target)
    except (DisconnectedGraphError, ConvergenceError) as exc:
        rows = [(FAILED, float("nan"), type(exc).__name__, float("nan"))]
    wall = (time.perf_counter() - start) * 1000.0 if config.timings else float("nan")
    return [Record(N, eps, replica, m, float(v), wall, s, float(res)) for m, v, s, res in rows]


def _cell_job(args):
    config, i_n, i_eps, r, target = args
    return run_cell(config, i_n, i_eps, r, target)


def _execute(config, target=None):
    jobs = [(config, i_n, i_eps, r, target) for i_n, i_eps, r in config.cells()]
    start = time.perf_counter()
    workers = max(1, int(config.workers or 1))
    if workers == 1 or len(jobs) == 1:
        results = [_cell_job(j) for j in jobs]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            # map preserves submission order, which is the canonical order
            results = list(pool.map(_cell_job, jobs, chunksize=1))
    total = (time.perf_counter() - start) * 1000.0
    records = [rec for rows in results for rec in rows]
    if records and all(r.metric == FAILED for r in records):
        raise RuntimeError("every cell of the sweep failed")
    return records, total


def _check_out_dir(config):
    if config.out_dir is None:
        return
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")


def run_sweep(config):
    """Eigenvalue/eigenvector error sweep over the full (N, eps, replica) grid."""
    if config.experiment != "eigen_sweep":
        config = replace(config, experiment="eigen_sweep")
    _check_out_dir(config)
    records, total = _execute(config)
    result = SweepResult(config, records, summarize(config.experiment, records), total)
    _persist(result)
    return result


def run_pointwise_curve(config):
    """Pointwise error against eps at fixed N, with two-branch slope fits."""
    if config.experiment != "pointwise_curve":
        config = replace(config, experiment="pointwise_curve")
    _check_out_dir(config)
    records, total = _execute(config)
    result = SweepResult(config, records, summarize(config.experiment, records), total)
    _persist(result)
    return result


def run_form_check(config):
    """Dirichlet-form deviation from its manifold limit across N."""
    if config.experiment != "form_check":
        config = replace(config, experiment="form_check")
    _check_out_dir(config)
    target = form_target(config)
    records, total = _execute(config, target)
    summary = summarize(config.experiment, records)
    summary["target"] = target
    result = SweepResult(config, records, summary, total)
    _persist(result)
    return result


# ----------------------------------------------------------- aggregation


def _cell_stats(records):
    cells = {}
    for r in records:
        if r.metric == FAILED:
            continue
        cells.setdefault((r.metric, r.N, r.eps), []).append(r.value)
    stats = []
    for (metric, N, eps), vals in sorted(cells.items()):
        v = np.asarray(vals)
        stderr = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        stats.append({"metric": metric, "N": N, "eps": eps, "mean": float(v.mean()), "stderr": stderr, "count": len(v)})
    return stats


def _best_eps(stats):
    best = {}
    for s in stats:
        key = (s["metric"], s["N"])
        cur = best.get(key)
        # stats are sorted by eps, so strict < keeps the smaller eps on ties
        if cur is None or s["mean"] < cur["mean"]:
            best[key] = s
    return best


def _third_slopes(curve):
    eps = [c["eps"] for c in curve]
    means = [c["mean"] for c in curve]
    n = len(curve)
    third = n // 3
    if third < 2:
        return None
    small = fit_loglog_slope(eps[:third], means[:third])
    large = fit_loglog_slope(eps[-third:], means[-third:])
    return {
        "small_eps": {"slope": small[0], "intercept": small[1], "r2": small[2], "eps": eps[:third]},
        "large_eps": {"slope": large[0], "intercept": large[1], "r2": large[2], "eps": eps[-third:]},
    }


def summarize(experiment, records):
    """Deterministic aggregate of a record list: cell means, best eps, slopes."""
    stats = _cell_stats(records)
    out = {"cells": stats, "failures": sum(r.metric == FAILED for r in records)}
    metrics = sorted({s["metric"] for s in stats})
    if experiment == "eigen_sweep" or experiment == "form_check":
        best = _best_eps(stats)
        out["best"] = {}
        out["slopes"] = {}
        for m in metrics:
            rows = sorted((v for (mm, _), v in best.items() if mm == m), key=lambda s: s["N"])
            out["best"][m] = [{"N": r["N"], "eps": r["eps"], "mean": r["mean"], "stderr": r["stderr"]} for r in rows]
            Ns = [r["N"] for r in rows]
            ys = [r["mean"] for r in rows]
            if len(Ns) >= 2 and min(ys) > 0:
                slope, intercept, r2 = fit_loglog_slope(Ns, ys)
                out["slopes"][m] = {"slope": slope, "intercept": intercept, "r2": r2}
        if experiment == "form_check":
            out["monotone_decrease"] = {
                m: bool(all(b["mean"] < a["mean"] for a, b in zip(out["best"][m], out["best"][m][1:])))
                for m in metrics
            }
    elif experiment == "pointwise_curve":
        out["curves"] = {}
        for m in metrics:
            for N in sorted({s["N"] for s in stats if s["metric"] == m}):
                curve = [s for s in stats if s["metric"] == m and s["N"] == N]
                out["curves"][f"{m}@{N}"] = {"curve": curve, "slopes": _third_slopes(curve)}
    return out


# ----------------------------------------------------------- persistence


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def records_to_csv(config, records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    head = [config.experiment, config.manifold, config.density, config.laplacian, config.kernel]
    for r in records:
        w.writerow(head + [_fmt(r.N), _fmt(r.eps), _fmt(r.replica), r.metric, _fmt(r.value),
                           _fmt(r.wall_ms), r.solver, _fmt(r.residual)])
    return buf.getvalue()


def read_csv(path):
    """Parse a results CSV back into ``(meta, records)``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: not a laplab results CSV")
    meta = {}
    records = []

    def num(s):
        return float(s) if s != "" else float("nan")

    for row in rows[1:]:
        meta = dict(zip(CSV_HEADER[:5], row[:5]))
        records.append(Record(int(row[5]), float(row[6]), int(row[7]), row[8], num(row[9]),
                              num(row[10]), row[11], num(row[12])))
    return meta, records


def _summary_json(result):
    cfg = asdict(result.config)
    cfg.pop("out_dir", None)
    cfg.pop("workers", None)
    payload = {"config": cfg, "grids": {"N": list(result.config.n_grid), "eps": list(result.config.eps_grid)}}
    payload.update(result.summary)
    if result.config.timings:
        cell_ms = sum({(r.N, r.eps, r.replica): r.wall_ms for r in result.records}.values())
        payload["timing"] = {"total_ms": result.total_ms, "cell_ms_sum": cell_ms}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _persist(result):
    cfg = result.config
    if cfg.out_dir is None:
        return
    from .plotting import write_plots

    out = Path(cfg.out_dir)
    (out / f"{cfg.name}.csv").write_text(records_to_csv(cfg, result.records), encoding="utf-8", newline="")
    (out / f"{cfg.name}.json").write_text(_summary_json(result), encoding="utf-8", newline="")
    write_plots(out, cfg.name, cfg.experiment, result.records)
    log.info("wrote %s.{csv,json,svg} to %s", cfg.name, out)


# ------------------------------------------------------- validation suite


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


def local_approximation_errors(ts=(1e-2, 1e-3, 1e-4), n_grid=1500):
    """Max of ``|H_t / K_t - 1|`` over s1 grid pairs within the Euclidean radius
    ``sqrt(6 (10 + d/2) t log(1/t))``, for each ``t``.
    """
    model = CIRCLE
    g = np.arange(n_grid) / n_grid
    amb = model.embed(g)
    r2 = np.sum((amb[:, None, :] - amb[None, :, :]) ** 2, axis=-1)
    d = model.intrinsic_dim
    out = []
    for t in ts:
        radius2 = 6 * (10 + d / 2) * t * math.log(1 / t)
        mask = r2 <= radius2
        H = heat_kernel(model, t, g[:, None], g[None, :])[mask]
        K = ((4 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4 * t)))[mask]
        keep = K > 0
        out.append(float(np.max(np.abs(H[keep] / K[keep] - 1.0))))
    return out


def local_approximation_exponent(ts, errors):
    """Log-log slope of error against ``t log(1/t)^2``."""
    xs = [t * math.log(1 / t) ** 2 for t in ts]
    return fit_loglog_slope(xs, errors)[0]


def _circle_quadrature(n):
    return np.arange(n) / n, 1.0 / n


def heat_kernel_checks(seed=0):
    model = CIRCLE
    y, w = _circle_quadrature(20000)
    checks = []

    t = 1e-3
    mass = [float(np.sum(heat_kernel(model, t, x, y)) * w) for x in (0.0, 0.123, 0.77)]
    err = max(abs(m - 1.0) for m in mass)
    checks.append(Check("heat_mass_s1", err <= 1e-8, err, 1e-8))

    rng = np.random.default_rng(seed)
    xs, zs = rng.random(50), rng.random(50)
    a = heat_kernel(model, t, xs, zs)
    b = heat_kernel(model, t, zs, xs)
    err = float(np.max(np.abs(a - b) / a))
    checks.append(Check("heat_symmetry_s1", err <= 1e-12, err, 1e-12))
    checks.append(Check("heat_positive_s1", bool(np.all(a > 0)), float(a.min()), 0.0))

    worst = 0.0
    for x, z in zip(xs[:5], zs[:5]):
        lhs = float(np.sum(heat_kernel(model, t, x, y) * heat_kernel(model, t, y, z)) * w)
        rhs = float(heat_kernel(model, 2 * t, x, z))
        worst = max(worst, abs(lhs - rhs) / rhs)
    checks.append(Check("heat_semigroup_s1", worst <= 1e-6, worst, 1e-6))

    ts = (1e-2, 1e-3, 1e-4)
    errs = local_approximation_errors(ts)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    expo = local_approximation_exponent(ts, errs)
    checks.append(Check("heat_local_gaussian_s1", decreasing and expo >= 0.8, expo, 0.8,
                        "max |H/K - 1| = " + ", ".join(f"{e:.3g}" for e in errs)))

    samples = sample(model, get_density("uniform", model), 200, seed)
    u = np.random.default_rng(seed + 1).standard_normal(200)
    q, q0, q2 = heat_quadratic_forms(samples, 1e-3, u)
    rel = abs(q - (q0 - q2)) / abs(q)
    checks.append(Check("q_s_identity", rel <= 1e-10, rel, 1e-10))
    checks.append(Check("q_s2_nonnegative", q2 >= 0, q2, 0.0))
    return checks


def degree_band(model, density, eps, N, n_quad=4000, n_x=200, z=5.0):
    """Expected band for the two degree diagnostics on the circle.

    ``D_i / N`` is a mean of ``N`` i.i.d. kernel values plus the diagonal
    term, so its deviation from ``m0 p(x)`` is at most the quadrature bias
    plus ``z`` standard deviations.  The row sums ``sum_j W_ij / D_j`` are
    treated the same way with ``D_j / N`` replaced by its expectation.
    Returns ``(degree_band, row_sum_band)``.
    """
    spec = KernelSpec(eps, model.intrinsic_dim)
    y = np.arange(n_quad) / n_quad
    py = density(y)
    x = np.arange(n_x) / n_x
    Y = model.embed(y)

    def moments(xs, weight):
        r2 = np.sum((model.embed(xs)[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
        K = spec.kernel(r2) * weight[None, :]
        mean = K @ py / n_quad
        var = (K * K) @ py / n_quad - mean**2
        return mean, np.sqrt(np.maximum(var, 0.0) / N)

    diag = spec.kernel(0.0) / N
    mean_y, _ = moments(y, np.ones(n_quad))
    mean_x, sd_x = moments(x, np.ones(n_quad))
    deg = np.max(np.abs(mean_x + diag - spec.m0 * density(x)) + z * sd_x)
    rmean, rsd = moments(x, 1.0 / mean_y)
    row = np.max(np.abs(rmean - 1.0) + z * rsd)
    return float(deg), float(row)


def degree_checks(seed=0, N=1500, eps=1e-3):
    model = CIRCLE
    checks = []
    uniform = get_density("uniform", model)
    s = sample(model, uniform, N, seed)
    ops = build_operators(s, KernelSpec(eps, 1), "random_walk")
    band, _ = degree_band(model, uniform, eps, N)
    rep = degree_diagnostic(ops, s, band)
    checks.append(Check("degree_band_s1_uniform", rep.degree_ok, rep.max_degree_deviation, band))

    nonuniform = get_density("nonuniform", model)
    s = sample(model, nonuniform, N, seed)
    ops = build_operators(s, KernelSpec(eps, 1), "density_corrected")
    _, band = degree_band(model, nonuniform, eps, N)
    rep = degree_diagnostic(ops, s, band)
    checks.append(Check("row_sum_band_s1_nonuniform", rep.row_sum_ok, rep.max_row_sum_deviation, band))
    rows = ops.W_tilde.sum(axis=1) / ops.D_tilde
    err = float(np.max(np.abs(rows - 1.0)))
    checks.append(Check("tilde_row_stochastic", err <= 1e-12, err, 1e-12))
    return checks


def run_validation_suite(config):
    """Diagnostic checks with measured margins; failures are entries, never exceptions."""
    if config.experiment == "heat_kernel_check":
        checks = heat_kernel_checks(config.base_seed)
    elif config.experiment == "degree_check":
        checks = degree_checks(config.base_seed)
    else:
        checks = heat_kernel_checks(config.base_seed) + degree_checks(config.base_seed)
    if config.out_dir is not None:
        _check_out_dir(config)
        payload = [asdict(c) for c in checks]
        Path(config.out_dir, f"{config.name}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return checks


__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "Record",
    "run_sweep",
    "run_pointwise_curve",
    "run_form_check",
    "run_validation_suite",
    "summarize",
    "read_csv",
    "records_to_csv",
]
