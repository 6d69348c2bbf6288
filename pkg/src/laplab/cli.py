"""``laplab`` command line.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import logging
import os
from pathlib import Path
import sys

from . import __version__
from .config import load_config
from .eigen import ConvergenceError, solve_lowest
from .graph import DisconnectedGraphError, KernelSpec, build_operators
from .harness import (
    ConfigError,
    ExperimentConfig,
    read_csv,
    run_form_check,
    run_pointwise_curve,
    run_sweep,
    run_validation_suite,
)
from .manifold import analytic_spectrum, get_density, get_manifold, sample
from .plotting import write_plots

log = logging.getLogger("laplab")

_RUNNERS = {
    "sweep": ("eigen_sweep", run_sweep),
    "pointwise": ("pointwise_curve", run_pointwise_curve),
    "form": ("form_check", run_form_check),
}


def _available_workers():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _common(p):
    p.add_argument("--out-dir", help="output directory (default: $LAPLAB_OUT_DIR or ./results)")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--quiet", action="store_true", help="only print errors")


def _parser():
    ap = argparse.ArgumentParser(prog="laplab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"laplab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (
        ("sweep", "eigenvalue/eigenvector error sweep over (N, eps)"),
        ("pointwise", "pointwise error against eps at fixed N"),
        ("form", "Dirichlet form deviation across N"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment TOML file")
        _common(p)
        p.add_argument("--replicas", type=int)
        p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
        p.add_argument("--backend", choices=("dense", "iterative"))

    p = sub.add_parser("validate", help="heat-kernel and degree diagnostics")
    p.add_argument("--config", help="optional TOML selecting heat_kernel_check or degree_check")
    _common(p)

    p = sub.add_parser("spectrum", help="analytic vs graph eigenvalues for one sample")
    p.add_argument("--manifold", default="s1", choices=("s1", "s2"))
    p.add_argument("--density", default="uniform", choices=("uniform", "nonuniform"))
    p.add_argument("--laplacian", default="rw", choices=("un", "rw", "dc"))
    p.add_argument("--kernel", default="gaussian", choices=("gaussian", "indicator"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=10, help="number of eigenvalues to list")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("dense", "iterative"), default="iterative")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("plot", help="regenerate SVGs from a results CSV")
    p.add_argument("csv", help="results CSV written by sweep/pointwise/form")
    p.add_argument("--out-dir", help="directory for the SVGs (default: next to the CSV)")
    p.add_argument("--quiet", action="store_true")
    return ap


def _out_dir(args):
    return args.out_dir or os.environ.get("LAPLAB_OUT_DIR") or "results"


def _run_experiment(args):
    expected, runner = _RUNNERS[args.command]
    cfg = load_config(
        args.config,
        out_dir=_out_dir(args),
        base_seed=args.seed,
        replicas=args.replicas,
        backend=args.backend,
        workers=args.workers,
        defaults={"workers": _available_workers()},
    )
    if cfg.experiment != expected:
        raise ConfigError(f"{args.config} describes a {cfg.experiment} experiment, not {expected}")
    log.info("running %s: %d cells on %d worker(s)", cfg.name, len(cfg.cells()), cfg.workers)
    result = runner(cfg)
    summary = result.summary
    for metric, fit in sorted(summary.get("slopes", {}).items()):
        log.info("%s: slope %.3f (r2 %.3f)", metric, fit["slope"], fit["r2"])
    for key, entry in sorted(summary.get("curves", {}).items()):
        if entry["slopes"]:
            s = entry["slopes"]
            log.info("%s: small-eps slope %.3f, large-eps slope %.3f", key,
                     s["small_eps"]["slope"], s["large_eps"]["slope"])
    for metric, ok in sorted(summary.get("monotone_decrease", {}).items()):
        log.info("%s decreasing in N: %s", metric, ok)
    if result.failures:
        log.warning("%d cell(s) failed; see rows with metric=failed", len(result.failures))
    log.info("results in %s", cfg.out_dir)
    return 0


def _run_validate(args):
    if args.config:
        cfg = load_config(args.config, out_dir=_out_dir(args), base_seed=args.seed)
        if cfg.experiment not in ("heat_kernel_check", "degree_check"):
            raise ConfigError(f"{args.config} is not a validation config")
        configs = [cfg]
    else:
        seed = args.seed or 0
        configs = [
            ExperimentConfig(experiment=e, name=f"validate_{e}", out_dir=_out_dir(args), base_seed=seed)
            for e in ("heat_kernel_check", "degree_check")
        ]
    checks = [c for cfg in configs for c in run_validation_suite(cfg)]
    _print_checks(checks, args.quiet)
    return 0


def _print_checks(checks, quiet):
    for c in checks:
        if quiet and c.passed:
            continue
        status = "PASS" if c.passed else "FAIL"
        extra = f"  [{c.detail}]" if c.detail else ""
        print(f"{status}  {c.name:28s} measured={c.measured:.4g} threshold={c.threshold:.4g}{extra}")


def _run_spectrum(args):
    try:
        model = get_manifold(args.manifold)
        density = get_density(args.density, model)
        spec = KernelSpec(args.eps, model.intrinsic_dim, args.kernel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.k < 1 or args.k > args.n:
        raise ConfigError("--k must lie in [1, n]")
    samples = sample(model, density, args.n, args.seed)
    ops = build_operators(samples, spec, args.laplacian)
    res = solve_lowest(ops, args.k - 1, args.backend, seed=args.seed)
    mu = analytic_spectrum(model, args.k).eigenvalues
    print(f"{'k':>3}  {'mu':>12}  {'lambda':>12}  {'rel.err':>9}")
    for k, (m, lam) in enumerate(zip(mu, res.eigenvalues), start=1):
        rel = f"{abs(lam - m) / m:9.4f}" if m > 0 else f"{'-':>9}"
        print(f"{k:>3}  {m:12.3f}  {lam:12.3f}  {rel}")
    return 0


def _run_plot(args):
    path = Path(args.csv)
    if not path.is_file():
        raise ConfigError(f"results CSV not found: {path}")
    try:
        meta, records = read_csv(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out_dir) if args.out_dir else path.parent
    out.mkdir(parents=True, exist_ok=True)
    for p in write_plots(out, path.stem, meta.get("experiment", "eigen_sweep"), records):
        log.info("wrote %s", p)
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    handlers = {"validate": _run_validate, "spectrum": _run_spectrum, "plot": _run_plot}
    handler = handlers.get(args.command, _run_experiment)
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"laplab: config error: {exc}", file=sys.stderr)
        return 1
    except (DisconnectedGraphError, ConvergenceError, RuntimeError, OSError, ValueError) as exc:
        print(f"laplab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
