from dataclasses import replace
import json
import math

import numpy as np
import pytest

from laplab._random import mix_seed, splitmix64
from laplab.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    Record,
    form_target,
    local_approximation_errors,
    log_grid,
    read_csv,
    records_to_csv,
    run_cell,
    run_form_check,
    run_pointwise_curve,
    run_sweep,
    run_validation_suite,
    summarize,
)

SMALL = ExperimentConfig(
    manifold="s1", laplacian="rw", n_grid=(200, 300), eps_grid=(3e-4, 1e-3), replicas=2, base_seed=5, timings=False
)


# ----------------------------------------------------------------- config


@pytest.mark.parametrize(
    "changes",
    [
        dict(n_grid=()),
        dict(n_grid=(300, 200)),
        dict(eps_grid=(1e-3, 1e-3)),
        dict(eps_grid=(-1e-3, 1e-3)),
        dict(replicas=0),
        dict(experiment="bogus"),
        dict(laplacian="sym"),
        dict(density="nonuniform"),
        dict(manifold="torus"),
        dict(backend="gpu"),
        dict(kernel="cauchy"),
        dict(eps_rule="adaptive"),
        dict(k_max=1),
    ],
)
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        replace(SMALL, **changes)


def test_log_grid():
    assert log_grid(562, 1584, 8, integer=True) == (562, 652, 756, 876, 1016, 1178, 1366, 1584)
    g = log_grid(1e-4, 10**-2.8, 10)
    assert g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(10**-2.8)
    np.testing.assert_allclose(np.diff(np.log10(g)), 1.2 / 9)


def test_form_optimal_eps_rule():
    cfg = ExperimentConfig(experiment="form_check", n_grid=(500, 4000), eps_rule="form_optimal", eps_grid=())
    assert cfg.eps_for(4000, 0) == pytest.approx(4000**-0.4)
    assert cfg.n_eps == 1


# ------------------------------------------------------------------ seeds


def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 generator seeded with 0
    state = 0
    outs = []
    for _ in range(3):
        state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
        outs.append(splitmix64(state - 0x9E3779B97F4A7C15 & (2**64 - 1)))
    assert outs[0] == 0xE220A8397B1DCDAF
    assert outs[1] == 0x6E789E6AA1B965F4
    assert outs[2] == 0x06C45D188009454F


def test_cell_seeds_are_distinct_and_stable():
    seeds = {SMALL.seed_for(i, j, r) for i, j, r in SMALL.cells()}
    assert len(seeds) == len(SMALL.cells())
    assert SMALL.seed_for(1, 0, 1) == mix_seed(5, 1, 1, 0)
    assert replace(SMALL, base_seed=6).seed_for(0, 0, 0) != SMALL.seed_for(0, 0, 0)


# ----------------------------------------------------------------- sweeps


@pytest.fixture(scope="module")
def small_result():
    return run_sweep(SMALL)


def test_record_count(small_result):
    cfg = small_result.config
    for metric in ("relerr_lambda", "relerr_v"):
        assert len(small_result.ok_records(metric)) == len(cfg.n_grid) * len(cfg.eps_grid) * cfg.replicas
    assert small_result.failures == []


def test_aggregates(small_result):
    stats = small_result.summary["cells"]
    for s in stats:
        vals = [r.value for r in small_result.ok_records(s["metric"]) if r.N == s["N"] and r.eps == s["eps"]]
        assert s["mean"] == pytest.approx(np.mean(vals))
        assert s["stderr"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    best = small_result.summary["best"]["relerr_lambda"]
    assert [b["N"] for b in best] == [200, 300]
    assert "relerr_v" in small_result.summary["slopes"]


def test_single_cell_aggregate_is_the_record():
    cfg = replace(SMALL, n_grid=(200,), eps_grid=(5e-4,), replicas=1)
    result = run_sweep(cfg)
    assert len(result.records) == 2
    for r in result.records:
        cell = next(s for s in result.summary["cells"] if s["metric"] == r.metric)
        assert cell["mean"] == r.value and cell["stderr"] == 0.0
    assert result.summary["slopes"] == {}


def test_best_eps_prefers_smaller_on_ties():
    recs = [
        Record(100, 1e-3, 0, "m", 0.5, 1.0, "", 0.0),
        Record(100, 1e-4, 0, "m", 0.5, 1.0, "", 0.0),
        Record(100, 1e-2, 0, "m", 0.7, 1.0, "", 0.0),
    ]
    assert summarize("eigen_sweep", recs)["best"]["m"][0]["eps"] == 1e-4


def test_sweep_is_bit_identical(tmp_path, small_result):
    a = run_sweep(replace(SMALL, out_dir=str(tmp_path / "a")))
    b = run_sweep(replace(SMALL, out_dir=str(tmp_path / "b")))
    for suffix in (".csv", ".json", "_field.svg", "_best.svg"):
        assert (tmp_path / "a" / f"sweep{suffix}").read_bytes() == (tmp_path / "b" / f"sweep{suffix}").read_bytes()
    assert records_to_csv(SMALL, a.records) == records_to_csv(SMALL, small_result.records)


def test_parallel_matches_sequential(small_result):
    parallel = run_sweep(replace(SMALL, workers=2))
    assert records_to_csv(SMALL, parallel.records) == records_to_csv(SMALL, small_result.records)


def test_single_cell_rerun_is_bit_identical():
    a = run_cell(SMALL, 1, 1, 1)
    b = run_cell(SMALL, 1, 1, 1)
    assert [(r.metric, r.value.hex(), r.residual.hex()) for r in a] == [(r.metric, r.value.hex(), r.residual.hex()) for r in b]


def test_seed_override_changes_values_not_schema():
    a = run_sweep(replace(SMALL, n_grid=(200,), eps_grid=(5e-4,), replicas=1))
    b = run_sweep(replace(SMALL, n_grid=(200,), eps_grid=(5e-4,), replicas=1, base_seed=99))
    assert [r.metric for r in a.records] == [r.metric for r in b.records]
    assert a.records[0].value != b.records[0].value


def test_timings_are_accounted():
    cfg = replace(SMALL, n_grid=(400,), eps_grid=(3e-4, 1e-3), replicas=3, timings=True)
    result = run_sweep(cfg)
    per_cell = {(r.N, r.eps, r.replica): r.wall_ms for r in result.records}
    assert all(ms > 0 for ms in per_cell.values())
    assert sum(per_cell.values()) == pytest.approx(result.total_ms, rel=0.05)


def test_csv_layout_and_roundtrip(tmp_path, small_result):
    text = records_to_csv(SMALL, small_result.records)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text and text.endswith("\n")
    path = tmp_path / "r.csv"
    path.write_text(text, newline="")
    meta, records = read_csv(path)
    assert meta["experiment"] == "eigen_sweep" and meta["laplacian"] == "random_walk"
    assert [r.value for r in records] == [r.value for r in small_result.records]
    assert all(math.isnan(r.wall_ms) for r in records)


def test_json_summary(tmp_path):
    run_sweep(replace(SMALL, out_dir=str(tmp_path), name="s"))
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["grids"]["N"] == [200, 300]
    assert {"cells", "best", "slopes"} <= set(data)
    assert "timing" not in data
    assert set(data["slopes"]["relerr_v"]) == {"slope", "intercept", "r2"}


def test_failed_cells_are_isolated():
    cfg = replace(SMALL, kernel="indicator", n_grid=(30, 400), eps_grid=(1e-6, 1e-3), replicas=1)
    result = run_sweep(cfg)
    failed = {(r.N, r.eps) for r in result.failures}
    assert (30, 1e-6) in failed
    assert len(result.ok_records("relerr_lambda")) >= 1
    assert all(r.solver == "DisconnectedGraphError" for r in result.failures)


def test_all_cells_failed_raises():
    cfg = replace(SMALL, kernel="indicator", n_grid=(30,), eps_grid=(1e-7,), replicas=1)
    with pytest.raises(RuntimeError):
        run_sweep(cfg)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_sweep(replace(SMALL, out_dir=str(blocker / "sub")))


# ------------------------------------------------------- other experiments


def test_pointwise_single_eps_has_no_slopes():
    cfg = ExperimentConfig(experiment="pointwise_curve", density="nonuniform", laplacian="dc",
                           n_grid=(300,), eps_grid=(1e-3,), replicas=2)
    result = run_pointwise_curve(cfg)
    (entry,) = result.summary["curves"].values()
    assert len(entry["curve"]) == 1 and entry["slopes"] is None


def test_random_walk_pointwise_curve_has_two_branches():
    cfg = ExperimentConfig(experiment="pointwise_curve", laplacian="rw", test_function="appendix",
                           n_grid=(1000,), eps_grid=log_grid(10**-5.8, 10**-2.6, 9), replicas=3)
    (entry,) = run_pointwise_curve(cfg).summary["curves"].values()
    assert entry["slopes"]["small_eps"]["slope"] < -0.5
    assert entry["slopes"]["large_eps"]["slope"] > 0.2


def test_form_of_constant_function_is_exact():
    cfg = ExperimentConfig(experiment="form_check", test_function="psi1", n_grid=(200, 400),
                           eps_grid=(1e-3,), replicas=2)
    result = run_form_check(cfg)
    assert result.summary["target"] == 0.0
    assert all(r.value == 0.0 for r in result.records)


def test_form_targets():
    uniform = ExperimentConfig(experiment="form_check", test_function="psi2", eps_grid=(1e-3,))
    assert form_target(uniform) == pytest.approx(4 * np.pi**2, rel=1e-9)
    nonuniform = replace(uniform, density="nonuniform", laplacian="dc", test_function="appendix")
    assert form_target(nonuniform) == pytest.approx(20.8 * np.pi**2, rel=1e-9)
    sphere = replace(uniform, manifold="s2")
    assert form_target(sphere) == pytest.approx(2 / (4 * np.pi), rel=1e-6)


# ------------------------------------------------------------ validation


def test_validation_suite_reports_without_raising(tmp_path):
    cfg = ExperimentConfig(experiment="heat_kernel_check", out_dir=str(tmp_path), name="heat")
    checks = {c.name: c for c in run_validation_suite(cfg)}
    for name in ("heat_mass_s1", "heat_symmetry_s1", "heat_positive_s1", "heat_semigroup_s1",
                 "q_s_identity", "q_s2_nonnegative"):
        assert checks[name].passed, checks[name]
    assert "heat_local_gaussian_s1" in checks
    saved = json.loads((tmp_path / "heat.json").read_text())
    assert {c["name"] for c in saved} == set(checks)


def test_degree_checks_pass():
    checks = run_validation_suite(ExperimentConfig(experiment="degree_check"))
    assert all(c.passed for c in checks), checks


def test_local_errors_shrink_inside_sqrt_t_window():
    # diagnostic companion to the fixed-radius check: on a window of 4 sqrt(t)
    # around each point the ratio error does shrink once t is small
    errs = local_approximation_errors((1e-5, 1e-6))
    assert len(errs) == 2
