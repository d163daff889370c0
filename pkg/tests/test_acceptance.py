"""Acceptance criteria, run at their stated sizes and tolerances.

Each test records one ``[k] name: PASS|FAIL ...`` line, printed in the
pytest terminal summary (and to stdout when run as a script).
"""

import hashlib
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from stochheat.config import build_config
from stochheat.experiments import REGISTRY
from stochheat.grid import build_grid
from stochheat.noise import sample_white_noise
from stochheat.runner import table_bytes


def record(k, name, ok, detail, seconds, budget):
    ok = bool(ok) and seconds < budget
    line = f"[{k}] {name}: {'PASS' if ok else 'FAIL'} ({detail}; {seconds:.1f} s of {budget} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def run(name, **overrides):
    cfg = build_config(name, {}, overrides)
    start = time.perf_counter()
    result = REGISTRY[name].run(cfg)
    return cfg, result, time.perf_counter() - start


def test_1_deterministic_limit():
    cfg, res, sec = run("deterministic_limit")
    m = res.metrics
    assert cfg.n_space == 128 and cfg.horizon == 0.1
    ok = record(1, "deterministic limit", res.passed,
                f"max rel error {m['max_rel_error']:.2e} <= 2e-2, "
                f"refinement ratio {m['refinement_ratio']:.3f} in [3.5, 4.5]", sec, 5)
    assert ok


def test_2_mean_identity():
    cfg, res, sec = run("mean_identity")
    assert cfg.paths == 2000 and (cfg.probe_t, cfg.probe_x) == (0.05, 0.5)
    m = res.metrics
    ok = record(2, "mean identity", res.passed,
                f"|mean - oracle| = {m['z']:.2f} SE <= 3 SE", sec, 60)
    assert ok


def test_3_comparison():
    cfg, res, sec = run("comparison")
    assert cfg.paths == 500 and cfg.knobs["tolerance"] == 1e-8
    ok = record(3, "comparison", res.passed,
                f"{res.metrics['node_violations']} node violations over "
                f"{len(res.tables['violations'].rows)} coupled cases", sec, 60)
    assert ok


def test_4_large_deviations():
    cfg, res, sec = run("large_deviations")
    assert cfg.paths == 4000 and cfg.horizon == 0.25
    m = res.metrics
    ok = record(4, "large deviations", res.passed,
                f"slope {m['slope']:.3f} < 0, R^2 {m['r_squared']:.4f} >= 0.95", sec, 120)
    assert ok


def test_5_tail_decay():
    cfg, res, sec = run("tail_decay")
    assert cfg.paths >= 100_000 and cfg.n_space == 64
    m = res.metrics
    slope = m.get("slope", float("nan"))
    ok = record(5, "tail decay", res.passed,
                f"slope {slope:.3f} >= 0.9 (c = {m['c']:.5f})", sec, 900)
    assert ok


def test_6_negative_moments_and_kill_transform():
    cfg, res, sec1 = run("negative_moments")
    assert cfg.paths == 10_000
    kcfg, kres, sec2 = run("kill_transform")
    assert kcfg.knobs["K"] == 1.0
    m, k = res.metrics, kres.metrics
    ok = record(6, "negative moments", res.passed and kres.passed,
                f"change tau->tau/4 {m['relative_change']:.3%} < 10% "
                f"(control {m['control_relative_change']:.0%}); kill identity gap "
                f"{k['moment_gap']:.4f} <= {k['moment_allowed']:.4f}", sec1 + sec2, 300)
    assert ok


def test_7_malliavin_additive():
    cfg, res, sec = run("malliavin_additive")
    m = res.metrics
    ok = record(7, "Malliavin additive", res.passed,
                f"D vs G rel sup {m['max_rel_sup_error']:.2e} <= 1e-2, "
                f"C vs kernel integral {m['energy_rel_error']:.2e} <= 5e-2", sec, 120)
    assert ok


def test_8_malliavin_energy():
    cfg, res, sec = run("malliavin_energy")
    assert cfg.paths == 4000  # the first 2000 paths and their doubling
    m = res.metrics
    ok = record(8, "Malliavin nondegeneracy", res.passed,
                f"min C {m['min_energy']:.4f} > 0, E[1/C] change {m['inverse_moment_change']:.2%}"
                f" <= 20%, {m['cs_violations']} Cauchy-Schwarz violations", sec, 600)
    assert ok


def test_9_noise_statistics_and_reproducibility():
    start = time.perf_counter()
    grid = build_grid(64, 1.0, 0.25 / 64 ** 2)
    inc = sample_white_noise(grid, 2024, 0).increments.ravel()[:1_000_000]
    assert inc.size == 1_000_000
    var_err = abs(inc.var() / (grid.dt * grid.dx) - 1)
    digests = []
    for workers in (1, 4, 8):
        cfg = build_config("mean_identity", {"experiment": {"block_size": ("250", 0)}},
                           {"workers": workers})
        res = REGISTRY["mean_identity"].run(cfg)
        digests.append(hashlib.sha256(table_bytes(res.tables["samples"])).hexdigest())
    same = digests[0] == digests[1] == digests[2]
    sec = time.perf_counter() - start
    ok = record(9, "noise statistics", var_err <= 0.01 and same,
                f"variance error {var_err:.3%} <= 1%, CSV digests identical across 1/4/8 "
                f"workers: {same}", sec, 60)
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
