"""Acceptance criteria 1 to 9, each with its gates and its runtime budget.

Every test appends one PASS/FAIL line that is printed in the terminal
summary (and to stdout, visible with ``-s``).
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from horolab import cli
from horolab.matching import fr


def _report(num, title, checks, elapsed, budget):
    """checks: list of (label, value, passed)."""
    ok = all(p for _, _, p in checks) and elapsed < budget
    parts = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                      for k, v, _ in checks)
    line = (f"{'PASS' if ok else 'FAIL'} criterion {num} ({title}): {parts}; "
            f"{elapsed:.1f}s of {budget:.0f}s")
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [k for k, _, p in checks if not p]
    assert not failed, f"failed gates: {failed}"
    assert elapsed < budget, f"runtime {elapsed:.1f}s exceeds {budget}s"


def _gates(rec):
    return [(f"{rec.name}.{g['name']}", g["value"], g["passed"]) for g in rec.gates]


def _run(command, backend="algebraic", **params):
    cfg = cli.ExperimentConfig.load(command, backend=backend)
    for sec, vals in params.items():
        cfg.params[sec].update(vals)
    return cli.COMMANDS[command](cfg)


def test_criterion_1_renormalization():
    t0 = time.perf_counter()
    checks = []
    a = _run("relations")
    checks.append(("algebraic", a.scalars["renormalization"], a.scalars["renormalization"] < 1e-10))
    v = _run("relations", "variable")
    checks.append(("variable", v.scalars["renormalization"], v.scalars["renormalization"] < 1e-3))
    # grids as stated: 20x20 with |s| <= 2, |t| <= 1; variable |s| <= 1, |t| <= 0.05
    p = cli.DEFAULTS["relations"]
    assert (p["grid"], p["s_max"], p["t_max"]) == (20, 2.0, 1.0)
    assert (p["s_max_variable"], p["t_max_variable"]) == (1.0, 0.05)
    _report(1, "renormalization", checks, time.perf_counter() - t0, 60)


def test_criterion_2_holonomy():
    t0 = time.perf_counter()
    a = _run("holonomy")
    v = _run("holonomy", "variable")
    checks = [
        ("closed_form", a.scalars["closed_form"], a.scalars["closed_form"] < 1e-10),
        ("equiv_alg", a.scalars["equivariance"], a.scalars["equivariance"] < 1e-9),
        ("equiv_var", v.scalars["equivariance"], v.scalars["equivariance"] < 1e-3),
        ("dsigma_alg", a.scalars["sigma_derivative"], a.scalars["sigma_derivative"] < 1e-6),
        ("dsigma_var", v.scalars["sigma_derivative"], v.scalars["sigma_derivative"] < 1e-3),
    ]
    _report(2, "holonomy", checks, time.perf_counter() - t0, 120)


def test_criterion_3_margulis():
    t0 = time.perf_counter()
    v = _run("margulis", "variable")
    a = _run("margulis")
    assert max(cli.DEFAULTS["margulis"]["times"].split(","), key=float).strip() == "2.0"
    assert cli.DEFAULTS["margulis"]["box_samples"] == 100000
    checks = [
        ("expansion", v.scalars["expansion_error"], v.scalars["expansion_error"] < 0.02),
        ("entropy_cc", abs(v.scalars["entropy_constant_curvature"] - 1),
         abs(v.scalars["entropy_constant_curvature"] - 1) < 1e-3),
        ("box_ratio", a.scalars["box_ratio"], abs(a.scalars["box_ratio"] - 1) < 0.05),
    ]
    _report(3, "Margulis measure", checks, time.perf_counter() - t0, 300)


@pytest.mark.slow
def test_criterion_4_oracle_equivalence():
    t0 = time.perf_counter()
    rows = fr.exhaustive_agreement(max_len=12)
    ex_bad = sum(r[3] for r in rows)
    ex_cov = sum(r[2] for r in rows)
    ex_all = sum(4 ** n for n in range(1, 13))
    rnd_bad = len(fr.random_agreement(10_000, np.random.default_rng(0), alphabet=4))
    checks = [("exhaustive_mismatches", ex_bad, ex_bad == 0),
              ("pairs_covered", ex_cov, ex_cov == ex_all),
              ("random_mismatches", rnd_bad, rnd_bad == 0)]
    _report(4, "f_R oracle equivalence", checks, time.perf_counter() - t0, 600)


def test_criterion_5_quasi_triangle():
    t0 = time.perf_counter()
    ok, done, _ = fr.quasi_triangle_trials(1000, np.random.default_rng(5))
    checks = [("verified", ok, ok == 1000), ("built", done, done == 1000)]
    _report(5, "quasi-triangle", checks, time.perf_counter() - t0, 60)


def test_criterion_6_pm_geometry():
    t0 = time.perf_counter()
    rec = _run("standardness", standardness={"parts": "pm, claimB"})
    s = rec.scalars
    checks = [("slope_eps", s["pm_slope_eps"], abs(s["pm_slope_eps"] - 3) <= 0.2),
              ("slope_R", s["pm_slope_R"], abs(s["pm_slope_R"] + 1) <= 0.1),
              ("claimB_hits", s["claimB_intersections"], s["claimB_intersections"] == 0)]
    p = cli.DEFAULTS["standardness"]
    assert (p["claimB_pairs"], p["eps"], p["claimB_R"]) == (10000, 0.3, 100.0)
    _report(6, "PM geometry", checks, time.perf_counter() - t0, 600)


def test_criterion_7_claimA():
    t0 = time.perf_counter()
    rec = _run("standardness", standardness={"parts": "claimA"})
    s = rec.scalars
    p = cli.DEFAULTS["standardness"]
    assert (p["claimA_trials"], p["eps"], p["claimA_R"]) == (500, 0.3, 50.0)
    checks = [("success", s["claimA_success"], s["claimA_success"] >= 0.95),
              ("max_slope_dev", s["claimA_max_slope_dev"], s["claimA_max_slope_dev"] < 0.3)]
    _report(7, "Claim A", checks, time.perf_counter() - t0, 600)


@pytest.mark.slow
def test_criterion_8_standardness():
    t0 = time.perf_counter()
    rec = _run("standardness", standardness={"parts": "cover"})
    s = rec.scalars
    p = cli.DEFAULTS["standardness"]
    shape = [int(v) for v in p["shape"].split(",")]
    assert math.prod(shape) == 20 and p["samples"] == 500 and p["eps"] == 0.3
    cover_ratio = max(s["covers"]) / min(s["covers"])
    ball_ratio = max(s["balls"]) / min(s["balls"])
    checks = [("covers", "/".join(map(str, s["covers"])), True),
              ("balls", "/".join(f"{v:.4f}" for v in s["balls"]), True),
              ("cover_ratio", cover_ratio, cover_ratio <= 2),
              ("ball_ratio", ball_ratio, ball_ratio <= 3)]
    _report(8, "standardness evidence", checks, time.perf_counter() - t0, 1800)


def test_criterion_9_boundary_scaling():
    t0 = time.perf_counter()
    rec = _run("standardness", standardness={"parts": "boundary"})
    C = rec.scalars["boundary_constants"]
    assert cli.DEFAULTS["standardness"]["boundary_eps"] == "0.1, 0.05, 0.025"
    checks = [("constant_ratio", max(C) / min(C), max(C) / min(C) <= 3)]
    _report(9, "boundary scaling", checks, time.perf_counter() - t0, 300)
