"""Acceptance criteria AC1-AC10.

Each test records one pass/fail line (printed at the end of the run by
conftest.py) and then asserts the same outcome.  The built-in scenario suite
is run once per module and its reports are shared by AC3-AC7.
"""

import csv
import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import record_ac
from test_cones import ode_residuals, witness_defects
from test_sdot import check_assignment, check_hessian

from sdotlab.cones import NO_HOMOGENEOUS_MAP, ConePair, classify
from sdotlab.convex2d import Sector, tangent_cone
from sdotlab.lab import config, runner
from sdotlab.regularity import NON_ROUND, ROUND, HomogeneousPotential, chi_trace

SLOPE_TOL = 0.07
SCENARIO_BUDGET = 300.0  # seconds per scenario on a laptop


def read_csv(path: Path) -> dict:
    rows = [r for r in csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#"))]
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return {c: data[:, i] for i, c in enumerate(cols)}


def within(x, target, tol=SLOPE_TOL) -> bool:
    return abs(x - target) <= tol


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    reports = runner.suite(runner.builtin_paths(), out, make_figures=False)
    return out, {r.name: r for r in reports}


def summary(suite_dir, name: str) -> dict:
    return json.loads((suite_dir[0] / name / "summary.json").read_text())


def metrics(suite_dir, name: str, kind: str) -> dict:
    """Metrics of one diagnostic per base point label."""
    return {d["base"]: d["metrics"] for d in summary(suite_dir, name)["diagnostics"] if d["kind"] == kind}


def test_builtin_suite_runs_clean(suite_dir):
    _, reports = suite_dir
    slow = {n: r.seconds for n, r in reports.items() if r.seconds > SCENARIO_BUDGET}
    assert not slow, slow
    assert {n: r.status for n, r in reports.items() if r.status != "PASS"} == {}


# ------------------------------------------------------------------ AC1


def test_ac1_chi_rigidity():
    t0 = time.perf_counter()
    radii = np.geomspace(1e-3, 1.0, 30)
    worst = 0.0
    for angle in (60, 90, 135):
        for m in (np.eye(2), np.array([[1.6, 0.3], [0.3, 0.7]])):
            m = m / math.sqrt(np.linalg.det(m))
            q = HomogeneousPotential.quadratic(m, Sector(0.2, 0.2 + math.radians(angle)))
            worst = max(worst, chi_trace(q, None, None, 0, 0, radii).relative_variation)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 1.0
    record_ac(1, ok, f"chi relative variation {worst:.2e} <= 1e-6 on 60/90/135 deg sectors, {dt:.3f} s < 1 s")
    assert ok


# ------------------------------------------------------------------ AC2


def test_ac2_chi_monotone_on_solved_plan():
    scn = config.load(runner.scenario_dir() / "identity-square.yaml")
    assert scn.N == 2000
    t0 = time.perf_counter()
    plan = runner.solve_scenario(scn)
    results, _ = runner.diagnose(plan, scn, kinds={"chi"}, slack=0.05)
    dt = time.perf_counter() - t0
    bases = {r.base: r for r in results}
    assert set(bases) == {"centre", "corner"}
    parts, ok = [], dt < 60.0
    for label, r in sorted(bases.items()):
        assert r.error is None, r.error
        radii = r.table["_x"]
        ok &= len(radii) == 20 and r.metrics["violations"] == 0 and r.metrics["slack"] == 0.05
        parts.append(f"{label} {r.metrics['violations']} violations/{len(radii)} radii")
    record_ac(2, ok, f"{', '.join(parts)} at slack 5%, {dt:.1f} s < 60 s")
    assert ok


# ------------------------------------------------------------------ AC3


def test_ac3_sandwich_on_every_plan(suite_dir):
    out, reports = suite_dir
    worst, count, ok = 0.0, 0, True
    for name in sorted(reports):
        files = sorted((out / name).glob("sandwich_*.csv"))
        ok &= bool(files)
        for f in files:
            t = read_csv(f)
            ok &= len(t["r"]) == 10
            rel = np.maximum(t["inner_defect"], t["outer_defect"]) / t["section_area"]
            worst = max(worst, float(rel.max()))
            count += 1
    ok &= worst <= 1e-6
    record_ac(3, ok, f"worst sandwich defect {worst:.1e} x area <= 1e-6 ({count} base points, {len(reports)} plans, 10 radii)")
    assert ok


# ------------------------------------------------------------------ AC4


def test_ac4_interior_exponent(suite_dir):
    parts, ok = [], True
    for name in ("identity-square", "linear-map"):
        for label, m in sorted(metrics(suite_dir, name, "roundness").items()):
            s1, s2, ecc = m["slope_major"], m["slope_minor"], m["max_eccentricity"]
            ok &= within(s1, 0.5) and within(s2, 0.5) and ecc <= 1.5
            parts.append(f"{name}/{label} {s1:.3f},{s2:.3f} ecc {ecc:.2f}")
    record_ac(4, ok, "slopes 0.5+/-0.07, ecc <= 1.5: " + "; ".join(parts))
    assert ok


# ------------------------------------------------------------------ AC5


CORNERS = {"corner-acute": ROUND, "corner-right-angle": ROUND, "corner-obtuse": ROUND, "no-homog-corner": NON_ROUND}


def test_ac5_classification_matches_roundness(suite_dir):
    parts, ok = [], True
    for name, want in CORNERS.items():
        scn = config.load(runner.scenario_dir() / f"{name}.yaml")
        # the corners sit at the origin of both polygons
        pair = ConePair(tangent_cone(scn.source, [0.0, 0.0]), tangent_cone(scn.target, [0.0, 0.0]))
        verdict = classify(pair).verdict
        m = metrics(suite_dir, name, "roundness")["corner"]
        ok &= m["verdict"] == want and m.get("classification") == verdict
        ok &= (verdict == NO_HOMOGENEOUS_MAP) == (want == NON_ROUND)
        if want == ROUND:
            ok &= within(m["slope_major"], 0.5) and within(m["slope_minor"], 0.5)
            parts.append(f"{verdict}->{m['verdict']} ({m['slope_major']:.3f},{m['slope_minor']:.3f})")
        else:
            ratio = m["eccentricity_smallest_h"] / m["eccentricity_largest_h"]
            ok &= ratio >= 2.0
            parts.append(f"{verdict}->{m['verdict']} (ecc ratio {ratio:.2f} >= 2)")
    record_ac(5, ok, "; ".join(parts))
    assert ok


# ------------------------------------------------------------------ AC6


def test_ac6_degenerate_exponents(suite_dir):
    parts, ok = [], True
    for name, k, bu, bv in (("degenerate-k1", 1, 0.6, 0.4), ("degenerate-k2", 2, 2 / 3, 1 / 3)):
        u = metrics(suite_dir, name, "roundness")["apex"]
        v = metrics(suite_dir, name, "proxy")["apex"]
        su = (u["slope_major"], u["slope_minor"])
        sv = (v["slope_major"], v["slope_minor"])
        ok &= all(within(s, bu) for s in su) and all(within(s, bv) for s in sv)
        parts.append(f"k={k} u {su[0]:.3f},{su[1]:.3f} vs {bu:.3f}; v {sv[0]:.3f},{sv[1]:.3f} vs {bv:.3f}")
    record_ac(6, ok, "; ".join(parts) + " (+/-0.07)")
    assert ok


# ------------------------------------------------------------------ AC7


def test_ac7_mixed_homogeneity(suite_dir):
    m = metrics(suite_dir, "mixed-m1-k1", "roundness")["edge"]
    s1, s2 = m["slope_major"], m["slope_minor"]
    # major axis along the flat direction x1; angles are mod 180
    ang = np.asarray(m["major_angle_deg"], dtype=float)
    gap = float(np.abs((ang + 90.0) % 180.0 - 90.0).max())
    ok = within(s1, 0.5) and within(s2, 2 / 3) and gap <= 10.0
    record_ac(7, ok, f"major {s1:.3f} vs 0.5, minor {s2:.3f} vs 0.667 (+/-0.07), axis off flat direction by {gap:.1f} deg <= 10")
    assert ok


# ------------------------------------------------------------------ AC8


def test_ac8_quadratic_witnesses():
    w = max(witness_defects(100, seed=2024))
    r = max(ode_residuals(20, seed=11))
    ok = w <= 1e-12 and r <= 1e-8
    record_ac(8, ok, f"100 witnesses: worst det/ray/Legendre defect {w:.1e} <= 1e-12; 20 ODE profiles: residual {r:.1e} <= 1e-8")
    assert ok


# ------------------------------------------------------------------ AC9


def test_ac9_solver_oracles():
    gaps = [check_assignment(seed) for seed in range(20)]
    hess = [check_hessian(seed) for seed in range(5)]
    ok = max(gaps) <= 0.01 and max(hess) <= 1e-4
    record_ac(9, ok, f"20 assignment instances: worst cost gap {max(gaps):.1e} <= 1%; Hessian vs FD {max(hess):.1e} <= 1e-4")
    assert ok


# ------------------------------------------------------------------ AC10


def test_ac10_determinism_and_persistence(suite_dir, tmp_path):
    out, _ = suite_dir
    name = "holder-square"
    first = out / name
    scn = config.load(runner.scenario_dir() / f"{name}.yaml")
    runner.run(scn, tmp_path / "again", make_figures=False)
    second = tmp_path / "again" / name
    names = sorted(p.name for p in first.glob("*.csv")) + ["summary.json", "plan.json"]
    _, mismatch, errors = filecmp.cmpfiles(first, second, names, shallow=False)
    kinds = sorted({s.kind for s in scn.diagnostics})
    runner.replay(first / "plan.json", kinds, tmp_path / "replay")
    csvs = sorted(p.name for p in first.glob("*.csv"))
    _, r_mismatch, r_errors = filecmp.cmpfiles(first, tmp_path / "replay" / name, csvs, shallow=False)
    ok = not (mismatch or errors or r_mismatch or r_errors) and len(csvs) > 0
    record_ac(
        10,
        ok,
        f"{name}: rerun {len(names)} files byte-identical (diff {mismatch + errors}); "
        f"replay from saved plan {len(csvs)} CSVs byte-identical (diff {r_mismatch + r_errors})",
    )
    assert ok
