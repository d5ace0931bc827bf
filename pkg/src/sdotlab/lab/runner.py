"""Run scenarios: sample, solve, diagnose, write the report."""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..cones import exponents
from ..errors import ConfigError, SdotLabError
from ..regularity import base_point
from ..sdot import TransportPlan, sample_target, solve
from . import config, persist
from .diagnostics import Context, Result, run_one
from .report import Report, csv_name, csv_text, dump_json, figures, fmt

log = logging.getLogger(__name__)

# diagnostics whose expectations may depend on others run first
_ORDER = ("classify", "obliqueness", "sandwich", "chi", "sections", "roundness", "proxy", "blowup")


def predictions(scn: config.Scenario) -> dict:
    t = exponents(**scn.exponents)
    return {k: v for k, v in t.as_dict().items() if np.isfinite(v)}


def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", label)


def solve_scenario(scn: config.Scenario) -> TransportPlan:
    pin = any(b.pin_origin for b in scn.base_points)
    cloud = sample_target(
        scn.target,
        scn.target_density,
        scn.N,
        scn.seed,
        lloyd_iters=scn.sampling["lloyd_iters"],
        pin_origin=pin,
        snap_boundary=scn.sampling["snap_boundary"],
    )
    return solve(
        scn.source,
        scn.source_density,
        cloud,
        tol=scn.solver["tol"],
        max_iter=scn.solver["max_iter"],
        seed=scn.seed,
        target=scn.target,
        target_density=scn.target_density,
    )


def _header(scn: config.Scenario, res: Result, ctx: Context) -> dict:
    pred = predictions(scn)
    return {
        "scenario": scn.name,
        "hash": scn.hash,
        "seed": scn.seed,
        "version": __version__,
        "diagnostic": res.kind,
        "base_point": f"{res.base} x0=({fmt(ctx.base.x0[0])}, {fmt(ctx.base.x0[1])}) p0=({fmt(ctx.base.p0[0])}, {fmt(ctx.base.p0[1])}) gauge={ctx.base.how}",
        "target_density_factor": fmt(scn.mass_factor),
        "predictions": " ".join(f"{k}={fmt(v)}" for k, v in pred.items()),
    }


def diagnose(plan: TransportPlan, scn: config.Scenario, *, kinds=None, slack: float | None = None):
    """All (or the named) diagnostics at every base point; returns (results, contexts)."""
    specs = sorted(scn.diagnostics, key=lambda s: _ORDER.index(s.kind))
    if kinds is not None:
        specs = [s for s in specs if s.kind in kinds]
    results, contexts = [], {}
    for b in scn.base_points:
        label = _safe(b.label)
        try:
            bp = base_point(plan, b.resolve(scn.source), pin_origin=b.pin_origin)
        except SdotLabError as exc:
            for s in specs:
                results.append(Result(s.kind, label, error=f"{type(exc).__name__}: {exc}"))
            continue
        ctx = Context(plan, bp, label, bp.how == "pinned", scn.exponents, scn.expected, slack)
        contexts[label] = ctx
        for s in specs:
            results.append(run_one(ctx, s.kind, s.params))
    return results, contexts


def write_results(scn: config.Scenario, results, contexts, out: Path) -> list[Path]:
    files = []
    for res in results:
        if res.abscissa is None or res.error is not None:
            continue
        p = out / csv_name(res)
        p.write_text(csv_text(res, _header(scn, res, contexts[res.base])))
        files.append(p)
    return files


def run(
    scn: config.Scenario,
    out_dir,
    *,
    slack: float | None = None,
    make_figures: bool = True,
    plan: TransportPlan | None = None,
) -> Report:
    """Sample, solve and diagnose one scenario, writing everything under ``out_dir/<name>``.

    Solver and diagnostic failures are recorded in the report instead of raised.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) / _safe(scn.name)
    out.mkdir(parents=True, exist_ok=True)
    report = Report(scn.name, scn.hash, scn.seed, predictions=predictions(scn))
    try:
        if plan is None:
            solved = solve_scenario(scn)
            text = persist.dumps(solved, scn)
            (out / "plan.json").write_text(text)
            # diagnose the reloaded plan, so replays start from exactly the same state
            plan, _ = persist.loads(text, str(out / "plan.json"))
            report.solver = {"N": scn.N, "iterations": solved.iterations, "residual": solved.residual}
        else:
            report.solver = {"N": len(plan.cloud), "iterations": plan.iterations, "residual": plan.residual}
        report.solver["target_density_factor"] = scn.mass_factor
        report.solver["active_cells"] = int(len(plan.active()))
    except SdotLabError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        dump_json(report.summary(), out / "summary.json")
        report.seconds = time.perf_counter() - t0
        return report
    results, contexts = diagnose(plan, scn, slack=slack)
    report.results = results
    report.files = write_results(scn, results, contexts, out)
    dump_json(report.summary(), out / "summary.json")
    if make_figures:
        profs = {k: c.cache["profile"] for k, c in contexts.items() if "profile" in c.cache}
        report.files += figures(report, out / "figures", plan, profs)
    report.seconds = time.perf_counter() - t0
    dump_json({"seconds": report.seconds}, out / "timing.json")
    return report


def replay(plan_path, kinds, out_dir, *, slack: float | None = None) -> Report:
    """Re-run diagnostics on a saved plan; CSVs match the original run byte for byte."""
    t0 = time.perf_counter()
    plan, scn = persist.load(plan_path)
    unknown = set(kinds) - {s.kind for s in scn.diagnostics}
    if unknown:
        raise ConfigError(f"diagnostic(s) {', '.join(sorted(unknown))} not configured in this scenario", where=str(plan_path))
    out = Path(out_dir) / _safe(scn.name)
    out.mkdir(parents=True, exist_ok=True)
    report = Report(scn.name, scn.hash, scn.seed, predictions=predictions(scn))
    report.solver = {"N": len(plan.cloud), "iterations": plan.iterations, "residual": plan.residual}
    results, contexts = diagnose(plan, scn, kinds=set(kinds), slack=slack)
    report.results = results
    report.files = write_results(scn, results, contexts, out)
    report.seconds = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------- suite


def _run_path(args):
    path, out_dir, seed, slack, make_figures = args
    scn = config.load(path)
    if seed is not None:
        scn = scn.with_seed(seed)
    return run(scn, out_dir, slack=slack, make_figures=make_figures)


def load_suite(paths) -> list[config.Scenario]:
    paths = [Path(p) for p in paths]
    if not paths:
        raise ConfigError("suite needs at least one scenario", where="suite")
    scns = [config.load(p) for p in paths]
    seen = {}
    for p, s in zip(paths, scns):
        if s.name in seen:
            raise ConfigError(f"duplicate scenario name '{s.name}' (also in {seen[s.name]})", where=str(p))
        seen[s.name] = p
    return scns


def suite(paths, out_dir, *, jobs: int = 1, seed: int | None = None, slack: float | None = None, make_figures: bool = True) -> list[Report]:
    """Run scenarios independently (in parallel up to ``jobs``) and write an aggregate summary."""
    paths = sorted(Path(p) for p in paths)
    load_suite(paths)  # validate everything before spending time
    args = [(str(p), str(out_dir), seed, slack, make_figures) for p in paths]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            reports = list(ex.map(_run_path, args))
    else:
        reports = [_run_path(a) for a in args]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(
        {
            "version": __version__,
            "status": "PASS" if all(r.status == "PASS" for r in reports) else "FAIL",
            "scenarios": [{"scenario": r.name, "hash": r.hash, "status": r.status} for r in reports],
        },
        out / "summary.json",
    )
    return reports


def scenario_dir() -> Path:
    return Path(__file__).with_name("scenarios")


def builtin_paths() -> list[Path]:
    return sorted(scenario_dir().glob("*.yaml"))
