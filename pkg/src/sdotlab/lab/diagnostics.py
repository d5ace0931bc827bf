"""Diagnostics run on a solved plan, one base point at a time.

Each diagnostic returns a :class:`Result` holding its table (for the CSV
payload), scalar metrics and the outcome of any expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..cones import NO_HOMOGENEOUS_MAP, ConePair, classify, exponents
from ..convex2d import boundary_cone, intersect, lowner_ellipse
from ..errors import SdotLabError
from ..measures import integrate_many
from ..regularity import (
    NON_ROUND,
    ROUND,
    BasePoint,
    SectionProfile,
    ellipse_axes,
    blowup_rescale,
    chi_trace,
    exponent_fit,
    geometric_heights,
    homogeneity_defect,
    proxy_profile,
    radius_window,
    roundness_profile,
    sandwich_defects,
    section,
    trusted_window,
)
from ..sdot import TransportPlan

PASS, FAIL, INFO, ERROR = "PASS", "FAIL", "INFO", "ERROR"

PROFILE_COLUMNS = ("mass", "chi", "axis_major", "axis_minor", "eccentricity")
SANDWICH_COLUMNS = ("inner_defect", "outer_defect", "section_area")

SANDWICH_TOL = 1e-6


@dataclass
class Result:
    kind: str
    base: str
    abscissa: str | None = None  # "h" or "r"; None for scalar diagnostics
    table: dict = field(default_factory=dict)
    columns: tuple = PROFILE_COLUMNS
    notes: dict = field(default_factory=dict)  # extra header lines
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)  # (name, passed, detail)
    error: str | None = None

    @property
    def status(self) -> str:
        if self.error is not None:
            return ERROR
        if not self.checks:
            return INFO
        return PASS if all(ok for _, ok, _ in self.checks) else FAIL

    def check(self, name: str, ok: bool, detail: str):
        self.checks.append((name, bool(ok), detail))


@dataclass
class Context:
    """Everything a diagnostic may need; caches shared work per base point."""

    plan: TransportPlan
    base: BasePoint
    label: str
    pinned: bool
    exponents: dict
    expected: dict
    slack: float | None = None
    cache: dict = field(default_factory=dict)

    @property
    def table(self):
        return exponents(**self.exponents)

    def window(self):
        if "window" not in self.cache:
            self.cache["window"] = trusted_window(self.plan, self.base)
        return self.cache["window"]

    def radius_window(self):
        if "radius_window" not in self.cache:
            self.cache["radius_window"] = radius_window(self.plan, self.base)
        return self.cache["radius_window"]

    def image_point(self) -> np.ndarray:
        return np.zeros(2) if self.pinned else np.asarray(self.base.p0, dtype=float)


def _profile_table(heights, mass, chi, major, minor) -> dict:
    major = np.asarray(major, dtype=float)
    minor = np.asarray(minor, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ecc = major / minor
    return {
        "mass": np.asarray(mass, dtype=float),
        "chi": np.asarray(chi, dtype=float),
        "axis_major": major,
        "axis_minor": minor,
        "eccentricity": ecc,
        "_x": np.asarray(heights, dtype=float),
    }


def _nan(n):
    return np.full(n, np.nan)


# ------------------------------------------------------------------ chi


def run_chi(ctx: Context, params: dict) -> Result:
    res = Result("chi", ctx.label, "r")
    t = ctx.exponents
    lo, hi = ctx.radius_window()
    r_min = params.get("r_min", lo)
    r_max = params.get("r_max", hi)
    radii = geometric_heights(r_min, r_max, params.get("radii", 20))
    slack = params.get("slack", ctx.slack if ctx.slack is not None else 0.05)
    tr = chi_trace(ctx.plan, ctx.base, None, t["l"], t["k"], radii, slack=slack, n=int(t["n"]))
    n = len(radii)
    res.table = _profile_table(radii, tr.masses, tr.chi, _nan(n), _nan(n))
    res.metrics = {
        "exponent": tr.exponent_used,
        "slack": slack,
        "violations": len(tr.violations),
        "worst_increase": max((v for _, v in tr.violations), default=0.0),
        "relative_variation": tr.relative_variation,
    }
    exp = ctx.expected.get("chi", {})
    if "max_violations" in exp:
        res.check("violations", len(tr.violations) <= exp["max_violations"], f"{len(tr.violations)} violations at slack {slack:g}")
    if "max_relative_variation" in exp:
        res.check("relative_variation", tr.relative_variation <= exp["max_relative_variation"], f"{tr.relative_variation:.3e}")
    return res


# ------------------------------------------------------------- sections


def run_sections(ctx: Context, params: dict) -> Result:
    """Uncentered sections ``S_h(u, x0)`` and their John ellipses."""
    res = Result("sections", ctx.label, "h")
    hs = params.get("heights")
    if hs is None:
        hs = geometric_heights(*ctx.window(), params.get("count", 12))
    hs = np.asarray(hs, dtype=float)
    major, minor, mass, sat = [], [], [], []
    src = ctx.plan.source
    for h in hs:
        s, saturated = section(ctx.plan, ctx.base, h)
        a, b, _ = ellipse_axes(lowner_ellipse(s))
        major.append(a)
        minor.append(b)
        mass.append(float(integrate_many(ctx.plan.source_density, [intersect(s, src)])[0]))
        sat.append(saturated)
    res.table = _profile_table(hs, mass, _nan(len(hs)), major, minor)
    res.notes["saturated"] = ",".join("1" if s else "0" for s in sat)
    return res


# ------------------------------------------------------------ roundness


def profile(ctx: Context, params: dict) -> SectionProfile:
    if "profile" not in ctx.cache:
        t = ctx.table
        beta = params.get("beta", t.beta_u if ctx.exponents["m"] == 0 else t.beta_flat)
        kw = {k: params[k] for k in ("ecc_cap", "slope_tol", "min_cells", "count") if k in params}
        ctx.cache["profile"] = roundness_profile(ctx.plan, ctx.base, params.get("heights"), beta=beta, **kw)
    return ctx.cache["profile"]


def _angle_gap(a: np.ndarray, b: float) -> np.ndarray:
    """Distance between axis directions modulo 180 degrees."""
    d = np.mod(a - b, 180.0)
    return np.minimum(d, 180.0 - d)


def run_roundness(ctx: Context, params: dict) -> Result:
    res = Result("roundness", ctx.label, "h")
    prof = profile(ctx, params)
    n = len(prof.heights)
    res.table = _profile_table(prof.heights, prof.masses, _nan(n), prof.axis_major, prof.axis_minor)
    res.notes["trusted"] = ",".join("1" if t else "0" for t in prof.trusted)
    res.notes["cells"] = ",".join(str(int(c)) for c in prof.cell_counts)
    ok = prof.trusted
    ecc = prof.eccentricities
    tr = np.flatnonzero(ok)
    angles = np.degrees(prof.major_angle[ok])
    res.metrics = {
        "verdict": prof.verdict,
        "predicted_beta": prof.predicted,
        "slope_major": prof.slopes[0][0],
        "slope_major_2se": prof.slopes[0][1],
        "slope_minor": prof.slopes[1][0],
        "slope_minor_2se": prof.slopes[1][1],
        "h_trusted": [float(prof.heights[tr[0]]), float(prof.heights[tr[-1]])],
        "trusted_heights": int(ok.sum()),
        "max_eccentricity": float(np.max(ecc[ok])),
        "eccentricity_smallest_h": float(ecc[tr[0]]),
        "eccentricity_largest_h": float(ecc[tr[-1]]),
        "eccentricity_ratio": float(ecc[tr[0]] / ecc[tr[-1]]),
        "major_angle_deg": [float(a) for a in angles],
        "centering_failures": len(prof.failures),
    }
    exp = ctx.expected.get("roundness", {})
    want = exp.get("verdict")
    if exp.get("match_classify"):
        # prefer the pair configured for the classify diagnostic, if it ran
        c = ctx.cache["classification"] if "classification" in ctx.cache else classify_base(ctx)
        if c is None:
            res.check("match_classify", False, "base point is interior; no tangent cones to classify")
        else:
            want = NON_ROUND if c.verdict == NO_HOMOGENEOUS_MAP else ROUND
            res.metrics["classification"] = c.verdict
    if want is not None:
        res.check("verdict", prof.verdict == want, f"{prof.verdict} (expected {want})")
    if "slopes" in exp:
        tol = exp.get("slope_tol", 0.07)
        for name, got, target in zip(("slope_major", "slope_minor"), (prof.slopes[0][0], prof.slopes[1][0]), exp["slopes"]):
            res.check(name, abs(got - target) <= tol, f"{got:.4f} vs {target:.4f} +/- {tol:g}")
    if "max_eccentricity" in exp:
        m = res.metrics["max_eccentricity"]
        res.check("max_eccentricity", m <= exp["max_eccentricity"], f"{m:.3f} <= {exp['max_eccentricity']:g}")
    if "major_angle_deg" in exp:
        gap = float(np.max(_angle_gap(angles, exp["major_angle_deg"])))
        tol = exp.get("angle_tol_deg", 10.0)
        res.check("major_angle", gap <= tol, f"worst deviation {gap:.2f} deg <= {tol:g}")
    return res


def run_proxy(ctx: Context, params: dict) -> Result:
    """Gradient-image hulls of the centered sections (a stand-in for sections of the dual potential)."""
    res = Result("proxy", ctx.label, "h")
    prof = profile(ctx, {})
    ok = prof.trusted
    hs = prof.heights[ok]
    major, minor, count = proxy_profile(ctx.plan, ctx.base, hs, prof.tilts[ok])
    n = len(hs)
    res.table = _profile_table(hs, _nan(n), _nan(n), major, minor)
    res.notes["sites"] = ",".join(str(int(c)) for c in count)
    s_major = exponent_fit(hs, major)
    s_minor = exponent_fit(hs, minor)
    res.metrics = {
        "predicted_beta": ctx.table.beta_v,
        "slope_major": s_major[0],
        "slope_major_2se": s_major[1],
        "slope_minor": s_minor[0],
        "slope_minor_2se": s_minor[1],
    }
    exp = ctx.expected.get("proxy", {})
    if "slopes" in exp:
        tol = exp.get("slope_tol", 0.07)
        for name, got, target in zip(("slope_major", "slope_minor"), (s_major[0], s_minor[0]), exp["slopes"]):
            res.check(name, abs(got - target) <= tol, f"{got:.4f} vs {target:.4f} +/- {tol:g}")
    return res


# ------------------------------------------------------------- sandwich


def run_sandwich(ctx: Context, params: dict) -> Result:
    res = Result("sandwich", ctx.label, "r", columns=SANDWICH_COLUMNS)
    radii = geometric_heights(*ctx.radius_window(), params.get("radii", 10))
    rows = np.array([sandwich_defects(ctx.plan, ctx.base, r) for r in radii])
    res.table = {"inner_defect": rows[:, 0], "outer_defect": rows[:, 1], "section_area": rows[:, 2], "_x": radii}
    rel = float(np.max(np.maximum(rows[:, 0], rows[:, 1]) / rows[:, 2]))
    res.metrics = {"max_relative_defect": rel}
    tol = ctx.expected.get("sandwich", {}).get("max_relative_defect", SANDWICH_TOL)
    res.check("sandwich", rel <= tol, f"{rel:.3e} <= {tol:g}")
    return res


# ------------------------------------------------------ cones and blow-ups


def classify_base(ctx: Context, params: dict | None = None):
    params = params or {}
    key = ("classify", params.get("source_at"), params.get("target_at"))
    if key not in ctx.cache:
        x0 = np.asarray(params.get("source_at", ctx.base.x0), dtype=float)
        y0 = np.asarray(params.get("target_at", ctx.image_point()), dtype=float)
        c, t = boundary_cone(ctx.plan.source, x0), boundary_cone(ctx.plan.target, y0, tol=1e-6)
        ctx.cache[key] = None if c is None or t is None else classify(ConePair(c, t))
        ctx.cache[key + ("cones",)] = (c, t, y0)
    return ctx.cache[key]


def run_classify(ctx: Context, params: dict) -> Result:
    res = Result("classify", ctx.label)
    c = classify_base(ctx, params)
    ctx.cache["classification"] = c
    src, tgt, y0 = ctx.cache[("classify", params.get("source_at"), params.get("target_at"), "cones")]
    res.metrics["target_point"] = [float(v) for v in y0]
    if c is None:
        res.metrics["verdict"] = "interior"
    else:
        res.metrics.update(
            verdict=c.verdict,
            family_dimension=c.family_dimension,
            source_deg=[math.degrees(src.theta_lo), math.degrees(src.theta_hi)],
            target_deg=[math.degrees(tgt.theta_lo), math.degrees(tgt.theta_hi)],
            Q=None if c.witness is None else c.witness.Q.tolist(),
        )
    exp = ctx.expected.get("classify", {})
    if "verdict" in exp:
        res.check("verdict", res.metrics["verdict"] == exp["verdict"], f"{res.metrics['verdict']} (expected {exp['verdict']})")
    return res


def run_blowup(ctx: Context, params: dict) -> Result:
    res = Result("blowup", ctx.label)
    lo, hi = ctx.window()
    h = params.get("height", math.sqrt(lo * hi))
    degree = params.get("degree", ctx.table.deg_u)
    r = blowup_rescale(ctx.plan, ctx.base.x0, h, base=ctx.base)
    d = homogeneity_defect(r, degree, params.get("t", 0.5))
    res.metrics = {"height": h, "degree": degree, "defect": d}
    exp = ctx.expected.get("blowup", {})
    if "max_defect" in exp:
        res.check("defect", d <= exp["max_defect"], f"{d:.3e} <= {exp['max_defect']:g}")
    return res


def run_obliqueness(ctx: Context, params: dict) -> Result:
    res = Result("obliqueness", ctx.label)
    x0 = np.asarray(params.get("source_at", ctx.base.x0), dtype=float)
    y0 = np.asarray(params.get("target_at", ctx.image_point()), dtype=float)
    a, b = boundary_cone(ctx.plan.source, x0), boundary_cone(ctx.plan.target, y0, tol=1e-6)
    if a is None or b is None:
        res.metrics["cosine"] = None
        return res
    cos = float(a.bisector @ b.bisector)
    res.metrics["cosine"] = cos
    if ctx.expected.get("obliqueness", {}).get("positive"):
        res.check("positive", cos > 0, f"{cos:.4f} > 0")
    return res


RUNNERS = {
    "chi": run_chi,
    "sections": run_sections,
    "roundness": run_roundness,
    "proxy": run_proxy,
    "sandwich": run_sandwich,
    "classify": run_classify,
    "blowup": run_blowup,
    "obliqueness": run_obliqueness,
}


def run_one(ctx: Context, kind: str, params: dict) -> Result:
    """Run a diagnostic; library failures become an ERROR result instead of propagating."""
    try:
        return RUNNERS[kind](ctx, params)
    except SdotLabError as exc:
        return Result(kind, ctx.label, error=f"{type(exc).__name__}: {exc}")
