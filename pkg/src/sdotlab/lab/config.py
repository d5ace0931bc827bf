"""Scenario files: YAML with a fixed schema; unknown keys are errors.

Example::

    name: identity-square
    seed: 7
    N: 2000
    source: {type: square}
    target: {type: square}
    base_points:
      - {label: centre, point: [0.5, 0.5]}
      - {label: corner, vertex: 0, pin_origin: true}
    diagnostics:
      - {kind: chi, radii: 20}
      - {kind: roundness}
    expected:
      chi: {max_violations: 0}
      roundness: {verdict: ROUND, slopes: [0.5, 0.5], slope_tol: 0.07}
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..convex2d import Polygon, Sector, rectangle, regular_polygon, sector_polygon
from ..errors import ConfigError
from ..measures import Density, HolderPerturbed, MonomialYn, RadialHomog, Uniform

DIAGNOSTICS = ("chi", "sections", "roundness", "proxy", "sandwich", "classify", "blowup", "obliqueness")

_TOP = {
    "name": True,
    "description": False,
    "seed": False,
    "N": True,
    "source": True,
    "target": True,
    "source_density": False,
    "target_density": False,
    "sampling": False,
    "solver": False,
    "exponents": False,
    "base_points": True,
    "diagnostics": True,
    "expected": False,
}

_POLYGONS = {
    "polygon": {"vertices"},
    "square": {"side", "origin"},
    "rectangle": {"lo", "hi"},
    "regular": {"n", "radius", "center", "phase_deg"},
    "sector": {"lo_deg", "hi_deg", "radius", "segments"},
    "halfplane_cap": {"width", "height"},
    "smoothed_corner": {"beta", "width", "height", "segments"},
}
_TRANSFORM = {"rotate_deg", "matrix", "shift"}

_DENSITIES = {
    "uniform": {"c"},
    "monomial": {"k", "c"},
    "radial": {"l", "profile", "c"},
    "holder": {"base", "amplitude", "alpha"},
}

_DIAG_KEYS = {
    "chi": {"radii", "r_min", "r_max", "slack"},
    "sections": {"heights", "count"},
    "roundness": {"heights", "count", "beta", "ecc_cap", "slope_tol", "min_cells"},
    "proxy": {"count"},
    "sandwich": {"radii"},
    "classify": {"source_at", "target_at"},
    "blowup": {"height", "degree", "t"},
    "obliqueness": {"source_at", "target_at"},
}

_EXPECT_KEYS = {
    "chi": {"max_violations", "max_relative_variation"},
    "sections": set(),
    "roundness": {"verdict", "slopes", "slope_tol", "max_eccentricity", "major_angle_deg", "angle_tol_deg", "match_classify"},
    "proxy": {"slopes", "slope_tol"},
    "sandwich": {"max_relative_defect"},
    "classify": {"verdict"},
    "blowup": {"max_defect"},
    "obliqueness": {"positive"},
}


@dataclass(frozen=True)
class BaseSpec:
    label: str
    point: tuple | None = None
    vertex: int | None = None
    pin_origin: bool = False

    def resolve(self, source: Polygon) -> np.ndarray:
        if self.vertex is not None:
            return np.array(source.vertices[self.vertex], dtype=float)
        return np.array(self.point, dtype=float)


@dataclass(frozen=True)
class DiagnosticSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    raw: dict
    seed: int
    N: int
    source: Polygon
    target: Polygon
    source_density: Density
    target_density: Density
    mass_factor: float
    sampling: dict
    solver: dict
    exponents: dict
    base_points: tuple
    diagnostics: tuple
    expected: dict
    path: str | None = None

    @property
    def hash(self) -> str:
        return scenario_hash(self.raw)

    def with_seed(self, seed: int) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return build(raw, self.path)


def scenario_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ------------------------------------------------------------- loading


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, path: str | None, lines: dict):
        self.path = path or "<config>"
        self.lines = lines

    def err(self, where: tuple, message: str) -> ConfigError:
        line = None
        for k in range(len(where), -1, -1):
            if where[:k] in self.lines:
                line = self.lines[where[:k]]
                break
        field_name = ".".join(str(w) for w in where) or "<root>"
        loc = f"{self.path}:{line}" if line else self.path
        return ConfigError(message, where=f"{loc}: {field_name}")


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read ({exc.strerror})", where=str(path)) from exc
    return loads(text, str(path))


def loads(text: str, path: str | None = None) -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ConfigError(f"malformed YAML: {exc}", where=f"{path or '<config>'}:{line}") from exc
    lines = _line_map(node) if node is not None else {}
    return build(raw, path, lines)


def build(raw, path: str | None = None, lines: dict | None = None) -> Scenario:
    ctx = _Ctx(path, lines or {})
    if not isinstance(raw, dict):
        raise ctx.err((), "scenario must be a mapping")
    _check_keys(ctx, (), raw, set(_TOP), {k for k, req in _TOP.items() if req})
    name = _str(ctx, ("name",), raw["name"])
    seed = _int(ctx, ("seed",), raw.get("seed", 0))
    n = _int(ctx, ("N",), raw["N"])
    if n < 2:
        raise ctx.err(("N",), "need at least 2 sites")
    source = parse_polygon(ctx, ("source",), raw["source"])
    target = parse_polygon(ctx, ("target",), raw["target"])
    g = parse_density(ctx, ("source_density",), raw.get("source_density", {"type": "uniform"}))
    gp = parse_density(ctx, ("target_density",), raw.get("target_density", {"type": "uniform"}))
    gp, factor = _balance(ctx, source, g, target, gp)
    sampling = _options(ctx, ("sampling",), raw.get("sampling", {}), {"lloyd_iters": 20, "snap_boundary": True})
    solver = _options(ctx, ("solver",), raw.get("solver", {}), {"tol": 1e-7, "max_iter": 100})
    expo = _exponents(ctx, raw.get("exponents", {}), g, gp)
    bases = _bases(ctx, raw["base_points"], source)
    diags = _diagnostics(ctx, raw["diagnostics"])
    expected = _expected(ctx, raw.get("expected", {}) or {}, diags)
    return Scenario(
        name=name,
        raw=raw,
        seed=seed,
        N=n,
        source=source,
        target=target,
        source_density=g,
        target_density=gp,
        mass_factor=factor,
        sampling=sampling,
        solver=solver,
        exponents=expo,
        base_points=bases,
        diagnostics=diags,
        expected=expected,
        path=path,
    )


# ------------------------------------------------------------ helpers


def _check_keys(ctx, where, d, allowed, required=()):
    if not isinstance(d, dict):
        raise ctx.err(where, "expected a mapping")
    for k in d:
        if k not in allowed:
            raise ctx.err(where + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
    for k in required:
        if k not in d:
            raise ctx.err(where, f"missing required key '{k}'")


def _str(ctx, where, v) -> str:
    if not isinstance(v, str) or not v:
        raise ctx.err(where, "expected a non-empty string")
    return v


def _int(ctx, where, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ctx.err(where, "expected an integer")
    return v


def _num(ctx, where, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ctx.err(where, "expected a finite number")
    return float(v)


def _pos(ctx, where, v) -> float:
    x = _num(ctx, where, v)
    if x <= 0:
        raise ctx.err(where, "expected a positive number")
    return x


def _point(ctx, where, v) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ctx.err(where, "expected a point [x, y]")
    return np.array([_num(ctx, where + (i,), c) for i, c in enumerate(v)])


def _options(ctx, where, d, defaults: dict) -> dict:
    _check_keys(ctx, where, d, set(defaults))
    out = dict(defaults)
    for k, v in d.items():
        want = type(defaults[k])
        if want is bool and not isinstance(v, bool):
            raise ctx.err(where + (k,), "expected true or false")
        if want is int:
            v = _int(ctx, where + (k,), v)
        elif want is float:
            v = _pos(ctx, where + (k,), v)
        out[k] = v
    return out


def parse_polygon(ctx, where, d) -> Polygon:
    if not isinstance(d, dict) or "type" not in d:
        raise ctx.err(where, "polygon descriptor needs a 'type'")
    kind = d["type"]
    if kind not in _POLYGONS:
        raise ctx.err(where + ("type",), f"unknown polygon type (allowed: {', '.join(sorted(_POLYGONS))})")
    _check_keys(ctx, where, d, _POLYGONS[kind] | _TRANSFORM | {"type"})
    g = lambda k, default=None: d.get(k, default)  # noqa: E731
    if kind == "polygon":
        vs = g("vertices")
        if not isinstance(vs, list) or len(vs) < 3:
            raise ctx.err(where + ("vertices",), "need at least 3 vertices")
        p = Polygon(np.array([_point(ctx, where + ("vertices", i), v) for i, v in enumerate(vs)]))
        if len(p) < 3 or not p.is_convex():
            raise ctx.err(where + ("vertices",), "vertices must form a non-degenerate convex polygon")
    elif kind == "square":
        s = _pos(ctx, where + ("side",), g("side", 1.0))
        o = _point(ctx, where + ("origin",), g("origin", [0.0, 0.0]))
        p = rectangle(o, o + s)
    elif kind == "rectangle":
        lo = _point(ctx, where + ("lo",), g("lo"))
        hi = _point(ctx, where + ("hi",), g("hi"))
        if np.any(hi <= lo):
            raise ctx.err(where, "rectangle needs lo < hi")
        p = rectangle(lo, hi)
    elif kind == "regular":
        n = _int(ctx, where + ("n",), g("n", 6))
        p = regular_polygon(
            n,
            _pos(ctx, where + ("radius",), g("radius", 1.0)),
            _point(ctx, where + ("center",), g("center", [0.0, 0.0])),
            math.radians(_num(ctx, where + ("phase_deg",), g("phase_deg", 0.0))),
        )
    elif kind == "sector":
        lo = _num(ctx, where + ("lo_deg",), g("lo_deg"))
        hi = _num(ctx, where + ("hi_deg",), g("hi_deg"))
        if not 0 < hi - lo <= 180:
            raise ctx.err(where, "sector span must lie in (0, 180] degrees")
        p = sector_polygon(math.radians(lo), math.radians(hi), _pos(ctx, where + ("radius",), g("radius", 1.0)), _int(ctx, where + ("segments",), g("segments", 24)))
    elif kind == "halfplane_cap":
        w = _pos(ctx, where + ("width",), g("width", 1.0))
        h = _pos(ctx, where + ("height",), g("height", 1.0))
        p = rectangle([-w, 0.0], [w, h])
    else:
        p = smoothed_corner(
            _pos(ctx, where + ("beta",), g("beta", 0.5)),
            _pos(ctx, where + ("width",), g("width", 1.0)),
            _pos(ctx, where + ("height",), g("height", 1.0)),
            _int(ctx, where + ("segments",), g("segments", 32)),
        )
    if "matrix" in d:
        m = d["matrix"]
        if not isinstance(m, list) or len(m) != 2:
            raise ctx.err(where + ("matrix",), "expected a 2x2 matrix")
        a = np.array([_point(ctx, where + ("matrix", i), r) for i, r in enumerate(m)])
        if np.linalg.det(a) <= 0:
            raise ctx.err(where + ("matrix",), "matrix must have positive determinant")
        p = p.transformed(a)
    if "rotate_deg" in d:
        t = math.radians(_num(ctx, where + ("rotate_deg",), d["rotate_deg"]))
        p = p.transformed([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    if "shift" in d:
        p = p.transformed(np.eye(2), _point(ctx, where + ("shift",), d["shift"]))
    return p


def smoothed_corner(beta: float, width: float, height: float, segments: int = 32) -> Polygon:
    """``{x2 >= |x1|^(1+beta)}`` capped at ``x2 = height``: a convex C^{1,beta} corner at the origin."""
    w = min(width, height ** (1.0 / (1.0 + beta)))
    t = np.linspace(-w, w, 2 * segments + 1)
    curve = np.column_stack([t, np.abs(t) ** (1.0 + beta)])
    top = np.array([[w, height], [-w, height]])
    if np.isclose(curve[-1, 1], height):
        top = np.zeros((0, 2))
    return Polygon(np.vstack([curve, top]))


def parse_density(ctx, where, d) -> Density:
    if not isinstance(d, dict) or "type" not in d:
        raise ctx.err(where, "density descriptor needs a 'type'")
    kind = d["type"]
    if kind not in _DENSITIES:
        raise ctx.err(where + ("type",), f"unknown density type (allowed: {', '.join(sorted(_DENSITIES))})")
    _check_keys(ctx, where, d, _DENSITIES[kind] | {"type"})
    c = _pos(ctx, where + ("c",), d.get("c", 1.0)) if "c" in _DENSITIES[kind] else 1.0
    if kind == "uniform":
        return Uniform(c)
    if kind == "monomial":
        k = _num(ctx, where + ("k",), d.get("k", 1.0))
        if k < 0:
            raise ctx.err(where + ("k",), "exponent must be non-negative")
        return MonomialYn(k, c)
    if kind == "radial":
        prof = d.get("profile", [1.0])
        if not isinstance(prof, list) or not prof:
            raise ctx.err(where + ("profile",), "expected a list of positive numbers")
        return RadialHomog(_num(ctx, where + ("l",), d.get("l", 0.0)), tuple(_pos(ctx, where + ("profile", i), v) for i, v in enumerate(prof)), c)
    base = parse_density(ctx, where + ("base",), d.get("base", {"type": "uniform"}))
    return HolderPerturbed(base, _num(ctx, where + ("amplitude",), d.get("amplitude", 0.2)), _pos(ctx, where + ("alpha",), d.get("alpha", 0.5)))


def _balance(ctx, source, g, target, gp):
    """Rescale the target density so that both measures carry the same mass."""
    from ..measures import integrate_many

    ms = float(integrate_many(g, [source])[0])
    mt = float(integrate_many(gp, [target])[0])
    if not (ms > 0 and mt > 0):
        raise ctx.err(("target_density",), "source and target must carry positive mass")
    factor = ms / mt
    return gp.scaled(factor), factor


def _exponents(ctx, d, g, gp) -> dict:
    _check_keys(ctx, ("exponents",), d, {"n", "m", "l", "k"})
    l_default = g.homogeneity_degree if g.homogeneity_degree is not None else 0.0
    k_default = gp.homogeneity_degree if gp.homogeneity_degree is not None else 0.0
    out = {
        "n": _num(ctx, ("exponents", "n"), d.get("n", 2)),
        "m": _num(ctx, ("exponents", "m"), d.get("m", 0)),
        "l": _num(ctx, ("exponents", "l"), d.get("l", l_default)),
        "k": _num(ctx, ("exponents", "k"), d.get("k", k_default)),
    }
    if not (out["n"] >= 2 and 0 <= out["m"] <= out["n"] and out["l"] >= 0 and out["k"] >= 0):
        raise ctx.err(("exponents",), "need n >= 2, 0 <= m <= n, l >= 0, k >= 0")
    return out


def _bases(ctx, lst, source) -> tuple:
    if not isinstance(lst, list) or not lst:
        raise ctx.err(("base_points",), "expected a non-empty list")
    out, seen = [], set()
    for i, b in enumerate(lst):
        w = ("base_points", i)
        _check_keys(ctx, w, b, {"label", "point", "vertex", "pin_origin"}, {"label"})
        label = _str(ctx, w + ("label",), b["label"])
        if label in seen:
            raise ctx.err(w + ("label",), f"duplicate base point label '{label}'")
        seen.add(label)
        if ("point" in b) == ("vertex" in b):
            raise ctx.err(w, "give exactly one of 'point' or 'vertex'")
        pin = b.get("pin_origin", False)
        if not isinstance(pin, bool):
            raise ctx.err(w + ("pin_origin",), "expected true or false")
        if "vertex" in b:
            v = _int(ctx, w + ("vertex",), b["vertex"])
            if not 0 <= v < len(source):
                raise ctx.err(w + ("vertex",), f"vertex tag {v} does not resolve (source has {len(source)} vertices)")
            spec = BaseSpec(label, vertex=v, pin_origin=pin)
        else:
            p = _point(ctx, w + ("point",), b["point"])
            if not source.contains(p[None, :], tol=1e-9)[0]:
                raise ctx.err(w + ("point",), "point lies outside the source")
            spec = BaseSpec(label, point=tuple(float(c) for c in p), pin_origin=pin)
        out.append(spec)
    return tuple(out)


def _diagnostics(ctx, lst) -> tuple:
    if not isinstance(lst, list) or not lst:
        raise ctx.err(("diagnostics",), "expected a non-empty list")
    out, seen = [], set()
    for i, d in enumerate(lst):
        w = ("diagnostics", i)
        if not isinstance(d, dict) or "kind" not in d:
            raise ctx.err(w, "diagnostic needs a 'kind'")
        kind = d["kind"]
        if kind not in DIAGNOSTICS:
            raise ctx.err(w + ("kind",), f"unknown diagnostic (allowed: {', '.join(DIAGNOSTICS)})")
        if kind in seen:
            raise ctx.err(w + ("kind",), f"diagnostic '{kind}' listed twice")
        seen.add(kind)
        _check_keys(ctx, w, d, _DIAG_KEYS[kind] | {"kind"})
        params = {k: v for k, v in d.items() if k != "kind"}
        for k in ("source_at", "target_at"):
            if k in params:
                params[k] = tuple(_point(ctx, w + (k,), params[k]).tolist())
        for k in ("radii", "count", "min_cells"):
            if k in params:
                if _int(ctx, w + (k,), params[k]) < 4 and k != "min_cells":
                    raise ctx.err(w + (k,), "need at least 4")
        if "heights" in params:
            hs = params["heights"]
            if not isinstance(hs, list) or len(hs) < 4:
                raise ctx.err(w + ("heights",), "need a list of at least 4 heights")
            params["heights"] = [_pos(ctx, w + ("heights", j), h) for j, h in enumerate(hs)]
        for k in ("r_min", "r_max", "slack", "ecc_cap", "slope_tol", "height", "degree", "t"):
            if k in params:
                params[k] = _pos(ctx, w + (k,), params[k])
        if "beta" in params:
            params["beta"] = _pos(ctx, w + ("beta",), params["beta"])
        out.append(DiagnosticSpec(kind, params))
    return tuple(out)


def _expected(ctx, d, diags) -> dict:
    kinds = {s.kind for s in diags}
    _check_keys(ctx, ("expected",), d, set(DIAGNOSTICS))
    out = {}
    for kind, e in d.items():
        w = ("expected", kind)
        if kind not in kinds:
            raise ctx.err(w, f"expectation for diagnostic '{kind}' which is not run")
        _check_keys(ctx, w, e, _EXPECT_KEYS[kind])
        e = dict(e)
        if "slopes" in e:
            s = e["slopes"]
            if not isinstance(s, list) or len(s) != 2:
                raise ctx.err(w + ("slopes",), "expected [major, minor]")
            e["slopes"] = [_pos(ctx, w + ("slopes", i), v) for i, v in enumerate(s)]
        if "verdict" in e and not isinstance(e["verdict"], str):
            raise ctx.err(w + ("verdict",), "expected a string")
        out[kind] = e
    return out


def sector_of(spec) -> Sector:
    """Parse ``'lo,hi'`` (degrees) into a :class:`Sector`."""
    try:
        lo, hi = (float(x) for x in str(spec).split(","))
    except ValueError as exc:
        raise ConfigError(f"sector '{spec}' must be 'lo,hi' in degrees", where="sector") from exc
    if not 0 < hi - lo <= 180:
        raise ConfigError(f"sector '{spec}' must span (0, 180] degrees", where="sector")
    return Sector.from_degrees(lo, hi)
