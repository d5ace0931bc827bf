"""Plan files: the scenario that produced a plan plus its cloud and weights.

Floats are written as decimals with 17 significant digits, which read back
bit-exactly; the diagram is rebuilt from the stored weights.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import ConfigError
from ..sdot import TargetCloud, TransportPlan, rebuild_plan
from . import config

FORMAT = "sdotlab-plan"


def _num(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("plan arrays must be finite")
    return f"{x:.17g}"


def _arr(a, width: int = 1) -> str:
    a = np.asarray(a, dtype=float).reshape(-1, width)
    rows = [_num(r[0]) if width == 1 else "[" + ", ".join(_num(v) for v in r) + "]" for r in a]
    return "[\n  " + ",\n  ".join(rows) + "\n ]" if rows else "[]"


def dumps(plan: TransportPlan, scenario: config.Scenario) -> str:
    head = {
        "format": FORMAT,
        "version": __version__,
        "scenario": scenario.raw,
        "hash": scenario.hash,
        "seed": scenario.seed,
        "iterations": plan.iterations,
    }
    parts = [f" {json.dumps(k)}: {json.dumps(v, sort_keys=True)}" for k, v in head.items()]
    parts.append(f' "residual": {_num(plan.residual)}')
    parts.append(f' "source": {_arr(plan.source.vertices, 2)}')
    parts.append(f' "points": {_arr(plan.sites, 2)}')
    parts.append(f' "masses": {_arr(plan.cloud.masses)}')
    parts.append(f' "weights": {_arr(plan.weights)}')
    return "{\n" + ",\n".join(parts) + "\n}\n"


def save(plan: TransportPlan, scenario: config.Scenario, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(plan, scenario))
    return path


def loads(text: str, where: str = "<plan>") -> tuple[TransportPlan, config.Scenario]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not a plan file: {exc}", where=where) from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ConfigError("not a plan file (format tag missing)", where=where)
    try:
        scn = config.build(doc["scenario"], where)
        pts = np.array(doc["points"], dtype=float).reshape(-1, 2)
        cloud = TargetCloud(pts, np.array(doc["masses"], dtype=float))
        w = np.array(doc["weights"], dtype=float)
        if len(w) != len(pts):
            raise ValueError("weights and points differ in length")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"corrupt plan file: {exc}", where=where) from exc
    plan = rebuild_plan(
        scn.source,
        scn.source_density,
        cloud,
        w,
        iterations=int(doc.get("iterations", 0)),
        seed=scn.seed,
        target=scn.target,
        target_density=scn.target_density,
    )
    return plan, scn


def load(path) -> tuple[TransportPlan, config.Scenario]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read ({exc.strerror})", where=str(path)) from exc
    return loads(text, str(path))
