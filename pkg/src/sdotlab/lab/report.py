"""CSV payloads, the summary document and figures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .diagnostics import ERROR, FAIL, PASS, Result

CSV_DIGITS = 17


@dataclass
class Report:
    name: str
    hash: str
    seed: int
    solver: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    results: list = field(default_factory=list)
    error: str | None = None
    files: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def status(self) -> str:
        if self.error is not None:
            return ERROR
        states = {r.status for r in self.results}
        if ERROR in states or FAIL in states:
            return FAIL
        return PASS

    def summary(self) -> dict:
        return {
            "scenario": self.name,
            "hash": self.hash,
            "seed": self.seed,
            "version": __version__,
            "status": self.status,
            "error": self.error,
            "solver": self.solver,
            "predictions": self.predictions,
            "diagnostics": [
                {
                    "kind": r.kind,
                    "base": r.base,
                    "status": r.status,
                    "error": r.error,
                    "metrics": r.metrics,
                    "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in r.checks],
                }
                for r in self.results
            ],
        }


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{CSV_DIGITS}g}"


def csv_text(res: Result, header: dict) -> str:
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines += [f"# {k}: {v}" for k, v in res.notes.items()]
    cols = (res.abscissa,) + tuple(res.columns)
    lines.append(",".join(cols))
    x = res.table["_x"]
    for i in range(len(x)):
        lines.append(",".join([fmt(x[i])] + [fmt(res.table[c][i]) for c in res.columns]))
    return "\n".join(lines) + "\n"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dump_json(obj, path: Path):
    path.write_text(json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n")


def csv_name(res: Result) -> str:
    return f"{res.kind}_{res.base}.csv"


# ------------------------------------------------------------- figures


def figures(report: Report, out: Path, plan=None, profiles: dict | None = None) -> list[Path]:
    """One PNG per tabulated diagnostic, plus the diagram with centered sections."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out.mkdir(parents=True, exist_ok=True)
    made = []
    meta = {"Software": None}
    for res in report.results:
        if res.abscissa is None or res.error is not None:
            continue
        x = res.table["_x"]
        fig, ax = plt.subplots(1, 2, figsize=(9, 3.6))
        if res.kind == "chi":
            ax[0].loglog(x, res.table["mass"], "o-", ms=3)
            ax[0].set_ylabel("mass of D_r")
            ax[1].semilogx(x, res.table["chi"], "o-", ms=3)
            ax[1].set_ylabel("chi(r)")
            for a in ax:
                a.set_xlabel("r")
        elif res.kind == "sandwich":
            area = res.table["section_area"]
            ax[0].semilogx(x, res.table["inner_defect"] / area, "o-", ms=3, label="half section outside ball")
            ax[0].semilogx(x, res.table["outer_defect"] / area, "s-", ms=3, label="ball outside section")
            ax[0].set_ylabel("relative defect")
            ax[0].legend(fontsize=7)
            ax[1].loglog(x, area, "o-", ms=3)
            ax[1].set_ylabel("area of S_{r^2}")
            for a in ax:
                a.set_xlabel("r")
        else:
            major, minor = res.table["axis_major"], res.table["axis_minor"]
            ax[0].loglog(x, major, "o", ms=3, label="major")
            ax[0].loglog(x, minor, "s", ms=3, label="minor")
            for key, col in (("slope_major", major), ("slope_minor", minor)):
                s = res.metrics.get(key)
                ok = np.isfinite(col) & (col > 0)
                if s is not None and ok.sum() >= 2:
                    lx = np.log(x[ok])
                    c = np.mean(np.log(col[ok]) - s * lx)
                    ax[0].loglog(x[ok], np.exp(c + s * lx), "-", lw=0.8, label=f"{key.split('_')[1]} slope {s:.3f}")
            ax[0].set_xlabel("h")
            ax[0].set_ylabel("ellipse semi-axis")
            ax[0].legend(fontsize=7)
            ax[1].semilogx(x, res.table["eccentricity"], "o-", ms=3)
            ax[1].set_xlabel("h")
            ax[1].set_ylabel("eccentricity")
        fig.suptitle(f"{report.name}: {res.kind} at {res.base} [{res.status}]", fontsize=9)
        fig.tight_layout()
        p = out / f"{res.kind}_{res.base}.png"
        fig.savefig(p, dpi=110, metadata=meta)
        plt.close(fig)
        made.append(p)
    if plan is not None:
        from matplotlib.collections import PolyCollection

        fig, ax = plt.subplots(figsize=(5, 5))
        cells = [c.vertices for c in plan.cells if len(c)]
        ax.add_collection(PolyCollection(cells, facecolors="none", edgecolors="0.6", linewidths=0.2))
        ax.autoscale_view()
        for label, prof in (profiles or {}).items():
            for poly, ok in zip(prof.polygons, prof.trusted):
                if len(poly) and ok:
                    v = np.vstack([poly.vertices, poly.vertices[:1]])
                    ax.plot(v[:, 0], v[:, 1], lw=0.7)
        ax.set_aspect("equal")
        ax.set_title(f"{report.name}: Laguerre cells and centered sections", fontsize=9)
        p = out / "diagram.png"
        fig.savefig(p, dpi=130, metadata=meta)
        plt.close(fig)
        made.append(p)
    return made
