"""Sections, extrinsic balls and scaling diagnostics of a discrete Brenier potential.

Everything is exact polygon arithmetic: ``u`` is a maximum of affine
functions, so sub-level sets of ``u`` minus an affine function are
intersections of half-planes, and extrinsic balls are one half-plane clip
per Laguerre cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import chi_exponent
from .convex2d import (
    TOL_GEOM,
    Ellipse,
    HalfPlane,
    Polygon,
    Sector,
    area_centroid,
    clip,
    convex_hull,
    halfplane_intersection,
    intersect,
    lowner_ellipse,
    point_polygon_distance,
    tangent_cone,
)
from .errors import (
    CenteringFailure,
    DegenerateRegion,
    FitDomainError,
    PreconditionError,
    RadiusTooSmall,
    WindowTooNarrow,
)
from .measures import Density, Quadrature, integrate_many
from .sdot import TransportPlan, cell_masses, potential_eval

SLOPE_TOL = 0.07
ECC_CAP = 3.0
SLACK = 0.05
CENTER_TOL = 1e-3
MAX_CENTER_ITER = 60
CENTER_DAMPING = 0.7
MIN_CELLS = 30
H_MAX_FRACTION = 0.1

ROUND = "ROUND"
NON_ROUND = "NON_ROUND"
INCONCLUSIVE = "INCONCLUSIVE"


# ----------------------------------------------------------- base points


@dataclass(frozen=True)
class BasePoint:
    """Point ``x0`` with ``u0 = u(x0)`` and a chosen subgradient ``p0``."""

    x0: np.ndarray
    u0: float
    p0: np.ndarray
    how: str = "fan"


def base_point(plan: TransportPlan, x0, *, pin_origin: bool = False, check_samples: int = 1000, seed: int = 0) -> BasePoint:
    """Base point with a subgradient taken from the cells touching ``x0``.

    With ``pin_origin`` the slope is the site at the origin, provided its cell
    reaches ``x0``; otherwise the mass-weighted mean of the gradients of all
    cells touching ``x0`` (any convex combination of them is a subgradient).
    """
    x0 = np.asarray(x0, dtype=float).reshape(2)
    if point_polygon_distance(x0, plan.source) > 1e-7:
        raise PreconditionError(f"base point {x0.tolist()} lies outside the source domain")
    act = plan.active()
    vals = plan.sites[act] @ x0 - plan.weights[act]
    u0 = float(vals.max())
    scale = 1.0 + float(np.abs(plan.sites).max()) * (1.0 + float(np.abs(x0).max()))
    touching = act[vals >= u0 - 1e-9 * scale]
    how = "fan"
    p0 = None
    if pin_origin:
        at_origin = np.flatnonzero(np.all(plan.sites == 0.0, axis=1))
        hit = [i for i in at_origin if i in set(touching.tolist())]
        if hit:
            p0 = np.zeros(2)
            how = "pinned"
    if p0 is None:
        m = plan.cloud.masses[touching]
        p0 = (plan.sites[touching] * m[:, None]).sum(axis=0) / m.sum()
    bp = BasePoint(x0, u0, p0, how)
    if check_samples:
        _check_subgradient(plan, bp, check_samples, seed)
    return bp


def _check_subgradient(plan, bp: BasePoint, samples: int, seed: int):
    rng = np.random.default_rng(seed)
    lo, hi = plan.source.bbox()
    pts = lo + (hi - lo) * rng.random((4 * samples, 2))
    pts = pts[plan.source.contains(pts)][:samples]
    u = potential_eval(plan, pts)[0]
    gap = u - bp.u0 - (pts - bp.x0) @ bp.p0
    scale = 1.0 + abs(bp.u0) + float(np.abs(u).max(initial=0.0))
    if gap.size and gap.min() < -1e-9 * scale:
        raise PreconditionError(f"p0 is not a subgradient at x0 (defect {gap.min():.3e})")


def excess(plan: TransportPlan, base: BasePoint, x) -> np.ndarray:
    """``u(x) - u0 - <p0, x - x0>`` (non-negative on the source)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    return potential_eval(plan, pts)[0] - base.u0 - (pts - base.x0) @ base.p0


def _cell_excess_min(plan: TransportPlan, base: BasePoint, p=None) -> np.ndarray:
    """Per site, the smallest excess over its cell (inf for empty cells)."""
    p = base.p0 if p is None else p
    verts, ptr = plan.diagram.vertex_arrays()
    n = len(plan.sites)
    out = np.full(n, np.inf)
    if len(verts) == 0:
        return out
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(n), counts)
    y = plan.sites[owner]
    w = np.einsum("ij,ij->i", verts - base.x0, y - p) + y @ base.x0 - plan.weights[owner] - base.u0
    nz = counts > 0
    out[nz] = np.minimum.reduceat(w, ptr[:-1][nz])
    return out


def cells_meeting(plan: TransportPlan, base: BasePoint, h: float, p=None) -> np.ndarray:
    """Indices of sites whose cells meet ``{x in source : excess(x) <= h}``."""
    return np.flatnonzero(_cell_excess_min(plan, base, p) <= h)


def trusted_window(plan: TransportPlan, base: BasePoint, *, min_cells: int = MIN_CELLS, h_max_fraction: float = H_MAX_FRACTION):
    """``(h_min, h_max)``: sections below ``h_min`` meet fewer than ``min_cells`` cells;
    ``h_max`` is a fraction of the oscillation of ``u`` over the source."""
    wmin = np.sort(_cell_excess_min(plan, base))
    wmin = wmin[np.isfinite(wmin)]
    if len(wmin) < min_cells:
        raise WindowTooNarrow(f"only {len(wmin)} non-empty cells; need {min_cells}")
    verts, _ = plan.diagram.vertex_arrays()
    u = potential_eval(plan, verts)[0]
    osc = float(u.max() - u.min())
    return float(max(wmin[min_cells - 1], 0.0)), h_max_fraction * osc


def _cells_meeting_polygon(plan: TransportPlan, poly: Polygon) -> int:
    lo, hi = poly.bbox()
    hps = poly.halfplanes()
    count = 0
    for cell in plan.cells:
        if len(cell) == 0:
            continue
        clo, chi_ = cell.bbox()
        if np.any(clo > hi + TOL_GEOM) or np.any(chi_ < lo - TOL_GEOM):
            continue
        part = cell
        for hp in hps:
            part = clip(part, hp)
            if len(part) == 0:
                break
        count += len(part) > 0
    return count


def radius_window(plan: TransportPlan, base: BasePoint, *, min_cells: int = MIN_CELLS, h_max_fraction: float = H_MAX_FRACTION):
    """``(r_min, r_max)`` for extrinsic balls.

    ``D_r`` always contains the half-scaled section ``½S_{r^2}``; ``r_min`` is
    the smallest radius at which that inner set alone meets ``min_cells``
    cells, the ball analogue of the height window.  ``r_max^2`` is the top of
    the height window, since ``D_r`` lies inside ``S_{r^2}``.
    """
    h_lo, h_hi = trusted_window(plan, base, min_cells=min_cells, h_max_fraction=h_max_fraction)
    r_hi = math.sqrt(h_hi)

    def enough(r):
        s, _ = section(plan, base, r * r)
        return _cells_meeting_polygon(plan, s.scaled(0.5, about=base.x0)) >= min_cells

    lo, hi = math.sqrt(h_lo), r_hi
    if not enough(hi):
        raise WindowTooNarrow(f"half sections meet fewer than {min_cells} cells below r = {hi:.3g}")
    if enough(lo):
        return lo, r_hi
    for _ in range(30):
        mid = math.sqrt(lo * hi)
        if enough(mid):
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.0 + 1e-3:
            break
    return hi, r_hi


# ----------------------------------------------------------- sections


def _frame(source: Polygon, grow: float):
    lo, hi = source.bbox()
    c = 0.5 * (lo + hi)
    r = 0.5 * float(np.max(hi - lo)) * grow
    normals = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    offsets = np.array([c[0] + r, c[1] + r, -(c[0] - r), -(c[1] - r)])
    return normals, offsets


def _plane_section(plan, base, h, p, grow):
    """``{w_p <= h}`` over the extension of ``u`` from the non-empty cells, inside a box.

    Returns vertices, edge labels (site index, or ``-1 - k`` for box side
    ``k``) and the constraint arrays.
    """
    act = plan.active()
    y = plan.sites[act]
    x0 = base.x0
    normals = y - p
    c = y @ x0 - plan.weights[act] - base.u0
    offsets = h - c + normals @ x0
    bn, bo = _frame(plan.source, grow)
    verts, lab = halfplane_intersection(np.vstack([normals, bn]), np.concatenate([offsets, bo]), x0)
    m = len(act)
    labels = np.where(lab < m, act[np.minimum(lab, m - 1)], -1 - (lab - m))
    return verts, labels


def section(plan: TransportPlan, base: BasePoint, h: float) -> tuple[Polygon, bool]:
    """``S_h = {x in source : u(x) - u0 - <p0, x - x0> <= h}`` and a saturation flag."""
    if not h > 0:
        raise PreconditionError("section height must be positive")
    verts, _ = _plane_section(plan, base, h, base.p0, 1.5)
    poly = Polygon(verts)
    src = plan.source
    for hp in src.halfplanes():
        poly = clip(poly, hp)
    saturated = abs(poly.area - src.area) <= TOL_GEOM * src.area
    return poly, saturated


def _boundary_moment(verts, labels, sites, p, x0):
    """``int_{boundary} (x - x0)(x - x0)^T / |grad w| ds`` over site edges."""
    a = verts - x0
    b = np.roll(verts, -1, axis=0) - x0
    sel = labels >= 0
    a, b = a[sel], b[sel]
    g = np.linalg.norm(sites[labels[sel]] - p, axis=1)
    length = np.linalg.norm(b - a, axis=1)
    wt = np.where(g > 0, length / np.where(g > 0, g, 1.0), 0.0)
    m = (
        np.einsum("k,ki,kj->ij", wt, a, a) / 3.0
        + np.einsum("k,ki,kj->ij", wt, a, b) / 6.0
        + np.einsum("k,ki,kj->ij", wt, b, a) / 6.0
        + np.einsum("k,ki,kj->ij", wt, b, b) / 3.0
    )
    return m


@dataclass(frozen=True)
class CenteredSection:
    polygon: Polygon
    slope: np.ndarray
    iterations: int
    offset: float  # |centroid - x0| / diam


def centered_section(
    plan: TransportPlan,
    x0,
    h: float,
    *,
    base: BasePoint | None = None,
    p_init=None,
    center_tol: float = CENTER_TOL,
    max_iter: int = MAX_CENTER_ITER,
    damping: float = CENTER_DAMPING,
    grow: float = 4.0,
) -> CenteredSection:
    """Section of the extended potential whose centroid is ``x0``.

    The slope ``p`` minimises the convex function ``G(p) = int (h - w_p)_+``
    whose gradient is ``|S_p| (centroid(S_p) - x0)``; Newton steps use the
    boundary moment ``int (x - x0)(x - x0)^T / |grad w_p|`` as Hessian and are
    shortened by ``damping`` until the gradient shrinks.
    """
    if not h > 0:
        raise PreconditionError("section height must be positive")
    if base is None:
        base = base_point(plan, x0, check_samples=0)
    x0 = base.x0
    p = np.array(base.p0 if p_init is None else p_init, dtype=float)

    def evaluate(p):
        verts, labels = _plane_section(plan, base, h, p, grow)
        poly = Polygon._trusted(verts)
        if np.any(labels < 0):
            raise CenteringFailure("section reaches the bounding box", p, poly)
        area, cent = area_centroid(poly)
        return verts, labels, poly, area, cent

    # a slope on the boundary of the site hull leaves the section unbounded;
    # pull the starting slope towards the mean site until the section closes
    ybar = plan.sites[plan.active()].mean(axis=0)
    for s in (0.0,) + tuple(2.0 ** -np.arange(10, -1, -1)):
        try:
            verts, labels, poly, area, cent = evaluate(p + s * (ybar - p))
        except CenteringFailure as exc:
            failure = exc
            continue
        p = p + s * (ybar - p)
        break
    else:
        raise failure
    for it in range(max_iter + 1):
        diam = poly.diameter()
        err = float(np.linalg.norm(cent - x0))
        if err <= center_tol * diam:
            return CenteredSection(Polygon(verts), p, it, err / diam)
        if it == max_iter:
            break
        grad = area * (cent - x0)
        hess = _boundary_moment(verts, labels, plan.sites, p, x0)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            raise CenteringFailure("singular boundary moment", p, poly) from exc
        t = 1.0
        gnorm = float(np.linalg.norm(grad))
        for _ in range(40):
            trial = p + t * step
            try:
                out = evaluate(trial)
            except CenteringFailure:
                out = None
            if out is not None and np.linalg.norm(out[3] * (out[4] - x0)) < (1 - 0.25 * t) * gnorm:
                break
            t *= damping
        else:
            raise CenteringFailure("line search failed", p, poly)
        p = trial
        verts, labels, poly, area, cent = out
    raise CenteringFailure(f"centering did not converge in {max_iter} iterations", p, poly)


def v_section_proxy(plan: TransportPlan, base: BasePoint, h: float) -> Polygon:
    """Convex hull of the sites whose cells meet ``S_h(u, x0)``."""
    idx = cells_meeting(plan, base, h)
    return convex_hull(plan.sites[idx])


# ----------------------------------------------------- extrinsic balls


def extrinsic_ball(plan: TransportPlan, base: BasePoint, r: float) -> list[tuple[int, Polygon]]:
    """Pieces ``cell_i ∩ {<x - x0, y_i - p0> <= r^2}`` for every cell meeting ``D_r``."""
    return _ball_pieces(plan, base, r)[0]


def _ball_pieces(plan, base, r):
    verts, ptr = plan.diagram.vertex_arrays()
    n = len(plan.sites)
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(n), counts)
    lin = np.einsum("ij,ij->i", verts - base.x0, plan.sites[owner] - base.p0)
    nz = np.flatnonzero(counts > 0)
    lo = np.minimum.reduceat(lin, ptr[:-1][nz])
    hi = np.maximum.reduceat(lin, ptr[:-1][nz])
    r2 = r * r
    full = nz[hi <= r2]
    part = nz[(lo <= r2) & (hi > r2)]
    pieces = [(int(i), plan.cells[i]) for i in full]
    for i in part:
        hp = HalfPlane(plan.sites[i] - base.p0, r2 + float((plan.sites[i] - base.p0) @ base.x0))
        piece = clip(plan.cells[i], hp)
        if len(piece):
            pieces.append((int(i), piece))
    pieces.sort(key=lambda t: t[0])
    return pieces, full, part


def ball_mass(plan: TransportPlan, base: BasePoint, r: float, g: Density | None = None, q: Quadrature | None = None, _cell_mass=None) -> float:
    g = plan.source_density if g is None else g
    pieces, full, part = _ball_pieces(plan, base, r)
    cm = cell_masses(plan.diagram, g, q) if _cell_mass is None else _cell_mass
    total = float(cm[full].sum())
    partial = [p for i, p in pieces if i in set(part.tolist())]
    if partial:
        total += float(integrate_many(g, partial, q).sum())
    return total


# ---------------------------------------------------------------- chi


@dataclass(frozen=True)
class HomogeneousPotential:
    """Analytic ``u`` homogeneous of ``degree`` on a sector, for exact chi traces.

    ``u_dir(theta)`` is ``u`` on the unit circle; the density is
    ``c |x|^l a(theta)`` via ``density_dir``.
    """

    sector: Sector
    u_dir: object
    degree: float = 2.0

    @classmethod
    def quadratic(cls, q, sector: Sector) -> "HomogeneousPotential":
        q = np.asarray(q, dtype=float)

        def u_dir(t):
            e = np.stack([np.cos(t), np.sin(t)], axis=-1)
            return 0.5 * np.einsum("...i,ij,...j->...", e, q, e)

        return cls(sector, u_dir, 2.0)

    def ball_mass(self, r: float, l: float = 0.0, density_dir=None, nodes: int = 64) -> float:
        # D_r = {x . grad u(x) <= r^2} = {degree * u(x) <= r^2}; radial extent
        # rho(theta) = (r^2 / (degree u(e_theta)))^(1/degree)
        gx, gw = np.polynomial.legendre.leggauss(nodes)
        lo, hi = self.sector.theta_lo, self.sector.theta_hi
        t = 0.5 * (hi - lo) * gx + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * gw
        rho = (r * r / (self.degree * self.u_dir(t))) ** (1.0 / self.degree)
        a = np.ones_like(t) if density_dir is None else density_dir(t)
        return float(np.sum(w * a * rho ** (2.0 + l)) / (2.0 + l))


@dataclass(frozen=True)
class MonotonicityTrace:
    radii: np.ndarray
    masses: np.ndarray
    chi: np.ndarray
    exponent_used: float
    violations: list = field(default_factory=list)
    slack: float = SLACK

    @property
    def relative_variation(self) -> float:
        return float((self.chi.max() - self.chi.min()) / self.chi.max())


def chi_trace(
    plan,
    base: BasePoint | None,
    g: Density | None,
    l: float,
    k: float,
    radii,
    *,
    slack: float = SLACK,
    n: int = 2,
    q: Quadrature | None = None,
    density_dir=None,
) -> MonotonicityTrace:
    """``chi(r) = r^{-e} mu(D_r)`` with ``e = 2(n+l) / (1 + (n+l)/(n+k))``.

    ``plan`` is either a solved :class:`TransportPlan` or a
    :class:`HomogeneousPotential` (then ``base`` and ``g`` are unused and the
    angular factor of the density is ``density_dir``).
    """
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise PreconditionError("radii must be positive and strictly increasing")
    e = chi_exponent(n, l, k)
    if isinstance(plan, HomogeneousPotential):
        masses = np.array([plan.ball_mass(r, l, density_dir) for r in radii])
    else:
        g = plan.source_density if g is None else g
        cm = cell_masses(plan.diagram, g, q)
        masses = np.array([ball_mass(plan, base, r, g, q, _cell_mass=cm) for r in radii])
    if masses[0] <= 0:
        raise RadiusTooSmall(f"D_r is empty at r = {radii[0]:.3g}")
    chi = radii ** (-e) * masses
    viol = [(j, float(chi[j + 1] / chi[j] - 1.0)) for j in range(len(chi) - 1) if chi[j + 1] > chi[j] * (1.0 + slack)]
    return MonotonicityTrace(radii, masses, chi, e, viol, slack)


# ------------------------------------------------------------ sandwich


def sandwich_defects(plan: TransportPlan, base: BasePoint, r: float) -> tuple[float, float, float]:
    """Areas of ``½S ∖ D_r`` and ``D_r ∖ S`` with ``S = S_{r^2}``, and ``area(S)``.

    ``½S`` is the dilation of ``S`` about ``x0`` by one half.
    """
    s, _ = section(plan, base, r * r)
    half = s.scaled(0.5, about=base.x0)
    half_hp = half.halfplanes()
    s_hp = s.halfplanes()
    pieces, _, _ = _ball_pieces(plan, base, r)
    inside = {i for i, _ in pieces}
    out_half = 0.0
    # part of ½S not covered: within each cell meeting ½S, the complement of the ball piece
    lo, hi = half.bbox()
    for i, cell in enumerate(plan.cells):
        if len(cell) == 0:
            continue
        clo, chi_ = cell.bbox()
        if np.any(clo > hi + TOL_GEOM) or np.any(chi_ < lo - TOL_GEOM):
            continue
        part = cell
        for hp in half_hp:
            part = clip(part, hp)
            if len(part) == 0:
                break
        if len(part) == 0:
            continue
        d = plan.sites[i] - base.p0
        if not np.any(d):
            continue  # the ball contains the whole cell
        miss = clip(part, HalfPlane(-d, -(r * r + float(d @ base.x0))))
        out_half += miss.area
    out_ball = 0.0
    for i, piece in pieces:
        cut = piece
        for hp in s_hp:
            cut = clip(cut, hp)
            if len(cut) == 0:
                break
        out_ball += piece.area - cut.area
    return out_half, max(out_ball, 0.0), s.area


# ----------------------------------------------------------- fitting


def exponent_fit(xs, ys, window=None) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and twice its standard error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if window is not None:
        sel = (x >= window[0]) & (x <= window[1])
        x, y = x[sel], y[sel]
    if len(x) < 4:
        raise FitDomainError(f"need at least 4 samples, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitDomainError("log-log fit needs positive finite data")
    lx, ly = np.log(x), np.log(y)
    a = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    dof = len(x) - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    se = math.sqrt(float(resid @ resid) / dof / sxx) if sxx > 0 else math.inf
    return float(coef[0]), 2.0 * se


# ---------------------------------------------------------- profiles


@dataclass(frozen=True)
class SectionProfile:
    heights: np.ndarray
    polygons: tuple
    ellipses: tuple
    axis_major: np.ndarray
    axis_minor: np.ndarray
    major_angle: np.ndarray  # direction of the major axis, radians in [0, pi)
    masses: np.ndarray
    cell_counts: np.ndarray
    trusted: np.ndarray
    slopes: tuple  # ((major, half_width), (minor, half_width))
    predicted: float | None
    verdict: str
    failures: tuple = ()
    tilts: np.ndarray | None = None  # slope p of each centered section, NaN on failure

    @property
    def eccentricities(self) -> np.ndarray:
        return self.axis_major / self.axis_minor


def ellipse_axes(e: Ellipse):
    lengths, vec = e.axes()
    major = vec[:, 0]
    ang = math.atan2(major[1], major[0]) % math.pi
    return float(lengths[0]), float(lengths[1]), ang


def geometric_heights(lo: float, hi: float, count: int = 12) -> np.ndarray:
    if not 0 < lo < hi:
        raise WindowTooNarrow(f"empty height window [{lo:.3g}, {hi:.3g}]")
    return np.geomspace(lo, hi, count)


def _lowest_centered_height(plan, base, h, min_cells, center_tol, max_iter, damping, shrink=1.2, steps=12) -> float:
    """Walk ``h`` down while the centered section still meets ``min_cells`` cells.

    The trusted window is set with the uncentered section; the centered one
    at the same height usually meets more cells, so the window can start lower.
    """
    p = None
    best = h
    for _ in range(steps):
        try:
            cs = centered_section(plan, base.x0, h, base=base, p_init=p, center_tol=center_tol, max_iter=max_iter, damping=damping)
        except CenteringFailure:
            break
        p = cs.slope
        if len(cells_meeting(plan, BasePoint(base.x0, base.u0, p), h, p)) < min_cells:
            break
        best = h
        h /= shrink
    return best


def roundness_profile(
    plan: TransportPlan,
    base: BasePoint,
    heights=None,
    *,
    beta: float | None = 0.5,
    ecc_cap: float = ECC_CAP,
    slope_tol: float = SLOPE_TOL,
    min_cells: int = MIN_CELLS,
    h_max_fraction: float = H_MAX_FRACTION,
    center_tol: float = CENTER_TOL,
    max_center_iter: int = MAX_CENTER_ITER,
    damping: float = CENTER_DAMPING,
    count: int = 12,
) -> SectionProfile:
    """Centered sections over a range of heights, with axis-slope fits and a verdict."""
    h_lo, h_hi = trusted_window(plan, base, min_cells=min_cells, h_max_fraction=h_max_fraction)
    if heights is None:
        h_lo = _lowest_centered_height(plan, base, h_lo, min_cells, center_tol, max_center_iter, damping)
        hs = geometric_heights(h_lo, h_hi, count)
    else:
        hs = np.asarray(heights, dtype=float)
    polys, ells, major, minor, ang, mass, ncell, ok, fails, tilts = [], [], [], [], [], [], [], [], [], []
    p = None
    src = plan.source
    cm = cell_masses(plan.diagram, plan.source_density)
    for h in hs:
        try:
            cs = centered_section(plan, base.x0, h, base=base, p_init=p, center_tol=center_tol, max_iter=max_center_iter, damping=damping)
        except CenteringFailure as exc:
            fails.append((float(h), str(exc)))
            polys.append(Polygon.empty())
            ells.append(None)
            major.append(np.nan)
            minor.append(np.nan)
            ang.append(np.nan)
            mass.append(np.nan)
            ncell.append(0)
            ok.append(False)
            tilts.append(np.full(2, np.nan))
            continue
        p = cs.slope
        tilts.append(np.asarray(p, dtype=float))
        e = lowner_ellipse(cs.polygon)
        a, b, t = ellipse_axes(e)
        inside = cells_meeting(plan, BasePoint(base.x0, base.u0, cs.slope), h, cs.slope)
        polys.append(cs.polygon)
        ells.append(e)
        major.append(a)
        minor.append(b)
        ang.append(t)
        mass.append(float(integrate_many(plan.source_density, [intersect(cs.polygon, src)])[0]))
        ncell.append(len(inside))
        ok.append(len(inside) >= min_cells and h <= h_hi * (1 + 1e-12))
    major = np.array(major)
    minor = np.array(minor)
    ok = np.array(ok)
    if ok.sum() < 4:
        raise WindowTooNarrow(f"only {int(ok.sum())} trusted heights")
    s_major = exponent_fit(hs[ok], major[ok])
    s_minor = exponent_fit(hs[ok], minor[ok])
    ecc = major / minor
    verdict = INCONCLUSIVE
    tr = np.flatnonzero(ok)
    round_shape = float(np.max(ecc[ok])) <= ecc_cap
    if beta is not None and round_shape and abs(s_major[0] - beta) <= slope_tol and abs(s_minor[0] - beta) <= slope_tol:
        verdict = ROUND
    elif ecc[tr[0]] >= 2.0 * ecc[tr[-1]]:
        verdict = NON_ROUND
    return SectionProfile(
        hs,
        tuple(polys),
        tuple(ells),
        major,
        minor,
        np.array(ang),
        np.array(mass),
        np.array(ncell),
        ok,
        (s_major, s_minor),
        beta,
        verdict,
        tuple(fails),
        np.array(tilts).reshape(-1, 2),
    )


def proxy_profile(plan: TransportPlan, base: BasePoint, heights, tilts=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Axis lengths (major, minor) and site counts of the gradient-image hulls.

    With ``tilts`` (one slope per height, e.g. ``SectionProfile.tilts``) the
    hull is taken over the cells meeting the centered section instead.
    """
    major, minor, count = [], [], []
    for i, h in enumerate(heights):
        if tilts is None:
            idx = cells_meeting(plan, base, h)
        else:
            p = np.asarray(tilts[i], dtype=float)
            idx = cells_meeting(plan, BasePoint(base.x0, base.u0, p), h, p) if np.all(np.isfinite(p)) else np.array([], dtype=int)
        count.append(len(idx))
        try:
            e = lowner_ellipse(plan.sites[idx])
            a, b, _ = ellipse_axes(e)
        except DegenerateRegion:
            a = b = np.nan
        major.append(a)
        minor.append(b)
    return np.array(major), np.array(minor), np.array(count)


# ------------------------------------------------------------ blow-ups


@dataclass(frozen=True)
class Rescaled:
    """``u~(z) = (u(x0 + A^{-1} z) - u(x0) - <p, A^{-1} z>) / h``."""

    plan: TransportPlan
    x0: np.ndarray
    u0: float
    slope: np.ndarray
    normalization: np.ndarray
    h: float
    center: np.ndarray

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        x = self.x0 + np.linalg.solve(self.normalization, z.T).T
        u = _extended_u(self.plan, x)
        return (u - self.u0 - (x - self.x0) @ self.slope) / self.h

    def domain(self) -> Polygon:
        """The rescaled source ``A (source - x0)``."""
        return self.plan.source.transformed(self.normalization, -self.normalization @ self.x0)


def _extended_u(plan: TransportPlan, x) -> np.ndarray:
    act = plan.active()
    return np.max(np.atleast_2d(x) @ plan.sites[act].T - plan.weights[act], axis=1)


def blowup_rescale(plan: TransportPlan, x0, h: float, *, base: BasePoint | None = None, **centering) -> Rescaled:
    if base is None:
        base = base_point(plan, x0, check_samples=0)
    cs = centered_section(plan, base.x0, h, base=base, **centering)
    e = lowner_ellipse(cs.polygon)
    a = e.normalization()
    u0 = float(_extended_u(plan, base.x0)[0])
    return Rescaled(plan, base.x0, u0, cs.slope, a, h, a @ (e.center - base.x0))


def homogeneity_defect(r: Rescaled, degree: float, t: float = 0.5, samples: int = 2000, seed: int = 0) -> float:
    """``max |u~(t z) - t^degree u~(z)|`` over samples of the unit disk inside the rescaled source."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * math.pi, samples)
    rad = np.sqrt(rng.random(samples))
    z = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    dom = r.domain()
    z = z[dom.contains(z) & dom.contains(t * z)]
    if len(z) == 0:
        raise PreconditionError("no samples inside the rescaled domain")
    return float(np.max(np.abs(r(t * z) - t**degree * r(z))))


# ------------------------------------------------------------ obliqueness


def obliqueness_check(source: Polygon, corner_x0, target: Polygon, corner_y0) -> float:
    """Cosine between the inner normals (tangent-sector bisectors) at matched corners."""
    a = tangent_cone(source, corner_x0).bisector
    b = tangent_cone(target, corner_y0).bisector
    return float(a @ b)
