"""Semi-discrete optimal transport in the plane.

The discrete Brenier potential is ``u(x) = max_i (<x, y_i> - psi_i)``; its
Laguerre cells ``{x : i attains the max}`` partition the source polygon and
the dual weights ``psi`` are found by damped Newton on the cell masses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .convex2d import TOL_GEOM, Polygon, clip_labeled, point_polygon_distance
from .errors import NonConvergence, PreconditionError, SamplingFailure, SingularHessian
from .measures import Density, Quadrature, Uniform, first_moments, integrate_many, integrate_segments

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-7
MAX_NEWTON = 100
MAX_HALVINGS = 20
TOL_MASS = 1e-9


@dataclass(frozen=True, eq=False)
class TargetCloud:
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        m = np.array(self.masses, dtype=float).reshape(-1)
        if len(pts) != len(m):
            raise PreconditionError("points and masses differ in length")
        if np.any(m <= 0):
            raise PreconditionError("target masses must be positive")
        pts.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def min_separation(self) -> float:
        if len(self.points) < 2:
            return math.inf
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return float(d[:, 1].min())


# ------------------------------------------------------------ diagrams


@dataclass(frozen=True, eq=False)
class LaguerreDiagram:
    """Cells of a Laguerre diagram restricted to a source polygon.

    ``labels[i][k]`` names what the edge from vertex ``k`` to ``k+1`` of cell
    ``i`` lies on: a neighbouring site index (>= 0) or a source edge
    (``-1 - e``).
    """

    cells: tuple
    labels: tuple
    areas: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def nonempty(self) -> np.ndarray:
        return self.areas > TOL_GEOM**2

    def shared_edges(self):
        """Arrays (i, j, a, b): cell ``i``'s boundary piece ``a -> b`` shared with site ``j``."""
        I, J, A, B = [], [], [], []
        for i, (cell, lab) in enumerate(zip(self.cells, self.labels)):
            if len(lab) == 0:
                continue
            lab = np.asarray(lab)
            sel = np.flatnonzero(lab >= 0)
            if len(sel) == 0:
                continue
            v = cell.vertices
            I.append(np.full(len(sel), i))
            J.append(lab[sel])
            A.append(v[sel])
            B.append(v[(sel + 1) % len(v)])
        if not I:
            z = np.zeros(0, dtype=int)
            return z, z, np.zeros((0, 2)), np.zeros((0, 2))
        return np.concatenate(I), np.concatenate(J), np.concatenate(A), np.concatenate(B)

    def vertex_arrays(self):
        """Concatenated cell vertices with CSR offsets (for vectorised tests)."""
        counts = np.array([len(c.vertices) for c in self.cells])
        ptr = np.concatenate([[0], np.cumsum(counts)])
        verts = np.concatenate([c.vertices for c in self.cells if len(c.vertices)]) if ptr[-1] else np.zeros((0, 2))
        return verts, ptr


def _neighbours(points: np.ndarray, weights: np.ndarray):
    """Adjacency of the regular triangulation dual to the Laguerre diagram.

    Lower convex hull of the lifted points ``(y_i, psi_i)``.  Returns CSR
    arrays, or ``None`` when the lifting is degenerate.
    """
    n = len(points)
    if n < 5:
        return None
    lifted = np.column_stack([points, weights])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        return None
    lower = hull.simplices[hull.equations[:, 2] < -1e-12]
    if len(lower) == 0:
        return None
    e = np.concatenate([lower[:, [0, 1]], lower[:, [1, 2]], lower[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    e = np.unique(e, axis=0)
    ptr = np.searchsorted(e[:, 0], np.arange(n + 1))
    return ptr, e[:, 1]


def laguerre_diagram(source: Polygon, cloud, weights) -> LaguerreDiagram:
    """Cells ``source ∩ {x : <x, y_i> - psi_i >= <x, y_j> - psi_j  for all j}``."""
    pts = cloud.points if isinstance(cloud, TargetCloud) else np.asarray(cloud, dtype=float).reshape(-1, 2)
    psi = np.asarray(weights, dtype=float).reshape(-1)
    if len(psi) != len(pts):
        raise PreconditionError("one weight per site is required")
    if not np.all(np.isfinite(psi)):
        raise PreconditionError("weights must be finite")
    n = len(pts)
    sv = source.vertices
    base_x = sv[:, 0].tolist()
    base_y = sv[:, 1].tolist()
    base_l = [-1 - e for e in range(len(sv))]
    nb = _neighbours(pts, psi)
    px, py, pw = pts[:, 0].tolist(), pts[:, 1].tolist(), psi.tolist()
    cells, labels, areas = [], [], np.zeros(n)
    everyone = list(range(n))
    for i in range(n):
        if nb is None:
            others = everyone
        else:
            others = nb[1][nb[0][i] : nb[0][i + 1]].tolist()
            if not others and n > 1:
                cells.append(Polygon.empty())
                labels.append(())
                continue
        xs, ys, ls = base_x, base_y, base_l
        xi, yi, wi = px[i], py[i], pw[i]
        for j in others:
            if j == i:
                continue
            xs, ys, ls = clip_labeled(xs, ys, ls, px[j] - xi, py[j] - yi, pw[j] - wi, j)
            if not xs:
                break
        if not xs:
            cells.append(Polygon.empty())
            labels.append(())
            continue
        x0, y0 = xs[0], ys[0]
        a2 = 0.0
        for k in range(1, len(xs) - 1):
            a2 += (xs[k] - x0) * (ys[k + 1] - y0) - (xs[k + 1] - x0) * (ys[k] - y0)
        areas[i] = 0.5 * a2
        cells.append(Polygon._trusted(np.column_stack([xs, ys])))
        labels.append(tuple(ls))
    return LaguerreDiagram(tuple(cells), tuple(labels), areas)


def cell_masses(diagram: LaguerreDiagram, g: Density, q: Quadrature | None = None) -> np.ndarray:
    if isinstance(g, Uniform) and g.support is None:
        return g.c * diagram.areas
    return integrate_many(g, diagram.cells, q)


def mass_hessian(diagram: LaguerreDiagram, points: np.ndarray, g: Density, n: int | None = None) -> sp.csr_matrix:
    """Derivative of cell masses w.r.t. the weights.

    Off-diagonal ``H_ij = int_{shared edge} g ds / |y_i - y_j|``; rows sum to
    zero.  Each shared edge is seen from both cells; the two estimates are
    averaged.
    """
    n = len(points) if n is None else n
    I, J, A, B = diagram.shared_edges()
    if len(I):
        val = integrate_segments(g, A, B) / np.linalg.norm(points[I] - points[J], axis=1)
    else:
        val = np.zeros(0)
    off = sp.coo_matrix((val, (I, J)), shape=(n, n)).tocsr()
    off = 0.5 * (off + off.T)
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(diag)).tocsr()


# ------------------------------------------------------------ sampling


def _rejection_sample(domain: Polygon, g: Density, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = domain.bbox()
    gx = np.linspace(lo[0], hi[0], 41)
    gy = np.linspace(lo[1], hi[1], 41)
    probe = np.column_stack([a.ravel() for a in np.meshgrid(gx, gy)])
    gmax = 1.25 * max(float(np.max(g(probe))), float(np.max(g(domain.vertices))))
    if not gmax > 0:
        raise SamplingFailure("density vanishes on the sampling domain")
    out = []
    have = 0
    while have < count:
        batch = max(4 * (count - have), 64)
        cand = lo + (hi - lo) * rng.random((batch, 2))
        ok = domain.contains(cand, tol=0.0) & (rng.random(batch) * gmax < g(cand))
        out.append(cand[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:count]


def voronoi_weights(points: np.ndarray) -> np.ndarray:
    """Weights whose Laguerre diagram is the Voronoi diagram of the points."""
    return 0.5 * np.einsum("ij,ij->i", points, points)


def sample_target(
    domain: Polygon,
    g: Density,
    n: int,
    seed: int,
    *,
    lloyd_iters: int = 20,
    pin_origin: bool = False,
    snap_boundary: bool = False,
    q: Quadrature | None = None,
) -> TargetCloud:
    """Lloyd-relaxed, ``g``-weighted point cloud with Voronoi-cell masses.

    With ``pin_origin`` and the origin on the boundary of ``domain``, site 0
    is held at the origin throughout the relaxation.  With ``snap_boundary``
    every site whose Voronoi cell touches the boundary is moved onto the
    nearest boundary point after relaxation, so the cloud's hull is the
    domain itself.  The cloud has ``n`` points in total.
    """
    if n < 1:
        raise PreconditionError("need at least one site")
    rng = np.random.default_rng(seed)
    pin = bool(pin_origin) and len(domain) >= 3 and point_polygon_distance([0.0, 0.0], domain) <= TOL_GEOM
    if pin and not _on_boundary(domain, np.zeros(2)):
        pin = False
    free = n - 1 if pin else n
    pts = _rejection_sample(domain, g, free, rng)
    if pin:
        pts = np.vstack([[0.0, 0.0], pts])
    for _ in range(lloyd_iters):
        diagram = laguerre_diagram(domain, pts, voronoi_weights(pts))
        mass, cent = first_moments(g, diagram.cells, q)
        move = (mass > 0) & np.all(np.isfinite(cent), axis=1)
        if pin:
            move[0] = False
        pts = np.where(move[:, None], cent, pts)
    diagram = laguerre_diagram(domain, pts, voronoi_weights(pts))
    if snap_boundary and n > 1:
        pts = _snap_to_boundary(domain, pts, diagram, skip_first=pin)
        diagram = laguerre_diagram(domain, pts, voronoi_weights(pts))
    mass = integrate_many(g, diagram.cells, q)
    if np.any(mass <= 0):
        raise SamplingFailure(f"{int(np.sum(mass <= 0))} sites have empty Voronoi cells; N={n} is not resolvable")
    cloud = TargetCloud(pts, mass)
    if n > 1 and cloud.min_separation() <= TOL_GEOM:
        raise SamplingFailure("sites are not pairwise distinct")
    return cloud


def _snap_to_boundary(domain: Polygon, pts: np.ndarray, diagram: LaguerreDiagram, skip_first: bool) -> np.ndarray:
    v = domain.vertices
    e = np.roll(v, -1, axis=0) - v
    ee = np.einsum("ij,ij->i", e, e)
    out = pts.copy()
    tree = cKDTree(pts)
    for i, lab in enumerate(diagram.labels):
        if (skip_first and i == 0) or not any(l < 0 for l in lab):
            continue
        t = np.clip(((pts[i] - v) * e).sum(axis=1) / ee, 0.0, 1.0)
        proj = v + t[:, None] * e
        z = proj[np.argmin(np.linalg.norm(proj - pts[i], axis=1))]
        near = tree.query_ball_point(z, 1e3 * TOL_GEOM)
        if any(j != i for j in near) or np.any(np.max(np.abs(out[:i] - z), axis=1) <= 1e3 * TOL_GEOM):
            continue
        out[i] = z
    return out


def _on_boundary(p: Polygon, x: np.ndarray) -> bool:
    n, off = p.edge_normals()
    s = n @ x - off
    return bool(np.all(s <= TOL_GEOM) and np.any(s >= -TOL_GEOM))


# -------------------------------------------------------------- plans


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: Polygon
    source_density: Density
    cloud: TargetCloud
    weights: np.ndarray
    diagram: LaguerreDiagram
    residual: float
    iterations: int = 0
    seed: int | None = None
    target: Polygon | None = None
    target_density: Density | None = None
    meta: dict = field(default_factory=dict)

    @property
    def cells(self) -> tuple:
        return self.diagram.cells

    @property
    def sites(self) -> np.ndarray:
        return self.cloud.points

    def cell_masses(self, q: Quadrature | None = None) -> np.ndarray:
        return cell_masses(self.diagram, self.source_density, q)

    def active(self) -> np.ndarray:
        """Indices of sites with non-empty cells."""
        return np.flatnonzero(self.diagram.nonempty())


def rebuild_plan(source, g, cloud, weights, **kw) -> TransportPlan:
    """Recompute the diagram and residual for given weights (used on reload)."""
    w = np.array(weights, dtype=float)
    diagram = laguerre_diagram(source, cloud, w)
    m = cell_masses(diagram, g)
    res = float(np.max(np.abs(m - cloud.masses) / cloud.masses))
    w.setflags(write=False)
    return TransportPlan(source, g, cloud, w, diagram, res, **kw)


def _shrink_init(source: Polygon, pts: np.ndarray) -> np.ndarray:
    """Weights whose cells are the Voronoi cells of the cloud shrunk into the source.

    Every site then owns a neighbourhood of its shrunk copy, so no cell is
    empty at the start of Newton.
    """
    from .convex2d import area_centroid

    c = area_centroid(source)[1]
    normals, offs = source.edge_normals()
    r_in = float(np.min(offs - normals @ c))
    ybar = pts.mean(axis=0)
    spread = float(np.max(np.linalg.norm(pts - ybar, axis=1))) if len(pts) > 1 else 1.0
    s = 0.9 * r_in / max(spread, 1e-12)
    shift = c - s * ybar
    z = shift + s * pts
    return np.einsum("ij,ij->i", z, z) / (2.0 * s)


def _cascade_init(source, g, cloud, q, seed, **newton) -> np.ndarray | None:
    """Solve on a quarter of the sites, then extend the weights by first-order Legendre expansion."""
    n = len(cloud)
    rng = np.random.default_rng(0 if seed is None else seed)
    keep = np.sort(rng.choice(n, size=n // 4, replace=False))
    if 0 not in keep:
        keep = np.concatenate([[0], keep[:-1]])
    coarse_pts = cloud.points[keep]
    owner = cKDTree(coarse_pts).query(cloud.points)[1]
    coarse_mass = np.bincount(owner, weights=cloud.masses, minlength=len(keep))
    if np.any(coarse_mass <= 0):
        return None
    try:
        coarse = solve(source, g, TargetCloud(coarse_pts, coarse_mass), q=q, seed=seed, **newton)
    except (NonConvergence, SingularHessian):
        return None
    _, cent = first_moments(g, coarse.cells, q)
    psi_c = coarse.weights
    near = cKDTree(coarse_pts).query(cloud.points)[1]
    cbar = np.where(np.isfinite(cent[near]), cent[near], 0.0)
    psi = psi_c[near] + np.einsum("ij,ij->i", cbar, cloud.points - coarse_pts[near])
    return psi


def solve(
    source: Polygon,
    g: Density,
    cloud: TargetCloud,
    init_weights=None,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = MAX_NEWTON,
    max_halvings: int = MAX_HALVINGS,
    q: Quadrature | None = None,
    cascade: bool = True,
    seed: int | None = None,
    target: Polygon | None = None,
    target_density: Density | None = None,
) -> TransportPlan:
    """Damped Newton on the Kantorovich dual; weight 0 is pinned to zero."""
    n = len(cloud)
    nu = cloud.masses
    total = float(integrate_many(g, [source], q)[0])
    if abs(total - cloud.total_mass) > max(TOL_MASS, 1e-7 * total):
        raise PreconditionError(f"mass balance violated: source {total:.12g} vs target {cloud.total_mass:.12g}")
    # absorb the admitted quadrature mismatch; with weight 0 pinned it would
    # otherwise all land on cell 0 and floor the residual near N * mismatch
    cloud = TargetCloud(cloud.points, nu * (total / cloud.total_mass))
    nu = cloud.masses
    kw = dict(target=target, target_density=target_density, seed=seed)
    if n == 1:
        return rebuild_plan(source, g, cloud, np.zeros(1), iterations=0, **kw)

    def evaluate(psi):
        diagram = laguerre_diagram(source, cloud, psi)
        return diagram, cell_masses(diagram, g, q)

    psi = None
    if init_weights is not None:
        psi = np.array(init_weights, dtype=float)
    elif cascade and n >= 400:
        psi = _cascade_init(source, g, cloud, q, seed, tol=tol, max_iter=max_iter, max_halvings=max_halvings, cascade=True)
    if psi is not None:
        diagram, m = evaluate(psi)
        if np.any(m <= 0):
            log.debug("initial weights leave empty cells; falling back to shrink initialisation")
            psi = None
    if psi is None:
        psi = _shrink_init(source, cloud.points)
        diagram, m = evaluate(psi)
    psi = psi - psi[0]
    eps0 = 0.5 * min(float(nu.min()), float(m.min()))
    if eps0 <= 0:
        raise NonConvergence("initial diagram has empty cells", psi)
    F = m - nu
    it = 0
    while True:
        rel = float(np.max(np.abs(F) / nu))
        if rel <= tol:
            break
        if it >= max_iter:
            raise NonConvergence(f"no convergence after {max_iter} Newton steps (residual {rel:.3e})", psi, rel)
        it += 1
        H = mass_hessian(diagram, cloud.points, g, n)[1:, 1:].tocsc()
        if np.any(np.abs(H.diagonal()) <= 0):
            raise SingularHessian("a cell shares no boundary with its neighbours; the diagram is disconnected")
        try:
            delta = spla.spsolve(H, -F[1:])
        except RuntimeError as exc:
            raise SingularHessian(str(exc)) from exc
        if not np.all(np.isfinite(delta)):
            raise SingularHessian("Newton system is singular")
        delta = np.concatenate([[0.0], delta])
        norm0 = float(np.linalg.norm(F))
        tau = 1.0
        for _ in range(max_halvings + 1):
            trial = psi + tau * delta
            d_new, m_new = evaluate(trial)
            F_new = m_new - nu
            if m_new.min() >= eps0 and np.linalg.norm(F_new) <= (1 - tau / 2) * norm0:
                break
            tau *= 0.5
        else:
            raise NonConvergence(f"step halving exhausted at Newton step {it}", psi, rel)
        psi, diagram, m, F = trial, d_new, m_new, F_new
        log.debug("newton %d: tau=%g residual=%.3e", it, tau, float(np.max(np.abs(F) / nu)))
    psi = psi - psi[0]
    psi.setflags(write=False)
    return TransportPlan(source, g, cloud, psi, diagram, rel, iterations=it, **kw)


# ----------------------------------------------------------- potentials


def potential_eval(plan: TransportPlan, x):
    """``(u(x), grad u(x), argmax index)``; ties go to the lowest index."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    vals = pts @ plan.sites.T - plan.weights
    idx = np.argmax(vals, axis=1)
    u = vals[np.arange(len(pts)), idx]
    grad = plan.sites[idx]
    if np.ndim(x) == 1:
        return float(u[0]), grad[0].copy(), int(idx[0])
    return u, grad, idx


def legendre_dual(plan: TransportPlan) -> list[tuple[np.ndarray, float, bool]]:
    """``(y_i, v_i, nonempty)`` with ``v_i = psi_i`` (Fenchel-Young equality on cell i)."""
    ne = plan.diagram.nonempty()
    return [(plan.sites[i].copy(), float(plan.weights[i]), bool(ne[i])) for i in range(len(plan.sites))]


def transport_cost(plan: TransportPlan, q: Quadrature | None = None) -> float:
    """Quadratic cost ``1/2 sum_i int_{cell_i} |x - y_i|^2 g dx``."""
    g = plan.source_density
    cells = plan.cells

    mass, cent = first_moments(g, cells, q)
    second = integrate_many(_Quadratic(g), cells, Quadrature(8, "auto"))
    y = plan.sites
    cent = np.where(np.isfinite(cent), cent, 0.0)
    cross = mass * np.einsum("ij,ij->i", cent, y)
    return 0.5 * float(np.sum(second - 2 * cross + mass * np.einsum("ij,ij->i", y, y)))


@dataclass(frozen=True, eq=False)
class _Quadratic(Density):
    inner: Density = None

    @property
    def support(self):
        return self.inner.support

    @property
    def polynomial_degree(self):
        deg = self.inner.polynomial_degree
        return None if deg is None else deg + 2

    def _eval(self, pts):
        return self.inner._eval(pts) * np.einsum("ij,ij->i", pts, pts)

    def restrict(self, p):
        return self.inner.restrict(p)
