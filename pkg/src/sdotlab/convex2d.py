"""Exact planar convex geometry.

Polygons are stored as counter-clockwise ``(n, 2)`` float arrays with the
closing edge implied.  Everything here is a pure function of immutable
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    DegenerateRegion,
    EllipseNonConvergence,
    NotAVertex,
    NotDualizable,
    PreconditionError,
)

TOL_GEOM = 1e-9
TWO_PI = 2.0 * math.pi


def _dedup(vertices: np.ndarray, tol: float = TOL_GEOM) -> np.ndarray:
    """Drop consecutive (cyclic) near-duplicate vertices."""
    if len(vertices) < 2:
        return vertices
    keep = [0]
    for i in range(1, len(vertices)):
        if np.max(np.abs(vertices[i] - vertices[keep[-1]])) > tol:
            keep.append(i)
    if len(keep) > 1 and np.max(np.abs(vertices[keep[-1]] - vertices[keep[0]])) <= tol:
        keep.pop()
    return vertices[keep]


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Convex polygon with counter-clockwise vertices.

    An empty polygon (no vertices) is a valid value; it is what clipping
    returns when the half-plane misses the polygon entirely.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        v = _dedup(v)
        if len(v) >= 3 and _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def _trusted(cls, vertices: np.ndarray) -> "Polygon":
        # skips normalisation; caller guarantees CCW, deduplicated input
        obj = object.__new__(cls)
        v = np.asarray(vertices, dtype=float)
        v.setflags(write=False)
        object.__setattr__(obj, "vertices", v)
        return obj

    @classmethod
    def empty(cls) -> "Polygon":
        return cls._trusted(np.zeros((0, 2)))

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"Polygon({self.vertices.tolist()!r})"

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) < 3 or self.area <= TOL_GEOM**2

    @property
    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        return abs(_signed_area(self.vertices))

    @property
    def centroid(self) -> np.ndarray:
        return area_centroid(self)[1]

    def is_convex(self, tol: float = TOL_GEOM) -> bool:
        v = self.vertices
        if len(v) < 3:
            return True
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cross > -tol))

    def halfplanes(self) -> list["HalfPlane"]:
        """One half-plane per edge; their intersection is the polygon."""
        v = self.vertices
        out = []
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            d = b - a
            n = np.array([d[1], -d[0]])  # outward for CCW order
            out.append(HalfPlane(n, float(n @ a)))
        return out

    def edge_normals(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals and offsets for all edges, as arrays."""
        v = self.vertices
        d = np.roll(v, -1, axis=0) - v
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        return n, np.einsum("ij,ij->i", n, v)

    def contains(self, points, tol: float = TOL_GEOM) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(self.vertices) < 3:
            return np.zeros(len(pts), dtype=bool)
        n, off = self.edge_normals()
        return np.all(pts @ n.T - off <= tol, axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def diameter(self) -> float:
        v = self.vertices
        if len(v) < 2:
            return 0.0
        diff = v[:, None, :] - v[None, :, :]
        return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))

    def transformed(self, matrix, shift=(0.0, 0.0)) -> "Polygon":
        """Image under x -> matrix @ x + shift."""
        m = np.asarray(matrix, dtype=float)
        return Polygon(self.vertices @ m.T + np.asarray(shift, dtype=float))

    def scaled(self, factor: float, about=(0.0, 0.0)) -> "Polygon":
        c = np.asarray(about, dtype=float)
        return Polygon(c + factor * (self.vertices - c))

    def vertex_index(self, point, tol: float = 1e-9) -> int:
        d = np.linalg.norm(self.vertices - np.asarray(point, dtype=float), axis=1)
        i = int(np.argmin(d)) if len(d) else -1
        if i < 0 or d[i] > tol:
            raise NotAVertex(f"{tuple(point)} is not a vertex of the polygon")
        return i


@dataclass(frozen=True, eq=False)
class HalfPlane:
    """The set ``{x : normal . x <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(2)
        if not np.linalg.norm(n) > 0:
            raise PreconditionError("half-plane normal must be non-zero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def complement(self) -> "HalfPlane":
        return HalfPlane(-self.normal, -self.offset)

    def contains(self, points, tol: float = TOL_GEOM) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.normal - self.offset <= tol * np.linalg.norm(self.normal)


def rectangle(lo, hi) -> Polygon:
    (x0, y0), (x1, y1) = lo, hi
    return Polygon([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> Polygon:
    t = phase + TWO_PI * np.arange(n) / n
    return Polygon(np.asarray(center) + radius * np.stack([np.cos(t), np.sin(t)], axis=1))


def sector_polygon(theta_lo: float, theta_hi: float, radius: float = 1.0, segments: int = 32) -> Polygon:
    """Apex at the origin, arc of the given radius replaced by ``segments`` chords."""
    t = np.linspace(theta_lo, theta_hi, segments + 1)
    arc = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return Polygon(np.vstack([[0.0, 0.0], arc]))


def convex_hull(points) -> Polygon:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return Polygon(pts)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return Polygon.empty()
    return Polygon(pts[hull.vertices])


# ---------------------------------------------------------------- clipping


def clip(p: Polygon, h: HalfPlane) -> Polygon:
    """Intersect a convex polygon with a half-plane (Sutherland-Hodgman)."""
    v = p.vertices
    if len(v) == 0:
        return p
    s = v @ h.normal - h.offset
    scale = TOL_GEOM * np.linalg.norm(h.normal)
    if np.all(s <= scale):
        return p
    if np.all(s > -scale):
        return Polygon.empty()
    out = []
    n = len(v)
    for i in range(n):
        j = (i + 1) % n
        si, sj = s[i], s[j]
        if si <= 0:
            out.append(v[i])
        if (si < 0 < sj) or (sj < 0 < si):
            t = si / (si - sj)
            out.append(v[i] + t * (v[j] - v[i]))
    if len(out) < 3:
        return Polygon.empty()
    return Polygon(np.array(out))


def intersect(p: Polygon, q: Polygon) -> Polygon:
    out = p
    for h in q.halfplanes():
        out = clip(out, h)
        if len(out) == 0:
            break
    return out


def clip_labeled(xs: list, ys: list, labels: list, a: float, b: float, c: float, label):
    """Clip a labelled vertex ring by ``a*x + b*y <= c`` in plain Python.

    ``labels[k]`` tags the edge from vertex ``k`` to ``k+1``; the new edge
    created along the cut line gets ``label``.  Hot loop of the Laguerre
    cell construction, hence no numpy.
    """
    n = len(xs)
    s = [a * xs[k] + b * ys[k] - c for k in range(n)]
    eps = 1e-14 * (abs(a) + abs(b)) * (1.0 + max(abs(min(xs)), abs(max(xs)), abs(min(ys)), abs(max(ys))))
    if max(s) <= eps:
        return xs, ys, labels
    if min(s) >= -eps:
        return [], [], []
    ox, oy, ol = [], [], []
    for k in range(n):
        j = k + 1 if k + 1 < n else 0
        sk, sj = s[k], s[j]
        if sk <= 0.0:
            ox.append(xs[k])
            oy.append(ys[k])
            if sj <= 0.0:
                ol.append(labels[k])
            else:
                t = sk / (sk - sj)
                ox.append(xs[k] + t * (xs[j] - xs[k]))
                oy.append(ys[k] + t * (ys[j] - ys[k]))
                ol.append(labels[k])
                ol.append(label)
        elif sj < 0.0:
            t = sk / (sk - sj)
            ox.append(xs[k] + t * (xs[j] - xs[k]))
            oy.append(ys[k] + t * (ys[j] - ys[k]))
            ol.append(labels[k])
    if len(ox) < 3:
        return [], [], []
    return ox, oy, ol


def halfplane_intersection(normals: np.ndarray, offsets: np.ndarray, interior) -> tuple[np.ndarray, np.ndarray]:
    """Bounded intersection of ``normals[i] . x <= offsets[i]`` by polar duality.

    ``interior`` must lie strictly inside every half-plane.  Returns CCW
    vertices and, for each edge ``k -> k+1``, the index of the constraint it
    lies on.  Redundant constraints are discarded by the 2D hull of the
    dual points, so the cost is O(m log m).
    """
    z = np.asarray(interior, dtype=float)
    slack = offsets - normals @ z
    if np.any(slack <= 0):
        raise PreconditionError("interior point is not strictly inside all half-planes")
    dual = normals / slack[:, None]
    hull = ConvexHull(dual)
    idx = hull.vertices  # CCW
    q = dual[idx]
    q_next = np.roll(q, -1, axis=0)
    det = q[:, 0] * q_next[:, 1] - q[:, 1] * q_next[:, 0]
    # vertex k of the primal polygon sits on constraints idx[k] and idx[k+1]
    vx = (q_next[:, 1] - q[:, 1]) / det
    vy = (q[:, 0] - q_next[:, 0]) / det
    verts = z + np.stack([vx, vy], axis=1)
    # edge from vertex k-1 to vertex k lies on constraint idx[k]; rotate so
    # labels[k] tags the edge from vertex k to vertex k+1
    labels = np.roll(idx, -1)
    return verts, labels


# ----------------------------------------------------------------- moments


def area_centroid(p: Polygon) -> tuple[float, np.ndarray]:
    v = p.vertices
    if len(v) < 3:
        raise DegenerateRegion("polygon has fewer than three vertices")
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    a = 0.5 * cross.sum()
    if abs(a) <= TOL_GEOM**2:
        raise DegenerateRegion(f"polygon area {abs(a):.3e} is degenerate")
    cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
    cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
    return abs(a), np.array([cx, cy])


def second_moment(p: Polygon, about=None) -> np.ndarray:
    """Integral of (x - about)(x - about)^T over the polygon."""
    v = p.vertices
    if about is None:
        about = area_centroid(p)[1]
    v = v - np.asarray(about, dtype=float)
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    sxx = ((v[:, 0] ** 2 + v[:, 0] * w[:, 0] + w[:, 0] ** 2) * cross).sum() / 12.0
    syy = ((v[:, 1] ** 2 + v[:, 1] * w[:, 1] + w[:, 1] ** 2) * cross).sum() / 12.0
    sxy = ((v[:, 0] * w[:, 1] + 2 * v[:, 0] * v[:, 1] + 2 * w[:, 0] * w[:, 1] + w[:, 0] * v[:, 1]) * cross).sum() / 24.0
    m = np.array([[sxx, sxy], [sxy, syy]])
    return -m if _signed_area(p.vertices) < 0 else m


# ---------------------------------------------------------------- distance


def point_polygon_distance(x, p: Polygon) -> float:
    x = np.asarray(x, dtype=float)
    if p.contains(x)[0]:
        return 0.0
    v = p.vertices
    w = np.roll(v, -1, axis=0)
    d = w - v
    t = np.clip(np.einsum("ij,ij->i", x - v, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    proj = v + t[:, None] * d
    return float(np.min(np.linalg.norm(proj - x, axis=1)))


def hausdorff_distance(p: Polygon, q: Polygon) -> float:
    """Exact for convex polygons: the farthest point is always a vertex."""
    if len(p) == 0 or len(q) == 0:
        raise PreconditionError("Hausdorff distance needs non-empty polygons")
    a = max(point_polygon_distance(x, q) for x in p.vertices)
    b = max(point_polygon_distance(y, p) for y in q.vertices)
    return max(a, b)


# ------------------------------------------------------------------- cones


def _norm_angle(t: float) -> float:
    """Map an angle to (-pi, pi]."""
    t = math.fmod(t, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class Sector:
    """Planar convex cone with apex at the origin, swept CCW from ``theta_lo``.

    ``theta_lo`` is kept in (-pi, pi]; ``theta_hi = theta_lo + span`` so it
    may exceed pi.  A zero span is a single ray (the dual of a half-plane).
    """

    theta_lo: float
    theta_hi: float

    def __post_init__(self):
        span = float(self.theta_hi) - float(self.theta_lo)
        if not (-1e-12 <= span <= TWO_PI + 1e-12):
            raise PreconditionError(f"sector span {span} outside [0, 2pi]")
        lo = _norm_angle(float(self.theta_lo))
        object.__setattr__(self, "theta_lo", lo)
        object.__setattr__(self, "theta_hi", lo + max(span, 0.0))

    @classmethod
    def from_degrees(cls, lo: float, hi: float) -> "Sector":
        return cls(math.radians(lo), math.radians(hi))

    @property
    def span(self) -> float:
        return self.theta_hi - self.theta_lo

    def is_strict(self, tol: float = 1e-9) -> bool:
        return self.span < math.pi - tol

    def is_halfplane(self, tol: float = 1e-9) -> bool:
        return abs(self.span - math.pi) <= tol

    @property
    def lo_ray(self) -> np.ndarray:
        return np.array([math.cos(self.theta_lo), math.sin(self.theta_lo)])

    @property
    def hi_ray(self) -> np.ndarray:
        return np.array([math.cos(self.theta_hi), math.sin(self.theta_hi)])

    @property
    def bisector(self) -> np.ndarray:
        t = 0.5 * (self.theta_lo + self.theta_hi)
        return np.array([math.cos(t), math.sin(t)])

    def offset_of(self, theta: float) -> float:
        """CCW angle from ``theta_lo`` to ``theta`` in [0, 2pi)."""
        return math.fmod(theta - self.theta_lo, TWO_PI) % TWO_PI

    def contains_direction(self, v, tol: float = 1e-9) -> bool:
        t = math.atan2(v[1], v[0])
        d = self.offset_of(t)
        return d <= self.span + tol or d >= TWO_PI - tol

    def transformed(self, matrix) -> "Sector":
        """Image under a linear map with positive determinant."""
        m = np.asarray(matrix, dtype=float)
        if np.linalg.det(m) <= 0:
            raise PreconditionError("sector transforms need det > 0")
        a = m @ self.lo_ray
        lo = math.atan2(a[1], a[0])
        if self.is_halfplane():
            return Sector(lo, lo + math.pi)
        b = m @ self.hi_ray
        hi = math.atan2(b[1], b[0])
        span = math.fmod(hi - lo, TWO_PI) % TWO_PI
        return Sector(lo, lo + span)

    def sample_rays(self, count: int, inset: float = 0.0) -> np.ndarray:
        t = np.linspace(self.theta_lo + inset, self.theta_hi - inset, count)
        return np.stack([np.cos(t), np.sin(t)], axis=1)


def dual_cone(s: Sector) -> Sector:
    if s.span > math.pi + 1e-12:
        raise NotDualizable(f"sector of span {s.span:.6f} > pi has no dual cone")
    return Sector(s.theta_hi - math.pi / 2, s.theta_lo + math.pi / 2)


def tangent_cone(p: Polygon, v) -> Sector:
    """Tangent cone of ``p`` at vertex ``v`` (an index, or a point)."""
    verts = p.vertices
    if isinstance(v, (int, np.integer)):
        if not 0 <= v < len(verts):
            raise NotAVertex(f"vertex index {v} out of range")
        k = int(v)
    else:
        k = p.vertex_index(v)
    a = verts[(k + 1) % len(verts)] - verts[k]
    b = verts[k - 1] - verts[k]
    lo = math.atan2(a[1], a[0])
    span = math.fmod(math.atan2(b[1], b[0]) - lo, TWO_PI) % TWO_PI
    return Sector(lo, lo + span)


def boundary_cone(p: Polygon, x, tol: float = 1e-7) -> Sector | None:
    """Tangent cone at any point: the vertex sector, a half-plane on an edge, None inside."""
    x = np.asarray(x, dtype=float).reshape(2)
    verts = p.vertices
    d = np.linalg.norm(verts - x, axis=1)
    if d.min() <= tol:
        return tangent_cone(p, int(np.argmin(d)))
    normals, offs = p.edge_normals()
    gap = offs - normals @ x
    k = int(np.argmin(np.abs(gap)))
    if abs(gap[k]) > tol:
        if np.all(gap > 0):
            return None
        raise PreconditionError(f"point {x.tolist()} lies outside the polygon")
    a = verts[(k + 1) % len(verts)] - verts[k]
    lo = math.atan2(a[1], a[0])
    return Sector(lo, lo + math.pi)


# --------------------------------------------------------------- ellipses


@dataclass(frozen=True, eq=False)
class Ellipse:
    """Region ``{x : (x - center)^T shape (x - center) <= 1}``."""

    center: np.ndarray
    shape: np.ndarray
    iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        m = np.asarray(self.shape, dtype=float).reshape(2, 2)
        if abs(m[0, 1] - m[1, 0]) > TOL_GEOM * max(1.0, np.abs(m).max()):
            raise PreconditionError("ellipse shape matrix must be symmetric")
        m = 0.5 * (m + m.T)
        if np.linalg.eigvalsh(m)[0] <= 0:
            raise PreconditionError("ellipse shape matrix must be positive definite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", m)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axis lengths (major first) and matching unit directions as columns."""
        w, vec = np.linalg.eigh(self.shape)
        return 1.0 / np.sqrt(w), vec

    @property
    def area(self) -> float:
        return math.pi / math.sqrt(np.linalg.det(self.shape))

    def normalization(self) -> np.ndarray:
        """Symmetric square root of the shape; maps the ellipse onto the unit disk."""
        w, vec = np.linalg.eigh(self.shape)
        return (vec * np.sqrt(w)) @ vec.T

    def level(self, points) -> np.ndarray:
        d = np.atleast_2d(points) - self.center
        return np.einsum("ij,jk,ik->i", d, self.shape, d)

    def contains(self, points, tol: float = TOL_GEOM) -> np.ndarray:
        return self.level(points) <= 1.0 + tol

    def boundary(self, count: int = 128) -> np.ndarray:
        lengths, vec = self.axes()
        t = np.linspace(0, TWO_PI, count, endpoint=False)
        circle = np.stack([np.cos(t), np.sin(t)], axis=1)
        return self.center + (circle * lengths) @ vec.T


_SYM = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]])


def lowner_ellipse(p, tol: float = 1e-10, max_iter: int = 500) -> Ellipse:
    """Minimum-area ellipse enclosing a polygon (or point set).

    The ellipse is ``{x : |A x + b| <= 1}`` with ``A`` symmetric positive
    definite; ``-log det A`` is minimised under one quadratic constraint per
    hull vertex by a log-barrier path-following Newton method over the five
    unknowns ``(a11, a12, a22, b1, b2)``.  ``tol`` bounds the relative area
    excess (the duality gap).  The result is rescaled so every input point
    lies inside exactly.
    """
    pts = p.vertices if isinstance(p, Polygon) else np.asarray(p, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateRegion("enclosing ellipse needs at least three points")
    try:
        pts = pts[ConvexHull(pts).vertices]
    except QhullError as exc:
        raise DegenerateRegion("points are collinear") from exc
    origin = pts.mean(axis=0)
    scale = float(np.linalg.norm(pts - origin, axis=1).max())
    x = (pts - origin) / scale
    m = len(x)
    # r_i = M_i z with z = (a11, a12, a22, b1, b2)
    rows = np.zeros((m, 2, 5))
    rows[:, 0, 0] = x[:, 0]
    rows[:, 0, 1] = x[:, 1]
    rows[:, 1, 1] = x[:, 0]
    rows[:, 1, 2] = x[:, 1]
    rows[:, 0, 3] = 1.0
    rows[:, 1, 4] = 1.0
    z = np.array([1.0 / 1.05, 0.0, 1.0 / 1.05, 0.0, 0.0])

    def parts(z):
        a = np.array([[z[0], z[1]], [z[1], z[2]]])
        r = rows @ z
        s = 1.0 - np.einsum("ij,ij->i", r, r)
        return a, r, s

    def barrier(z, t):
        a, _, s = parts(z)
        if np.any(s <= 0):
            return math.inf
        w = np.linalg.eigvalsh(a)
        if w[0] <= 0:
            return math.inf
        return -t * float(np.sum(np.log(w))) - float(np.sum(np.log(s)))

    t = 1.0
    it = 0
    while True:
        for _ in range(100):
            a, r, s = parts(z)
            ainv = np.linalg.inv(a)
            sa = np.einsum("ij,kjl->kil", ainv, _SYM)  # A^-1 E_k
            grad = np.zeros(5)
            grad[:3] = -t * np.einsum("kii->k", sa)
            hess = np.zeros((5, 5))
            hess[:3, :3] = t * np.einsum("jab,kba->jk", sa, sa)
            mr = np.einsum("iab,ia->ib", rows, r)  # M_i^T r_i
            grad += 2.0 * np.sum(mr / s[:, None], axis=0)
            hess += 2.0 * np.einsum("i,iab,iac->bc", 1.0 / s, rows, rows)
            hess += 4.0 * np.einsum("i,ib,ic->bc", 1.0 / s**2, mr, mr)
            step = -np.linalg.solve(hess, grad)
            dec = float(-grad @ step)
            if dec <= 1e-9:
                break
            f0 = barrier(z, t)
            tau = 1.0
            while barrier(z + tau * step, t) > f0 - 0.25 * tau * dec:
                tau *= 0.5
                if tau < 1e-12:
                    break
            z = z + tau * step
            it += 1
            if it > max_iter:
                raise EllipseNonConvergence(f"no convergence after {max_iter} Newton steps")
        if m / t <= tol:
            break
        t *= 30.0
    a, r, s = parts(z)
    shape = a @ a
    c = -np.linalg.solve(a, z[3:])
    diff = x - c
    level = np.einsum("ij,jk,ik->i", diff, shape, diff).max()
    shape = shape / level
    return Ellipse(origin + scale * c, shape / scale**2, iterations=it)
