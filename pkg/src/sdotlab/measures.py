"""Densities and their integrals over convex polygons.

Integration works on batches: every polygon is fan-triangulated, all
triangles are evaluated with one vectorised call, and (in adaptive mode)
only the triangles that fail the refinement test are subdivided again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .convex2d import HalfPlane, Polygon, Sector, TWO_PI, clip
from .errors import PreconditionError, QuadratureFailure

TOL_INT = 1e-8
MAX_DEPTH = 24


@dataclass(frozen=True, eq=False)
class Density:
    """Non-negative weight on the plane. Subclasses implement ``_eval``."""

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        val = self._eval(pts)
        sup = self.support
        if sup is not None:
            val = np.where(_in_support(sup, pts), val, 0.0)
        return val

    support = None
    homogeneity_degree = None
    polynomial_degree = None

    def _eval(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, factor: float) -> "Density":
        raise NotImplementedError

    def restrict(self, p: Polygon) -> Polygon:
        """Clip ``p`` to where the density can be non-zero."""
        return p


def _in_support(sup, pts):
    if isinstance(sup, HalfPlane):
        return sup.contains(pts)
    if isinstance(sup, Sector):
        t = np.arctan2(pts[:, 1], pts[:, 0])
        d = np.mod(t - sup.theta_lo, TWO_PI)
        return (d <= sup.span + 1e-12) | (np.hypot(pts[:, 0], pts[:, 1]) == 0)
    raise TypeError(f"unsupported support constraint {sup!r}")


@dataclass(frozen=True, eq=False)
class Uniform(Density):
    c: float = 1.0
    support: HalfPlane | Sector | None = None

    homogeneity_degree = 0.0
    polynomial_degree = 0

    def _eval(self, pts):
        return np.full(len(pts), float(self.c))

    def scaled(self, factor):
        return Uniform(self.c * factor, self.support)


@dataclass(frozen=True, eq=False)
class MonomialYn(Density):
    """``c * max(x2, 0)**k``."""

    k: float = 1.0
    c: float = 1.0
    support: HalfPlane | Sector | None = None

    @property
    def homogeneity_degree(self):
        return float(self.k)

    @property
    def polynomial_degree(self):
        return int(self.k) if float(self.k).is_integer() else None

    def _eval(self, pts):
        y = np.maximum(pts[:, 1], 0.0)
        return self.c * y**self.k

    def scaled(self, factor):
        return MonomialYn(self.k, self.c * factor, self.support)

    def restrict(self, p):
        if self.k == 0:
            return p
        return clip(p, HalfPlane([0.0, -1.0], 0.0))


@dataclass(frozen=True, eq=False)
class RadialHomog(Density):
    """``c * |x|**l * a(theta)`` with ``a`` linearly interpolated from uniform angle samples on [-pi, pi)."""

    l: float = 0.0
    profile: tuple = (1.0,)
    c: float = 1.0
    support: HalfPlane | Sector | None = None

    @property
    def homogeneity_degree(self):
        return float(self.l)

    def _angular(self, theta):
        prof = np.asarray(self.profile, dtype=float)
        if len(prof) == 1:
            return np.full_like(theta, prof[0])
        grid = -math.pi + TWO_PI * np.arange(len(prof) + 1) / len(prof)
        return np.interp(theta, grid, np.append(prof, prof[0]))

    def _eval(self, pts):
        r = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, r**self.l, 1.0 if self.l == 0 else 0.0)
        return self.c * radial * self._angular(theta)

    def scaled(self, factor):
        return RadialHomog(self.l, self.profile, self.c * factor, self.support)


@dataclass(frozen=True, eq=False)
class HolderPerturbed(Density):
    """``base(x) * (1 + amplitude * |x|**alpha)``; not homogeneous."""

    base: Density = field(default_factory=Uniform)
    amplitude: float = 0.2
    alpha: float = 0.5

    homogeneity_degree = None

    @property
    def support(self):
        return self.base.support

    def _eval(self, pts):
        r = np.hypot(pts[:, 0], pts[:, 1])
        return self.base._eval(pts) * (1.0 + self.amplitude * r**self.alpha)

    def scaled(self, factor):
        return HolderPerturbed(self.base.scaled(factor), self.amplitude, self.alpha)

    def restrict(self, p):
        return self.base.restrict(p)


def eval_density(d: Density, x) -> float | np.ndarray:
    val = d(x)
    return float(val[0]) if np.ndim(x) == 1 else val


@dataclass(frozen=True)
class Quadrature:
    """``order`` is the polynomial degree integrated exactly per triangle."""

    order: int = 6
    mode: str = "auto"  # "polynomial-exact" | "adaptive" | "auto"
    tol: float = TOL_INT
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if self.order < 1:
            raise PreconditionError("quadrature order must be >= 1")
        if self.mode not in ("polynomial-exact", "adaptive", "auto"):
            raise PreconditionError(f"unknown quadrature mode {self.mode!r}")

    def resolve(self, d: Density) -> tuple[str, int]:
        if self.mode != "auto":
            return self.mode, self.order
        deg = d.polynomial_degree
        if deg is not None:
            return "polynomial-exact", max(deg, 1)
        return "adaptive", self.order


# ------------------------------------------------------------ rules


@lru_cache(maxsize=32)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss product rule on the reference triangle (0,0),(1,0),(0,1).

    Exact for polynomials of total degree ``degree``; weights sum to 1/2.
    """
    n = degree // 2 + 1
    gt, wt = np.polynomial.legendre.leggauss(n)
    gs, ws = np.polynomial.legendre.leggauss(n + 1)
    t, s = 0.5 * (gt + 1), 0.5 * (gs + 1)
    wt, ws = 0.5 * wt, 0.5 * ws
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt) * S
    # (s, t) -> s * ((1 - t) e1 + t e2)
    bary1 = (S * (1 - T)).ravel()
    bary2 = (S * T).ravel()
    return np.stack([bary1, bary2], axis=1), W.ravel()


def _fan(polys: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Triangles (M, 3, 2) of a fan triangulation and the polygon each came from."""
    tris, owner = [], []
    for i, v in enumerate(polys):
        m = len(v)
        if m < 3:
            continue
        t = np.empty((m - 2, 3, 2))
        t[:, 0] = v[0]
        t[:, 1] = v[1:-1]
        t[:, 2] = v[2:]
        tris.append(t)
        owner.append(np.full(m - 2, i))
    if not tris:
        return np.zeros((0, 3, 2)), np.zeros(0, dtype=int)
    return np.concatenate(tris), np.concatenate(owner)


def _apply_rule(d: Density, tris: np.ndarray, degree: int) -> np.ndarray:
    bary, w = triangle_rule(degree)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = tris[:, None, 0] + bary[None, :, 0, None] * e1[:, None] + bary[None, :, 1, None] * e2[:, None]
    vals = d(pts.reshape(-1, 2)).reshape(len(tris), -1)
    return jac * (vals @ w)


def _subdivide(tris: np.ndarray) -> np.ndarray:
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack(
        [
            np.stack([a, ab, ca], 1),
            np.stack([ab, b, bc], 1),
            np.stack([ca, bc, c], 1),
            np.stack([ab, bc, ca], 1),
        ],
        axis=1,
    )
    return kids.reshape(-1, 3, 2)


def integrate_many(d: Density, polys, q: Quadrature | None = None) -> np.ndarray:
    """Mass of ``d`` on each polygon (vertex arrays or Polygon objects)."""
    q = q or Quadrature()
    polys = [p if isinstance(p, Polygon) else Polygon._trusted(np.asarray(p, float)) for p in polys]
    if isinstance(d, Uniform) and d.support is None:
        return np.array([float(d.c) * p.area for p in polys])
    mode, degree = q.resolve(d)
    clipped = [d.restrict(p).vertices for p in polys]
    tris, owner = _fan(clipped)
    out = np.zeros(len(polys))
    if len(tris) == 0:
        return out
    coarse = _apply_rule(d, tris, degree)
    if mode == "polynomial-exact":
        np.add.at(out, owner, coarse)
        return out
    # adaptive: local tolerance is a share of the owner's total, by area
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    owner_mass = np.zeros(len(polys))
    owner_area = np.zeros(len(polys))
    np.add.at(owner_mass, owner, np.abs(coarse))
    np.add.at(owner_area, owner, area)
    budget = q.tol * owner_mass[owner] * area / np.maximum(owner_area[owner], 1e-300) + 1e-300
    left = q.tol * owner_mass + 1e-300  # per-polygon error budget not yet spent
    depth = 0
    while len(tris):
        kids = _subdivide(tris)
        kid_vals = _apply_rule(d, kids, degree).reshape(-1, 4)
        fine = kid_vals.sum(axis=1)
        err = np.abs(fine - coarse)
        # accept a triangle on its own share, or all of a polygon's triangles
        # once their summed error fits its budget (point singularities)
        owner_err = np.bincount(owner, err, minlength=len(polys))
        done = (err <= budget) | (owner_err[owner] <= left[owner])
        np.add.at(out, owner[done], fine[done])
        np.subtract.at(left, owner[done], err[done])
        keep = ~done
        if not keep.any():
            break
        depth += 1
        if depth > q.max_depth:
            raise QuadratureFailure(f"adaptive refinement exceeded depth {q.max_depth}")
        tris = kids.reshape(-1, 4, 3, 2)[keep].reshape(-1, 3, 2)
        coarse = kid_vals[keep].ravel()
        owner = np.repeat(owner[keep], 4)
        budget = np.repeat(budget[keep], 4) / 4.0
    return out


def integrate(d: Density, p: Polygon, q: Quadrature | None = None) -> float:
    if len(p) < 3:
        return 0.0
    return float(integrate_many(d, [p], q)[0])


def integrate_segments(d: Density, a: np.ndarray, b: np.ndarray, points: int = 8) -> np.ndarray:
    """Line integral of ``d`` along each segment ``a[i] -> b[i]`` (Gauss-Legendre)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    length = np.linalg.norm(b - a, axis=1)
    if isinstance(d, Uniform) and d.support is None:
        return d.c * length
    g, w = np.polynomial.legendre.leggauss(points)
    t = 0.5 * (g + 1)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    vals = d(pts.reshape(-1, 2)).reshape(len(a), -1)
    return 0.5 * length * (vals @ w)


def first_moments(d: Density, polys, q: Quadrature | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Masses and density-weighted centroids of each polygon."""
    q = q or Quadrature()
    polys = [p if isinstance(p, Polygon) else Polygon._trusted(np.asarray(p, float)) for p in polys]
    mass = integrate_many(d, polys, q)
    if isinstance(d, Uniform) and d.support is None:
        cent = np.array([_area_centroid_or_nan(p) for p in polys]).reshape(-1, 2)
        return mass, cent
    mode, degree = q.resolve(d)
    bump = 0 if mode == "adaptive" else 1
    mx = integrate_many(_Weighted(d, 0), polys, Quadrature(degree + bump, mode, q.tol, q.max_depth))
    my = integrate_many(_Weighted(d, 1), polys, Quadrature(degree + bump, mode, q.tol, q.max_depth))
    with np.errstate(invalid="ignore", divide="ignore"):
        cent = np.stack([mx / mass, my / mass], axis=1)
    return mass, cent


def _area_centroid_or_nan(p: Polygon):
    from .convex2d import area_centroid
    from .errors import DegenerateRegion

    try:
        return area_centroid(p)[1]
    except DegenerateRegion:
        return np.array([np.nan, np.nan])


@dataclass(frozen=True, eq=False)
class _Weighted(Density):
    inner: Density = None
    axis: int = 0

    @property
    def support(self):
        return self.inner.support

    @property
    def polynomial_degree(self):
        deg = self.inner.polynomial_degree
        return None if deg is None else deg + 1

    def _eval(self, pts):
        return self.inner._eval(pts) * pts[:, self.axis]

    def restrict(self, p):
        return self.inner.restrict(p)


def homogeneity_check(d: Density, samples: int = 64, scales=(0.1, 0.5, 2.0, 10.0), seed: int = 0, eps: float = 1e-300) -> float:
    """Worst relative defect of ``d(t x) = t**deg d(x)`` over random points and scales."""
    deg = d.homogeneity_degree
    if deg is None:
        raise PreconditionError(f"{type(d).__name__} has no homogeneity degree")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-math.pi, math.pi, samples)
    r = rng.uniform(0.1, 2.0, samples)
    x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    gx = d(x)
    worst = 0.0
    for t in scales:
        gtx = d(t * x)
        ref = np.abs(gx) * t**deg
        worst = max(worst, float(np.max(np.abs(gtx - t**deg * gx) / (ref + eps))))
    return worst
