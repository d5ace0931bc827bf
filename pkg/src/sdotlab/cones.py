"""Homogeneous optimal transport between planar sectors.

A homogeneous map between two planar cones with uniform densities is the
gradient of a positive definite quadratic ``u(x) = <Qx, x>/2`` with
``det Q = 1``.  Which sector pairs admit one is decided by comparing the
target with the dual cone of the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex2d import TWO_PI, Sector, dual_cone
from .errors import PreconditionError, Unsolvable

ANGLE_TOL = 1e-9

HALF_SPACE = "HalfSpace"
ACUTE = "Acute"
RIGHT_ANGLE = "RightAngle"
OBTUSE = "Obtuse"
NO_HOMOGENEOUS_MAP = "NoHomogeneousMap"


@dataclass(frozen=True)
class ConePair:
    source: Sector
    target: Sector

    def __post_init__(self):
        for name in ("source", "target"):
            s = getattr(self, name)
            if not (0 < s.span <= math.pi + ANGLE_TOL):
                raise PreconditionError(f"{name} sector span {s.span:.6g} must lie in (0, pi]")

    def transformed(self, a) -> "ConePair":
        """The pair ``(A C, A^{-T} C')``; homogeneous solutions are carried along."""
        a = np.asarray(a, dtype=float)
        return ConePair(self.source.transformed(a), self.target.transformed(np.linalg.inv(a).T))


@dataclass(frozen=True, eq=False)
class QuadraticSolution:
    """``u(x) = <Q x, x> / 2``."""

    Q: np.ndarray

    def grad(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.Q.T

    def legendre_grad(self, y) -> np.ndarray:
        return np.linalg.solve(self.Q, np.atleast_2d(y).T).T


@dataclass(frozen=True)
class Classification:
    verdict: str
    family_dimension: int
    witness: QuadraticSolution | None = None


def _inside(x: Sector, y: Sector, tol: float = ANGLE_TOL) -> bool:
    """``closure(x) \\ {0}`` lies in the interior of ``y`` (strict angular containment)."""
    start = y.offset_of(x.theta_lo)
    if start >= TWO_PI - tol:
        start -= TWO_PI
    return start > tol and start + x.span < y.span - tol


def _same(x: Sector, y: Sector, tol: float = ANGLE_TOL) -> bool:
    d = abs(math.remainder(x.theta_lo - y.theta_lo, TWO_PI))
    return d <= tol and abs(x.span - y.span) <= tol


def _verdict(pair: ConePair) -> str:
    c, t = pair.source, pair.target
    if c.is_halfplane(ANGLE_TOL) and t.is_halfplane(ANGLE_TOL):
        return HALF_SPACE if float(c.bisector @ t.bisector) > 0 else NO_HOMOGENEOUS_MAP
    if not (c.is_strict(ANGLE_TOL) and t.is_strict(ANGLE_TOL)):
        return NO_HOMOGENEOUS_MAP
    dual = dual_cone(c)
    if _inside(t, dual):
        return ACUTE
    if _same(t, dual):
        return RIGHT_ANGLE
    if _inside(dual, t):
        return OBTUSE
    return NO_HOMOGENEOUS_MAP


def classify(pair: ConePair) -> Classification:
    verdict = _verdict(pair)
    if verdict == NO_HOMOGENEOUS_MAP:
        return Classification(verdict, 0, None)
    family = 1 if verdict in (HALF_SPACE, RIGHT_ANGLE) else 0
    witness = solve_quadratic(pair, 1.0 if family else None)
    return Classification(verdict, family, witness)


def solve_quadratic(pair: ConePair, parameter: float | None = None) -> QuadraticSolution:
    """Quadratic ``Q`` (symmetric, det 1) sending the boundary rays of the source onto those of the target.

    ``parameter`` selects the member of the one-parameter families (half-space
    and right-angle pairs); it is ignored otherwise.
    """
    verdict = _verdict(pair)
    if verdict == NO_HOMOGENEOUS_MAP:
        raise Unsolvable("no homogeneous optimal map between these sectors")
    family = verdict in (HALF_SPACE, RIGHT_ANGLE)
    if family:
        if parameter is None:
            raise PreconditionError(f"{verdict} pairs need the family parameter")
        if not parameter > 0:
            raise PreconditionError("family parameter must be positive")
    c, t = pair.source, pair.target
    e1, e2 = c.lo_ray, c.hi_ray
    f1, f2 = t.lo_ray, t.hi_ray
    if verdict == HALF_SPACE:
        # orthonormal frame (e1, n) with n the inner normal of the source
        n = np.array([-e1[1], e1[0]])
        a = float(parameter)
        q11 = a * float(f1 @ e1)
        q12 = a * float(f1 @ n)
        q22 = (1.0 + q12 * q12) / q11
        frame = np.column_stack([e1, n])
        q = frame @ np.array([[q11, q12], [q12, q22]]) @ frame.T
    else:
        e = np.column_stack([e1, e2])
        f = np.column_stack([f1, f2])
        det_e, det_f = np.linalg.det(e), np.linalg.det(f)
        if verdict == RIGHT_ANGLE:
            s = math.sqrt(det_e / det_f)
            a, b = parameter * s, s / parameter
        else:
            ratio = float(f1 @ e2) / float(e1 @ f2)
            if not ratio > 0:
                raise Unsolvable("boundary rays cannot be matched by a symmetric map")
            a = math.sqrt(det_e / (ratio * det_f))
            b = ratio * a
        q = f @ np.diag([a, b]) @ np.linalg.inv(e)
    q = 0.5 * (q + q.T)
    # polish the determinant to 1 (it is 1 up to rounding by construction)
    q = q / math.sqrt(np.linalg.det(q))
    if np.linalg.eigvalsh(q)[0] <= 0:
        raise Unsolvable("constructed Q is not positive definite")
    return QuadraticSolution(q)


# ------------------------------------------------------------------ ODE


@dataclass(frozen=True, eq=False)
class ODEProfile:
    """``f(t) = sqrt(A (t - t0)^2 + C)`` solving ``f'' = c / f^3`` with ``c = A C``."""

    A: float
    t0: float
    C: float
    analytic_residual: float
    fd_residual: float

    @property
    def c(self) -> float:
        return self.A * self.C

    @property
    def residual(self) -> float:
        return max(self.analytic_residual, self.fd_residual)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.sqrt(self.A * (t - self.t0) ** 2 + self.C)


# 7-point central stencil for the second derivative, sixth order
_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])


def ode_profile(A: float, t0: float, Cc: float, t_range=(-2.0, 2.0), samples: int = 401) -> ODEProfile:
    if not (A > 0 and Cc > 0):
        raise PreconditionError("ode_profile needs A > 0 and C > 0")
    c = A * Cc
    t = np.linspace(t_range[0], t_range[1], samples)
    f = np.sqrt(A * (t - t0) ** 2 + Cc)
    # differentiate the closed form directly: f'' = A/f - A^2 (t - t0)^2 / f^3
    f2 = A / f - A * A * (t - t0) ** 2 / f**3
    analytic = float(np.max(np.abs(f2 - c / f**3)))
    # scale the finite-difference step to the curvature length sqrt(C/A)
    step = 1e-2 * math.sqrt(Cc / A)
    offs = step * np.arange(-3, 4)
    tt = t[:, None] + offs[None, :]
    ff = np.sqrt(A * (tt - t0) ** 2 + Cc)
    fd = (ff @ _D2) / step**2
    numeric = float(np.max(np.abs(fd - c / f**3)))
    return ODEProfile(float(A), float(t0), float(Cc), analytic, numeric)


# ------------------------------------------------------------- exponents


def chi_exponent(n: float, l: float, k: float) -> float:
    """Power of ``r`` normalising ``mu(D_r)``: ``2(n+l) / (1 + (n+l)/(n+k))``."""
    return 2.0 * (n + l) / (1.0 + (n + l) / (n + k))


@dataclass(frozen=True)
class ExponentTable:
    n: float
    m: float
    l: float
    k: float
    alpha: float
    deg_u: float
    deg_v: float
    beta_u: float
    beta_v: float
    beta_flat: float
    beta_cone_u: float
    beta_cone_v: float
    gamma_vol: float
    chi_exponent: float
    kappa_star: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def exponents(n: float = 2, m: float = 0, l: float = 0, k: float = 0) -> ExponentTable:
    """Section and monotonicity exponents.

    The cone-direction betas need ``m > 0``; for ``m = 0`` they are NaN and
    ``gamma_vol`` reduces to ``n / 2``.
    """
    if not (n >= 2 and 0 <= m <= n and k >= 0 and l >= 0):
        raise PreconditionError("exponents need n >= 2, 0 <= m <= n, k >= 0, l >= 0")
    alpha = (n + l) / (n + k)
    if m > 0:
        ratio = m / (m + k)
        cone_u = 1.0 / (1.0 + ratio)
        cone_v = 1.0 / (1.0 + 1.0 / ratio)
        gamma = (n - m) / 2.0 + m / (1.0 + ratio)
    else:
        cone_u = cone_v = math.nan
        gamma = n / 2.0
    return ExponentTable(
        n=float(n),
        m=float(m),
        l=float(l),
        k=float(k),
        alpha=alpha,
        deg_u=1.0 + alpha,
        deg_v=1.0 + 1.0 / alpha,
        beta_u=1.0 / (1.0 + alpha),
        beta_v=1.0 / (1.0 + 1.0 / alpha),
        beta_flat=0.5,
        beta_cone_u=cone_u,
        beta_cone_v=cone_v,
        gamma_vol=gamma,
        chi_exponent=chi_exponent(n, l, k),
        kappa_star=(n + k) * (n + l) / ((n + k) + (n + l)),
    )
