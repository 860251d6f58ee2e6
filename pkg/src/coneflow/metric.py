"""Radially symmetric conformal metrics g = exp(2u)|dz|^2 on the unit disc.

Holds the grid and profile types, the model geometries (round sphere,
euclidean and hyperbolic cones) and the discrete curvature/area machinery
used by every other module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ParameterError

MIN_NODES = 16


def _check_beta(beta: float) -> None:
    if not (-1.0 < beta <= 0.0) or not math.isfinite(beta):
        raise ParameterError(f"cone exponent beta={beta!r} must lie in (-1, 0]")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RadialGrid:
    """Radial nodes on [r_min, r_max].

    ``uniform`` spacing is the default; r_min = 0 then puts a node at the
    origin. ``log`` spacing is uniform in ln r with r_min > 0 and treats
    the innermost node as a regular centre (zero radial flux), which lets
    one grid resolve caps many decades below r_max.
    """

    r_min: float
    r_max: float
    n: int
    spacing: str = "uniform"
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise ParameterError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not (0.0 <= self.r_min < self.r_max) or not math.isfinite(self.r_max):
            raise ParameterError(f"invalid radial range [{self.r_min}, {self.r_max}]")
        if self.spacing == "uniform":
            nodes = np.linspace(self.r_min, self.r_max, self.n)
        elif self.spacing == "log":
            if self.r_min <= 0.0:
                raise ParameterError("log-spaced grid needs r_min > 0")
            nodes = np.geomspace(self.r_min, self.r_max, self.n)
        else:
            raise ParameterError(f"unknown grid spacing {self.spacing!r}")
        object.__setattr__(self, "nodes", _frozen(nodes))

    @property
    def h(self) -> float:
        """Node spacing (the largest one on a log grid)."""
        if self.spacing == "log":
            return self.r_max * -math.expm1(-self.dx)
        return (self.r_max - self.r_min) / (self.n - 1)

    @property
    def dx(self) -> float:
        """Spacing in ln r (log grids only)."""
        return math.log(self.r_max / self.r_min) / (self.n - 1)

    @property
    def has_origin(self) -> bool:
        return self.r_min == 0.0

    @property
    def disc(self) -> bool:
        """True when the innermost node is a regular centre rather than a boundary."""
        return self.has_origin or self.spacing == "log"

    @property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes carrying the curvature stencil.

        The centre node of a disc counts as interior; the outer node, and
        the inner node of an annulus, do not.
        """
        mask = np.ones(self.n, dtype=bool)
        mask[-1] = False
        if not self.disc:
            mask[0] = False
        return mask

    def to_dict(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "n": self.n, "spacing": self.spacing}


@dataclass(frozen=True)
class Profile:
    """Conformal factor u sampled on a grid at one instant.

    ``singular`` profiles come from :func:`sample_cone` and may carry +inf at
    the origin node; everything else must be finite.
    """

    grid: RadialGrid
    u: np.ndarray
    singular: bool = False

    def __post_init__(self):
        u = _frozen(self.u)
        if u.shape != (self.grid.n,):
            raise ParameterError(f"profile has {u.shape} values for a grid of {self.grid.n} nodes")
        bad = ~np.isfinite(u)
        if self.singular and self.grid.has_origin:
            bad[0] = np.isnan(u[0]) or u[0] == -np.inf
        if bad.any():
            raise ParameterError(f"profile has non-finite values at {int(bad.sum())} nodes")
        object.__setattr__(self, "u", u)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def shifted(self, c: float) -> "Profile":
        return Profile(self.grid, self.u + c, self.singular)


@dataclass(frozen=True)
class CurvatureProfile:
    grid: RadialGrid
    K: np.ndarray  # interior nodes only
    r: np.ndarray

    def min(self) -> float:
        return float(np.min(self.K))

    def max(self) -> float:
        return float(np.max(self.K))


@dataclass(frozen=True)
class ConeData:
    """Cone metric u0 = w + beta*ln r, with the finite part w kept separately.

    ``w_func`` is optional; when given, the cone can be re-sampled on other
    grids (the truncation curvature check zooms into the apex this way).
    """

    beta: float
    w: np.ndarray
    grid: RadialGrid
    w_func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    name: str = "custom"

    def __post_init__(self):
        _check_beta(self.beta)
        w = _frozen(self.w)
        if w.shape != (self.grid.n,) or not np.all(np.isfinite(w)):
            raise ParameterError("finite part w must be finite at every node of the grid")
        object.__setattr__(self, "w", w)

    @property
    def angle(self) -> float:
        return cone_angle(self.beta)

    @classmethod
    def from_function(cls, beta: float, func, grid: RadialGrid, name: str = "custom") -> "ConeData":
        return cls(beta, func(grid.nodes), grid, func, name)

    def on_grid(self, grid: RadialGrid) -> "ConeData":
        if self.w_func is None:
            raise ParameterError("cone has no finite-part function; cannot resample")
        return ConeData(self.beta, self.w_func(grid.nodes), grid, self.w_func, self.name)

    def u0(self, r) -> np.ndarray:
        """Cone factor at arbitrary radii (needs ``w_func``)."""
        if self.w_func is None:
            raise ParameterError("cone has no finite-part function")
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.w_func(r) + self.beta * np.log(r)

    def w_sup(self) -> float:
        return float(np.max(self.w))


def flat_cone(beta: float, grid: RadialGrid) -> ConeData:
    _check_beta(beta)
    c = math.log(2.0 * (beta + 1.0))
    return ConeData.from_function(beta, lambda r: np.full_like(np.asarray(r, float), c), grid, "flat")


def hyperbolic_cone(beta: float, grid: RadialGrid) -> ConeData:
    _check_beta(beta)
    if grid.r_max >= 1.0:
        raise DomainError("hyperbolic cone factor diverges at r = 1; use r_max < 1")
    c = math.log(2.0 * (beta + 1.0))
    p = 2.0 * (beta + 1.0)
    return ConeData.from_function(
        beta, lambda r: c - np.log1p(-np.asarray(r, float) ** p), grid, "hyperbolic")


def cone_angle(beta: float) -> float:
    _check_beta(beta)
    return 2.0 * math.pi * (beta + 1.0)


def eval_flat_cone(beta: float, r):
    """ln(2(beta+1)) + beta ln r: the euclidean cone of angle 2pi(beta+1)."""
    _check_beta(beta)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("flat cone factor is singular at r <= 0")
    out = math.log(2.0 * (beta + 1.0)) + beta * np.log(r)
    return float(out) if out.ndim == 0 else out


def eval_hyperbolic_cone(beta: float, r):
    """Flat cone factor minus ln(1 - r^(2(beta+1))); curvature -1 on 0 < r < 1."""
    _check_beta(beta)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise DomainError("hyperbolic cone factor is defined for 0 < r < 1 only")
    out = (math.log(2.0 * (beta + 1.0)) + beta * np.log(r)
           - np.log1p(-r ** (2.0 * (beta + 1.0))))
    return float(out) if out.ndim == 0 else out


def eval_sphere(r):
    """ln(2/(1+r^2)), the unit round sphere in stereographic coordinates."""
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise DomainError("non-finite radius")
    out = math.log(2.0) - np.log1p(r * r)
    return float(out) if out.ndim == 0 else out


def sample_cone(cone: ConeData) -> Profile:
    """Nodewise u0 = w + beta ln r; the origin of a beta < 0 cone holds +inf."""
    r = cone.grid.nodes
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    if cone.beta == 0.0:
        u = cone.w.copy()
    else:
        u = cone.w + cone.beta * logr
    return Profile(cone.grid, u, singular=True)


# -- discrete radial Laplacian ------------------------------------------------

STENCILS = ("fitted", "central")


def laplacian_coefficients(grid: RadialGrid, stencil: str = "fitted"):
    """Three-point coefficients (lower, diag, upper) of the radial Laplacian.

    Row i approximates u'' + u'/r at node i as
    lower[i]*u[i-1] + diag[i]*u[i] + upper[i]*u[i+1]. Rows of non-interior
    nodes are zero. At the origin the even extension u(-h) = u(h) gives
    2u''(0) = 4(u1 - u0)/h^2.

    ``fitted`` weights are exact on 1, ln r and r^2, so flat cones are
    discretely flat; ``central`` is the plain second-order difference.
    Both have positive off-diagonal weights.
    """
    if stencil not in STENCILS:
        raise ParameterError(f"unknown stencil {stencil!r}")
    if grid.spacing == "log" and stencil != "fitted":
        raise ParameterError("log-spaced grids support the fitted stencil only")
    r = grid.nodes
    n = grid.n
    h = grid.h
    lo = np.zeros(n)
    di = np.zeros(n)
    up = np.zeros(n)
    i = np.arange(1, n - 1)
    if stencil == "central" or grid.has_origin:
        ri = r[i]
        lo[i] = 1.0 / h**2 - 1.0 / (2.0 * h * ri)
        up[i] = 1.0 / h**2 + 1.0 / (2.0 * h * ri)
        di[i] = -2.0 / h**2
    if stencil == "fitted":
        j = i[r[i - 1] > 0.0]
        rm, rc, rp = r[j - 1], r[j], r[j + 1]
        Lm = np.log(rm / rc)
        Lp = np.log(rp / rc)
        Dm = (rm - rc) * (rm + rc)
        Dp = (rp - rc) * (rp + rc)
        det = Lm * Dp - Lp * Dm
        lo[j] = -4.0 * Lp / det
        up[j] = 4.0 * Lm / det
        di[j] = -(lo[j] + up[j])
    if grid.has_origin:
        di[0] = -4.0 / h**2
        up[0] = 4.0 / h**2
    elif grid.spacing == "log":
        # mirror node at r0^2/r1 (reflection in ln r): zero flux at the centre
        r0, r1 = r[0], r[1]
        rm = r0 * r0 / r1
        a = -4.0 * math.log(r1 / r0) / (math.log(rm / r0) * (r1 - r0) * (r1 + r0)
                                          - math.log(r1 / r0) * (rm - r0) * (rm + r0))
        up[0] = 2.0 * a
        di[0] = -2.0 * a
    return lo, di, up


def apply_laplacian(grid: RadialGrid, u: np.ndarray, stencil: str = "fitted") -> np.ndarray:
    """Discrete Laplacian at every node (zero on non-interior nodes)."""
    lo, di, up = laplacian_coefficients(grid, stencil)
    u = np.asarray(u, dtype=float)
    # difference form: constants map to exactly zero
    out = np.zeros_like(u)
    du = np.diff(u)
    out[1:] += lo[1:] * (-du)
    out[:-1] += up[:-1] * du
    out[~grid.interior] = 0.0
    return out


def curvature_values(grid: RadialGrid, u: np.ndarray, stencil: str = "fitted") -> np.ndarray:
    """K = -exp(-2u) * Laplacian(u) at all nodes (zero on non-interior ones)."""
    lap = apply_laplacian(grid, np.asarray(u, float), stencil)
    K = -np.exp(-2.0 * np.asarray(u, float)) * lap
    K[~grid.interior] = 0.0
    return K


def curvature_roundoff(grid: RadialGrid, u: np.ndarray, stencil: str = "fitted") -> np.ndarray:
    """Bound on the floating-point error of :func:`curvature_values`.

    Near a log grid's inner end the stencil weights reach 1/(r dx)^2, so
    differences of O(1) values at unit roundoff dominate K there.
    """
    lo, di, up = laplacian_coefficients(grid, stencil)
    u = np.asarray(u, dtype=float)
    mag = np.abs(u).copy()
    mag[1:] = np.maximum(mag[1:], np.abs(u[:-1]))
    mag[:-1] = np.maximum(mag[:-1], np.abs(u[1:]))
    err = 4.0 * np.finfo(float).eps * (np.abs(lo) + np.abs(up)) * mag * np.exp(-2.0 * u)
    err[~grid.interior] = 0.0
    return err


def gauss_curvature(p: Profile, stencil: str = "fitted") -> CurvatureProfile:
    if not np.all(np.isfinite(p.u)):
        raise ParameterError("curvature needs a finite profile (truncate the cone first)")
    mask = p.grid.interior
    K = curvature_values(p.grid, p.u, stencil)
    return CurvatureProfile(p.grid, _frozen(K[mask]), _frozen(p.grid.nodes[mask]))


# -- geometric quantities ------------------------------------------------------

def area(p: Profile) -> float:
    """2*pi * integral of exp(2u) r dr (composite trapezoid)."""
    if not np.all(np.isfinite(p.u)):
        raise ParameterError("area needs a finite profile")
    r = p.grid.nodes
    total = 2.0 * math.pi * np.trapezoid(np.exp(2.0 * p.u) * r, r)
    if p.grid.spacing == "log":
        total += math.pi * r[0] ** 2 * math.exp(2.0 * p.u[0])  # centre disc
    return float(total)


def _interp(p: Profile, r: float) -> float:
    if not (p.grid.r_min <= r <= p.grid.r_max):
        raise DomainError(f"radius {r} outside grid [{p.grid.r_min}, {p.grid.r_max}]")
    return float(np.interp(r, p.grid.nodes, p.u))


def circumference(p: Profile, r: float) -> float:
    """Length 2*pi*r*exp(u(r)) of the coordinate circle |z| = r."""
    return 2.0 * math.pi * r * math.exp(_interp(p, r))


def radial_distance(p: Profile, r: float, beta: float | None = None) -> float:
    """Metric length of the ray from r_min to r (trapezoid on the nodes).

    On a singular profile of a cone (exponent ``beta``) the first cell,
    where u blows up like beta ln r, is integrated as an exact power law.
    """
    _interp(p, r)
    nodes = p.grid.nodes
    keep = nodes < r
    rr = np.append(nodes[keep], r)
    uu = np.append(p.u[keep], _interp(p, r))
    if np.isfinite(uu[0]):
        return float(np.trapezoid(np.exp(uu), rr))
    if beta is None:
        raise ParameterError("singular profile: pass the cone exponent beta")
    _check_beta(beta)
    r1, u1 = rr[1], uu[1]
    return float(r1 * math.exp(u1) / (beta + 1.0) + np.trapezoid(np.exp(uu[1:]), rr[1:]))
