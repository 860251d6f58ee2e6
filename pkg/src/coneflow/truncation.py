"""Smoothed-minimum capping of a cone metric.

The cone factor u0 blows up at the apex. Replacing it by
u_k = psi(u0 - k) + k, with psi a C^2 ramp that equals s below -1 and 0
above +1, gives smooth factors that increase with k, agree with u0 away
from a shrinking disc and keep the curvature bounded below by
min(e^2 K[g0], 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .metric import (ConeData, Profile, RadialGrid, curvature_values,
                     sample_cone)

HALF_PI = 0.5 * math.pi


def psi(s):
    """C^2 smoothed min(s, 0): psi' ramps from 1 to 0 on [-1, 1] like (1 - sin(pi s/2))/2."""
    s = np.asarray(s, dtype=float)
    mid = 0.5 * s - 0.5 + np.cos(HALF_PI * s) / math.pi
    out = np.where(s <= -1.0, s, np.where(s >= 1.0, 0.0, mid))
    return float(out) if out.ndim == 0 else out


def psi_d1(s):
    s = np.asarray(s, dtype=float)
    mid = 0.5 * (1.0 - np.sin(HALF_PI * s))
    out = np.where(s <= -1.0, 1.0, np.where(s >= 1.0, 0.0, mid))
    return float(out) if out.ndim == 0 else out


def psi_d2(s):
    s = np.asarray(s, dtype=float)
    mid = -0.25 * math.pi * np.cos(HALF_PI * s)
    out = np.where((s <= -1.0) | (s >= 1.0), 0.0, mid)
    return float(out) if out.ndim == 0 else out


def _deficit(s: np.ndarray) -> np.ndarray:
    """psi(s) - min(s, 0), clipped to <= 0 so roundoff cannot lift u_k above min(u0, k)."""
    c = np.cos(HALF_PI * s) / math.pi
    d = np.where(s < 0.0, -0.5 * s - 0.5 + c, 0.5 * s - 0.5 + c)
    return np.minimum(d, 0.0)


def truncate_values(u0: np.ndarray, k: float) -> np.ndarray:
    """Nodewise u_k for raw values; +inf (the apex sentinel) maps to k."""
    if not math.isfinite(k):
        raise ParameterError(f"cap level must be finite, got {k!r}")
    u0 = np.asarray(u0, dtype=float)
    out = np.empty_like(u0)
    low = u0 <= k - 1.0
    high = u0 >= k + 1.0
    mid = ~(low | high)
    out[low] = u0[low]
    out[high] = k
    s = u0[mid] - k
    out[mid] = np.minimum(u0[mid], k) + _deficit(s)
    return out


def truncate(cone: ConeData, k: float) -> Profile:
    """Smooth capped factor u_k = psi(u0 - k) + k on the cone's grid."""
    u0 = sample_cone(cone).u
    return Profile(cone.grid, truncate_values(u0, k))


# -- curvature bound --------------------------------------------------------

@dataclass
class WindowCheck:
    radius: float
    resolving: bool
    min_margin: float
    argmin_r: float
    checked_nodes: int


@dataclass
class CurvatureBoundReport:
    """Outcome of checking K[g_k] >= min(e^2 K[g0], 0) - tol.

    Margins are in the chart's nondimensional units (see
    :func:`curvature_bound_check`).
    """

    beta: float
    k: float
    tol: float
    min_margin: float
    windows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tol

    def to_dict(self) -> dict:
        return {
            "beta": self.beta, "k": self.k, "tol": self.tol,
            "min_margin": self.min_margin, "pass": self.passed,
            "windows": [vars(w) for w in self.windows],
        }


def _cone_curvature(grid: RadialGrid, u0: np.ndarray, stencil: str) -> np.ndarray:
    """Discrete K[g0] with the apex node(s) filled from the first clean node."""
    u = u0.copy()
    if grid.has_origin:
        u[0] = u[1]
        K = curvature_values(grid, u, stencil)
        K[:2] = K[2]
    else:
        K = curvature_values(grid, u, stencil)
    return K


def _window_margin(cone: ConeData, k: float, stencil: str, all_nodes: bool, ref_len: float):
    grid = cone.grid
    u0 = sample_cone(cone).u
    uk = truncate_values(u0, k)
    Kk = curvature_values(grid, uk, stencil)
    K0 = _cone_curvature(grid, u0, stencil)
    bound = np.minimum(math.e**2 * K0, 0.0)
    # scale the window so its edge circle has the chart's edge length
    edge_len = grid.r_max * math.exp(uk[-1])
    scale = (edge_len / ref_len) ** 2
    mask = grid.interior.copy()
    if not all_nodes:
        mask &= grid.nodes >= grid.r_max / 50.0
    margin = (Kk - bound)[mask] * scale
    i = int(np.argmin(margin))
    return float(margin[i]), float(grid.nodes[mask][i]), int(mask.sum())


def curvature_bound_check(cone: ConeData, k: float, tol_factor: float = 10.0,
                          stencil: str = "fitted", zoom: bool = True) -> CurvatureBoundReport:
    """Check the lower curvature bound for the level-k truncation.

    High caps live in discs far smaller than the grid spacing, so the check
    runs on a ladder of windows [0, R] shrinking by 16x until the cap is
    resolved by at least four cells. Every window uses the cone grid's node
    count and is rescaled (coordinate and metric) onto the chart so the
    tolerance ``tol_factor * h^2`` is measured in chart units. A
    non-resolving window only checks nodes with r >= R/50, where the
    sampled profile is smooth on the grid scale.
    """
    grid = cone.grid
    h = grid.h
    tol = tol_factor * h * h
    u_top = truncate_values(sample_cone(cone).u, k)
    ref_len = grid.r_max * math.exp(u_top[-1])
    report = CurvatureBoundReport(cone.beta, k, tol, math.inf)

    def resolves(c: ConeData) -> bool:
        if not c.grid.has_origin:
            return True
        return bool(np.all(sample_cone(c).u[1:5] >= k + 1.0))

    windows = [cone]
    if zoom and grid.has_origin and cone.beta < 0.0 and cone.w_func is not None:
        R = grid.r_max
        while not resolves(windows[-1]) and R > 1e-300:
            R /= 16.0
            windows.append(cone.on_grid(RadialGrid(0.0, R, grid.n)))
    for c in windows:
        res = resolves(c)
        m, at, count = _window_margin(c, k, stencil, res or not zoom, ref_len)
        report.windows.append(WindowCheck(c.grid.r_max, res, m, at, count))
        report.min_margin = min(report.min_margin, m)
    return report


# -- sequences ---------------------------------------------------------------

def level_for_radius(cone: ConeData, j: int) -> float:
    """Smallest cap level whose modified region {u0 > k-1} sits inside D_{1/j}."""
    if cone.beta == 0.0:
        return cone.w_sup() + 1.0
    return cone.w_sup() + cone.beta * math.log(1.0 / j) + 1.0


def support_radius(cone: ConeData, k: float) -> float:
    """Radius bounding the modified region {u0 > k - 1} (0 when empty)."""
    if cone.beta == 0.0:
        return 0.0
    return min(1.0, math.exp((k - 1.0 - cone.w_sup()) / cone.beta))


@dataclass(frozen=True)
class TruncationSequence:
    cone: ConeData
    levels: tuple
    profiles: tuple
    support_radii: tuple
    degenerate: bool = False

    def to_manifest(self) -> dict:
        return {
            "beta": self.cone.beta,
            "levels": list(self.levels),
            "support_radii": list(self.support_radii),
            "degenerate": self.degenerate,
            "grid": self.cone.grid.to_dict(),
        }


def build_sequence(cone: ConeData, count: int | None = None, levels=None) -> TruncationSequence:
    """Increasing family of truncations.

    With ``count`` the levels are k_j = sup w + |beta| ln j + 1 for
    j = 1..count, so the j-th truncation only differs from the cone inside
    D_{1/j}. Explicit ``levels`` are used as given (sorted).
    """
    if levels is None:
        if count is None or count < 2:
            raise ParameterError("build_sequence needs count >= 2 or explicit levels")
        levels = [level_for_radius(cone, j) for j in range(1, count + 1)]
    levels = tuple(sorted(float(k) for k in levels))
    # beta = 0 has no apex: the schedule repeats one level and is flagged degenerate
    if len(levels) < 2 or (cone.beta != 0.0 and len(set(levels)) != len(levels)):
        raise ParameterError("need at least two distinct cap levels")
    u0 = sample_cone(cone).u
    degenerate = cone.beta == 0.0 and bool(np.all(u0 <= levels[0] - 1.0))
    profiles = tuple(Profile(cone.grid, truncate_values(u0, k)) for k in levels)
    radii = tuple(support_radius(cone, k) for k in levels)
    return TruncationSequence(cone, levels, profiles, radii, degenerate)
