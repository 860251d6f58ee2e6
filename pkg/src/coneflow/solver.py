"""Radial conformal Ricci flow du/dt = exp(-2u) Lap u on a disc or annulus.

Besides the integrator this module holds the maximum-principle utilities
used by the experiments: ordering of two flows, the curvature floor, the
parabolic rescaling sigma(t) = c^-1 g(c t + t0) and an a-posteriori PDE
residual.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from .errors import ParameterError
from .metric import (Profile, RadialGrid, apply_laplacian, area,
                     curvature_roundoff, curvature_values,
                     laplacian_coefficients)

log = logging.getLogger(__name__)

SCHEMES = ("explicit", "semi-implicit")


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet data at r_max (and at r_min for an annulus).

    ``fixed`` holds the initial value; ``analytic`` calls the supplied
    function of t. A disc (r_min = 0) takes no inner condition: the origin
    is governed by the symmetric stencil.
    """

    kind: str = "fixed"
    outer: Optional[Callable[[float], float]] = None
    inner_kind: Optional[str] = None
    inner: Optional[Callable[[float], float]] = None

    def validate(self, grid: RadialGrid) -> None:
        for kind, fn in ((self.kind, self.outer), (self.inner_kind, self.inner)):
            if kind not in (None, "fixed", "analytic"):
                raise ParameterError(f"unknown boundary kind {kind!r}")
            if kind == "analytic" and fn is None:
                raise ParameterError("analytic boundary needs a function of t")
        if self.kind is None:
            raise ParameterError("outer boundary condition is required")
        if grid.disc and self.inner_kind is not None:
            raise ParameterError("disc domain (r_min = 0) takes no inner boundary condition")
        if not grid.disc and self.inner_kind is None:
            raise ParameterError("annulus domain needs an inner boundary condition")


@dataclass(frozen=True)
class SolverParams:
    t_end: float
    scheme: str = "explicit"
    cfl: float = 0.25
    store_every: int = 1000
    store_times: tuple = ()
    dt_max: float = 1e-3
    dt_rel: float = 0.02
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    max_steps: int = 50_000_000

    def __post_init__(self):
        if not (0.0 < self.cfl <= 0.5):
            raise ParameterError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not (self.t_end > 0.0):
            raise ParameterError(f"t_end must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.store_every < 1:
            raise ParameterError("store_every must be >= 1")
        if self.dt_max <= 0 or self.dt_rel <= 0:
            raise ParameterError("dt_max and dt_rel must be positive")

    def to_dict(self) -> dict:
        return {"t_end": self.t_end, "scheme": self.scheme, "cfl": self.cfl,
                "store_every": self.store_every, "store_times": list(self.store_times),
                "dt_max": self.dt_max, "dt_rel": self.dt_rel,
                "boundary": {"kind": self.boundary.kind, "inner_kind": self.boundary.inner_kind}}


DIAGNOSTIC_KEYS = ("sup_u", "inf_u", "centre_u", "min_K", "max_K", "area", "residual")


@dataclass
class FlowResult:
    params: SolverParams
    grid: RadialGrid
    times: np.ndarray
    profiles: list
    diagnostics: dict
    status: str = "completed"
    stop_reason: str = ""
    dt_max: float = 0.0
    steps: int = 0

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def matrix(self) -> np.ndarray:
        return np.stack([p.u for p in self.profiles])

    def at_time(self, t: float) -> np.ndarray:
        """Linear interpolation in t between stored snapshots."""
        times = self.times
        if t < times[0] - 1e-15 or t > times[-1] + 1e-12 * max(1.0, times[-1]):
            raise ParameterError(f"t={t} outside stored range [{times[0]}, {times[-1]}]")
        j = int(np.searchsorted(times, t, side="right")) - 1
        j = min(max(j, 0), len(times) - 1)
        if j == len(times) - 1 or times[j] == t:
            return self.profiles[j].u.copy()
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * self.profiles[j].u + w * self.profiles[j + 1].u


def _boundary_values(bc: BoundarySpec, u0: np.ndarray, t: float):
    outer = bc.outer(t) if bc.kind == "analytic" else u0[-1]
    inner = None
    if bc.inner_kind == "analytic":
        inner = bc.inner(t)
    elif bc.inner_kind == "fixed":
        inner = u0[0]
    return outer, inner


def _diagnostics(grid: RadialGrid, u: np.ndarray) -> dict:
    # extremes of K beyond what roundoff in the stencil can produce
    K = curvature_values(grid, u)[grid.interior]
    err = curvature_roundoff(grid, u)[grid.interior]
    return {"sup_u": float(np.max(u)), "inf_u": float(np.min(u)), "centre_u": float(u[0]),
            "min_K": float(np.min(K + err)), "max_K": float(np.max(K - err)),
            "area": area(Profile(grid, u))}


def evolve(initial: Profile, params: SolverParams) -> FlowResult:
    """Integrate the flow from ``initial`` to ``params.t_end``.

    Explicit Euler uses dt = cfl * h^2 * exp(2 min u), recomputed every
    step. The semi-implicit scheme freezes exp(-2u) at the old step and
    solves one tridiagonal system per step, with dt growing like
    dt_rel * t between the explicit step and dt_max. Snapshots are stored
    every ``store_every`` steps, at each of ``store_times`` and at t_end.
    Numerical failure stops the run early with the reason recorded.
    """
    grid = initial.grid
    bc = params.boundary
    bc.validate(grid)
    u = np.array(initial.u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ParameterError("initial profile must be finite")
    u_start = u.copy()
    lo, di, up = laplacian_coefficients(grid)
    interior = grid.interior
    n = grid.n
    if grid.spacing == "log":
        local_h2 = (grid.nodes * math.sinh(grid.dx)) ** 2
    else:
        local_h2 = np.full(n, grid.h**2)

    t_end = params.t_end
    status, reason = "completed", ""
    K0 = (curvature_values(grid, u) - curvature_roundoff(grid, u))[interior]
    if float(np.min(K0)) > 1e-12:
        # positively curved data: stay clear of the extinction time Area/(8 pi)
        horizon = 0.9 * area(initial) / (8.0 * math.pi)
        if t_end > horizon:
            reason = f"t_end capped at 0.9*Area/(8pi) = {horizon:.6g}"
            log.warning(reason)
            t_end = horizon

    targets = sorted({float(t) for t in params.store_times if 0.0 < t < t_end})
    targets.append(t_end)
    times = [0.0]
    profiles = [Profile(grid, u.copy())]
    t = 0.0
    step = 0
    dt_used = 0.0
    ti = 0
    tiny = 1e-14 * t_end
    ab = np.zeros((3, n))

    while t < t_end:
        dt_expl = params.cfl * float(np.min(local_h2 * np.exp(2.0 * u)))
        if params.scheme == "explicit":
            dt = dt_expl
        else:
            dt = min(params.dt_max, max(dt_expl, params.dt_rel * t))
        while ti < len(targets) and targets[ti] <= t + tiny:
            ti += 1
        next_target = targets[ti] if ti < len(targets) else t_end
        hit = False
        if t + dt >= next_target - tiny:
            dt = next_target - t
            hit = True
        if dt <= 0.0 or t + dt == t or step >= params.max_steps:
            status = "step-underflow"
            reason = f"dt={dt:.3e} at t={t:.6g}, min u={float(np.min(u)):.6g}"
            log.warning("stopping early: %s", reason)
            break
        a = np.exp(-2.0 * u)
        outer, inner = _boundary_values(bc, u_start, t + dt)
        if params.scheme == "explicit":
            new = u + dt * a * apply_laplacian(grid, u)
        else:
            c = dt * a
            ab[1] = 1.0 - c * di
            ab[0, 1:] = -c[:-1] * up[:-1]
            ab[2, :-1] = -c[1:] * lo[1:]
            for row in np.flatnonzero(~interior):
                ab[1, row] = 1.0
                if row + 1 < n:
                    ab[0, row + 1] = 0.0
                if row - 1 >= 0:
                    ab[2, row - 1] = 0.0
            # increment form: flat stretches give a zero right-hand side, so
            # the solve cannot seed roundoff where the stencil weights are huge
            rhs = c * apply_laplacian(grid, u)
            rhs[~interior] = 0.0
            # boundary rows carry the new boundary value into their neighbours
            rhs[-1] = outer - u[-1]
            if inner is not None:
                rhs[0] = inner - u[0]
            new = u + solve_banded((1, 1), ab, rhs, overwrite_b=True, check_finite=False)
        new[-1] = outer
        if inner is not None:
            new[0] = inner
        if not np.all(np.isfinite(new)):
            status = "non-finite"
            reason = f"non-finite value after step {step} at t={t:.6g}"
            log.warning("stopping early: %s", reason)
            break
        u = new
        t = next_target if hit else t + dt
        step += 1
        dt_used = max(dt_used, dt)
        if hit or step % params.store_every == 0:
            times.append(t)
            profiles.append(Profile(grid, u.copy()))

    times = np.array(times)
    diags = {k: [] for k in DIAGNOSTIC_KEYS}
    for p in profiles:
        for key, val in _diagnostics(grid, p.u).items():
            diags[key].append(val)
    res = FlowResult(params, grid, times, profiles, {}, status, reason, dt_used, step)
    diags["residual"] = [residual(res, m) if m + 1 < len(times) else float("nan")
                         for m in range(len(times))]
    res.diagnostics = {k: np.array(v) for k, v in diags.items()}
    return res


# -- post-processing -------------------------------------------------------------

def default_tol(*flows: FlowResult) -> float:
    h = flows[0].grid.h
    dt = max(f.dt_max for f in flows)
    return 10.0 * (h * h + dt)


def residual(f: FlowResult, m: int, centered: bool = False) -> float:
    """sup over interior nodes of |du/dt - exp(-2u) Lap u| between snapshots m and m+1.

    The forward form evaluates the right-hand side at t_m; ``centered``
    averages it over both snapshots (second order in the stored spacing).
    """
    if len(f.times) < 2:
        raise ParameterError("residual needs at least two stored instants")
    if not (0 <= m < len(f.times) - 1):
        raise ParameterError(f"snapshot index {m} has no successor")
    g = f.grid
    u0, u1 = f.profiles[m].u, f.profiles[m + 1].u
    dt = f.times[m + 1] - f.times[m]
    rhs = np.exp(-2.0 * u0) * apply_laplacian(g, u0)
    if centered:
        rhs = 0.5 * (rhs + np.exp(-2.0 * u1) * apply_laplacian(g, u1))
    r = (u1 - u0) / dt - rhs
    return float(np.max(np.abs(r[g.interior & ~_boundary_mask(g)])))


def _boundary_mask(g: RadialGrid) -> np.ndarray:
    m = np.zeros(g.n, dtype=bool)
    m[-1] = True
    if not g.disc:
        m[0] = True
    return m


@dataclass
class OrderingReport:
    passed: bool
    worst_margin: float
    worst_time: float
    worst_r: float
    tol: float
    initial_ordered: bool

    def to_dict(self) -> dict:
        return dict(vars(self))


def compare_flows(f1: FlowResult, f2: FlowResult, tol: float | None = None,
                  t_min: float = 0.0, t_max: float | None = None) -> OrderingReport:
    """Check u1 <= u2 + tol at every stored time of f1 (f2 interpolated in t)."""
    if f1.grid != f2.grid:
        raise ParameterError("flows live on different grids")
    if tol is None:
        tol = default_tol(f1, f2)
    hi = min(f1.times[-1], f2.times[-1]) if t_max is None else t_max
    r = f1.grid.nodes
    worst, wt, wr = math.inf, 0.0, 0.0
    for t, p in zip(f1.times, f1.profiles):
        if t < t_min or t > hi + 1e-12:
            continue
        margin = f2.at_time(min(t, f2.times[-1])) - p.u
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst, wt, wr = float(margin[i]), float(t), float(r[i])
    init = bool(np.all(f1.profiles[0].u <= f2.profiles[0].u))
    return OrderingReport(worst >= -tol, worst, wt, wr, tol, init)


@dataclass
class FloorReport:
    min_K: np.ndarray
    times: np.ndarray
    Lambda: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.min(self.min_K) >= -self.Lambda - self.tol)

    def to_dict(self) -> dict:
        return {"Lambda": self.Lambda, "tol": self.tol, "pass": self.passed,
                "floor": float(np.min(self.min_K)),
                "min_K": self.min_K.tolist(), "times": self.times.tolist()}


def curvature_floor(f: FlowResult, tol: float | None = None) -> FloorReport:
    """Per-snapshot min K; Lambda is -min K at t = 0, clamped to >= 0."""
    mk = np.asarray(f.diagnostics["min_K"], float)
    lam = max(0.0, -float(mk[0]))
    return FloorReport(mk, f.times.copy(), lam, default_tol(f) if tol is None else tol)


def parabolic_rescale(f: FlowResult, Lambda: float, t0: float) -> FlowResult:
    """sigma(t) = c^-1 g(c t + t0) with c = exp(2 Lambda t0).

    In conformal factors u_sigma(r, t) = u(r, c t + t0) - Lambda t0. The
    new snapshots sit at the old ones at or after t0 (plus t0 itself).
    """
    if Lambda < 0:
        raise ParameterError("Lambda must be >= 0")
    if not (0.0 <= t0 < f.times[-1]):
        raise ParameterError(f"t0={t0} outside [0, {f.times[-1]})")
    c = math.exp(2.0 * Lambda * t0)
    src = np.concatenate([[t0], f.times[f.times > t0]])
    shift = Lambda * t0
    profiles = [Profile(f.grid, f.at_time(float(s)) - shift) for s in src]
    times = (src - t0) / c
    out = FlowResult(f.params, f.grid, times, profiles, {}, f.status, f.stop_reason,
                     f.dt_max / c, f.steps)
    diags = {k: [] for k in DIAGNOSTIC_KEYS}
    for p in profiles:
        for key, val in _diagnostics(f.grid, p.u).items():
            diags[key].append(val)
    diags["residual"] = [residual(out, m) if m + 1 < len(times) else float("nan")
                         for m in range(len(times))]
    out.diagnostics = {k: np.array(v) for k, v in diags.items()}
    return out
