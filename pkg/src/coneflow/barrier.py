"""Blunt-cone upper barrier for conformal factors near a cone point.

U(r, t) glues a rescaled round cap s(r/lam) + v1(lam) + C on r <= lam(t)
to the shifted hyperbolic cone v1(r) + C outside. With the cap radius
lam(t) = (-t e^(-2C) / (4 beta (beta+1)))^(1/(2(beta+1))) it is a
supersolution of du/dt = exp(-2u) Lap u on the cap, and its maximum
decays like B + beta/(2(beta+1)) ln t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BarrierWindowError, DomainError, ParameterError
from .metric import eval_hyperbolic_cone, eval_sphere

LN2 = math.log(2.0)


def _check_beta(beta: float) -> None:
    if beta == 0.0:
        raise ParameterError("beta = 0 is a smooth point: the cap radius formula divides by beta "
                             "and no barrier is needed")
    if not (-1.0 < beta < 0.0):
        raise ParameterError(f"barrier needs beta in (-1, 0), got {beta!r}")


def decay_slope(beta: float) -> float:
    """Coefficient beta/(2(beta+1)) of ln t in the sup bound."""
    return beta / (2.0 * (beta + 1.0))


def lambda_bar(t, beta: float, C: float, check_window: bool = True):
    """Cap radius of the barrier at time t (increasing, -> 0 as t -> 0+)."""
    _check_beta(beta)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("cap radius is defined for t > 0 only")
    x = -t * math.exp(-2.0 * C) / (4.0 * beta * (beta + 1.0))
    lam = x ** (1.0 / (2.0 * (beta + 1.0)))
    if check_window and np.any(lam >= 1.0):
        raise BarrierWindowError(f"barrier cap radius reached {float(np.max(lam)):.4g} >= 1")
    return float(lam) if lam.ndim == 0 else lam


def lambda_critical(t, beta: float, C: float):
    """Radius balancing the two sides exactly when the flat-cone limit is taken.

    Kept for reference; the verified inequality uses :func:`lambda_bar`,
    which is this radius with 2 replaced by 4 in the denominator.
    """
    _check_beta(beta)
    t = np.asarray(t, dtype=float)
    x = -t * math.exp(-2.0 * C) / (2.0 * beta * (beta + 1.0))
    lam = x ** (1.0 / (2.0 * (beta + 1.0)))
    return float(lam) if lam.ndim == 0 else lam


def cap_value(r, lam, beta: float, C: float):
    """S(r, lam) = s(r/lam) + v1(lam) + C."""
    return eval_sphere(np.asarray(r, float) / lam) + eval_hyperbolic_cone(beta, lam) + C


@dataclass
class BarrierSpec:
    """Barrier parameters. ``B`` is filled by :meth:`with_window`."""

    beta: float
    C: float
    B: float | None = None
    window: tuple | None = None
    calibrated: bool = False

    def __post_init__(self):
        _check_beta(self.beta)
        if not math.isfinite(self.C):
            raise ParameterError("barrier constant C must be finite")

    def with_window(self, t_lo: float, t_hi: float, n: int = 256) -> "BarrierSpec":
        return BarrierSpec(self.beta, self.C, compute_B(self.beta, self.C, t_lo, t_hi, n),
                           (t_lo, t_hi), self.calibrated)


def blunt_cone(r, t: float, spec: BarrierSpec):
    """Barrier value U(r, t); +inf is never returned, r >= 1 is rejected."""
    r = np.asarray(r, dtype=float)
    if np.any(r >= 1.0) or np.any(r < 0.0):
        raise DomainError("blunt cone barrier is defined for 0 <= r < 1")
    lam = lambda_bar(t, spec.beta, spec.C)
    out = np.empty_like(r)
    cap = r <= lam
    out[cap] = cap_value(r[cap], lam, spec.beta, spec.C)
    if np.any(~cap):
        out[~cap] = eval_hyperbolic_cone(spec.beta, r[~cap]) + spec.C
    return float(out) if out.ndim == 0 else out


def blunt_cone_on_grid(r: np.ndarray, t: float, spec: BarrierSpec) -> np.ndarray:
    """Like :func:`blunt_cone` but +inf at r >= 1 (the v1 asymptote)."""
    r = np.asarray(r, dtype=float)
    out = np.full_like(r, np.inf)
    inside = r < 1.0
    out[inside] = blunt_cone(r[inside], t, spec)
    return out


# -- analytic derivatives of the cap -------------------------------------------

def cap_time_derivative(r, t, beta: float, C: float):
    """dS/dt along lam = lambda_bar(t), from the chain rule."""
    lam = lambda_bar(t, beta, C)
    rho = np.asarray(r, float) / lam
    p = 2.0 * (beta + 1.0)
    dv1 = beta / lam + p * lam ** (p - 1.0) / (1.0 - lam**p)
    ds = 2.0 * rho * rho / ((1.0 + rho * rho) * lam)  # -s'(rho) * rho / lam
    dlam = lam / (p * t)
    return (ds + dv1) * dlam


def cap_time_derivative_lower(t, beta: float, C: float):
    """(beta/lam) dlam/dt = beta/(2(beta+1)t), the bound dropping the s' and v1 corrections."""
    return decay_slope(beta) / np.asarray(t, float)


def cap_diffusion_term(t, beta: float, C: float):
    """exp(-2S) Lap S on the cap; independent of r."""
    lam = lambda_bar(t, beta, C)
    p = 2.0 * (beta + 1.0)
    return -(lam ** (-p)) / (beta + 1.0) ** 2 * math.exp(-2.0 * C) / 4.0 * (1.0 - lam**p) ** 2


def cap_diffusion_fd(r, t, beta: float, C: float, rel_step: float = 2e-4):
    """exp(-2S) Lap S by central differences in r (independent check)."""
    lam = lambda_bar(t, beta, C)
    r = np.asarray(r, float)
    h = rel_step * lam
    S = lambda x: cap_value(x, lam, beta, C)
    s0 = S(r)
    sp, sm = S(r + h), S(np.abs(r - h))
    lap = np.where(
        r > 0.5 * h,
        (sp - 2.0 * s0 + sm) / h**2 + (sp - sm) / (2.0 * h * np.maximum(r, h)),
        4.0 * (sp - s0) / h**2,
    )
    return np.exp(-2.0 * s0) * lap


@dataclass
class BarrierPDEReport:
    beta: float
    C: float
    B: float
    window: tuple
    min_margin: float
    min_rel_margin: float
    chain_rule_ok: bool
    pass_: bool = field(default=False)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "C": self.C, "B": self.B, "window": list(self.window),
                "min_margin": self.min_margin, "min_rel_margin": self.min_rel_margin,
                "chain_rule_ok": self.chain_rule_ok, "pass": self.pass_}


def check_barrier_pde(spec: BarrierSpec, t_window, n: int = 64) -> BarrierPDEReport:
    """Sample dS/dt > exp(-2S) Lap S on 0 < r <= lam(t), t log-uniform in the window."""
    t_lo, t_hi = t_window
    if not (0.0 < t_lo < t_hi):
        raise DomainError(f"bad time window {t_window!r}")
    lambda_bar(t_hi, spec.beta, spec.C)  # raises when the cap leaves the disc
    ts = np.geomspace(t_lo, t_hi, n)
    frac = np.linspace(0.0, 1.0, n + 1)[1:]
    min_margin = math.inf
    min_rel = math.inf
    chain_ok = True
    for t in ts:
        lam = lambda_bar(t, spec.beta, spec.C)
        r = frac * lam
        lhs = cap_time_derivative(r, t, spec.beta, spec.C)
        rhs = cap_diffusion_term(t, spec.beta, spec.C)
        margin = lhs - rhs
        min_margin = min(min_margin, float(np.min(margin)))
        min_rel = min(min_rel, float(np.min(margin / np.abs(lhs))))
        chain_ok &= bool(np.all(lhs >= cap_time_derivative_lower(t, spec.beta, spec.C)))
    B = compute_B(spec.beta, spec.C, t_lo, t_hi)
    rep = BarrierPDEReport(spec.beta, spec.C, B, (t_lo, t_hi), min_margin, min_rel, chain_ok)
    rep.pass_ = min_margin > 0.0 and chain_ok
    return rep


def calibrate_C(beta: float, t_window, C0: float = 0.0, step: float = 0.25,
                rel_margin: float = 0.1, max_iter: int = 200) -> BarrierSpec:
    """Raise C from C0 until the cap inequality holds with margin >= rel_margin * |dS/dt|."""
    C = C0
    for _ in range(max_iter):
        try:
            rep = check_barrier_pde(BarrierSpec(beta, C), t_window)
        except BarrierWindowError:
            rep = None
        if rep is not None and rep.pass_ and rep.min_rel_margin >= rel_margin:
            return BarrierSpec(beta, C, rep.B, tuple(t_window), calibrated=True)
        C += step
    raise ParameterError(f"no C <= {C} makes the barrier inequality hold on {t_window}")


# -- sup bound -----------------------------------------------------------------

def cap_top(t, beta: float, C: float):
    """S(0, lam(t)) = ln 2 + v1(lam) + C, the barrier maximum."""
    lam = lambda_bar(t, beta, C)
    return LN2 + eval_hyperbolic_cone(beta, lam) + C


def compute_B(beta: float, C: float, t_lo: float, t_hi: float, n: int = 256) -> float:
    """sup over the window of S(0, lam(t)) - slope * ln t."""
    ts = np.geomspace(t_lo, t_hi, n)
    return float(np.max(cap_top(ts, beta, C) - decay_slope(beta) * np.log(ts)))


def sup_bound(t, spec: BarrierSpec):
    """(S(0, lam(t)), B + slope ln t) for t in (0, 1]."""
    t = np.asarray(t, float)
    if np.any(t <= 0) or np.any(t > 1):
        raise DomainError("sup bound is stated for t in (0, 1]")
    if spec.B is None:
        raise ParameterError("barrier spec has no B; call with_window first")
    top = cap_top(t, spec.beta, spec.C)
    affine = spec.B + decay_slope(spec.beta) * np.log(t)
    if t.ndim == 0:
        return float(top), float(affine)
    return top, affine


# -- flows under the barrier ----------------------------------------------------

@dataclass
class BarrierFlowReport:
    beta: float
    A: float
    C_effective: float
    B: float
    tol: float
    worst_violation: float
    worst_time: float
    worst_r: float
    sup_violation: float

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.tol and self.sup_violation <= self.tol

    def to_dict(self) -> dict:
        d = dict(vars(self))
        d["pass"] = self.passed
        return d


def matched_spec(spec: BarrierSpec, A: float, t_end: float) -> BarrierSpec:
    """Shift C so v1 + C majorizes A + beta ln r and absorbs the hyperbolic drift up to t_end."""
    shift = max(0.0, A - math.log(2.0 * (spec.beta + 1.0)))
    drift = 0.5 * math.log1p(2.0 * t_end)
    return BarrierSpec(spec.beta, spec.C + shift + drift, calibrated=spec.calibrated)


def verify_flow_under_barrier(flow, spec: BarrierSpec, A: float,
                              tol: float | None = None, match: bool = True) -> BarrierFlowReport:
    """Check u(r, t) <= U(r, t) + tol at every stored instant of ``flow``.

    With ``match`` the constant C is first raised by :func:`matched_spec` so
    the barrier majorizes A + beta ln r; otherwise ``spec.C`` is used as is.
    Raises ParameterError when the initial profile violates
    u(., 0) <= A + beta ln r (the barrier hypothesis).
    """
    grid = flow.grid
    r = grid.nodes
    pos = r > 0
    u_init = flow.profiles[0].u
    if np.any(u_init[pos] > A + spec.beta * np.log(r[pos]) + 1e-12):
        raise ParameterError("initial profile exceeds A + beta ln r; barrier hypothesis fails")
    t_pos = flow.times[flow.times > 0]
    if t_pos.size == 0:
        raise ParameterError("flow has no stored positive times")
    matched = matched_spec(spec, A, float(flow.times[-1])) if match else spec
    matched = matched.with_window(float(t_pos[0]), float(t_pos[-1]))
    if tol is None:
        tol = 10.0 * (grid.h**2 + flow.dt_max)
    worst, wt, wr, sup_v = -math.inf, 0.0, 0.0, -math.inf
    for t, prof in zip(flow.times, flow.profiles):
        if t <= 0:
            continue
        U = blunt_cone_on_grid(r, float(t), matched)
        diff = prof.u - U
        i = int(np.argmax(diff))
        if diff[i] > worst:
            worst, wt, wr = float(diff[i]), float(t), float(r[i])
        if t <= 1.0:
            _, affine = sup_bound(float(t), matched)
            sup_v = max(sup_v, float(np.max(prof.u)) - affine)
    return BarrierFlowReport(spec.beta, A, matched.C, matched.B, tol, worst, wt, wr, sup_v)
