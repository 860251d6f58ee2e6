import math

import mpmath
import numpy as np
import pytest

from coneflow import barrier as bar
from coneflow.errors import BarrierWindowError, DomainError, ParameterError
from coneflow.experiments import make_cone
from coneflow.solver import SolverParams, evolve
from coneflow.truncation import truncate

LAMBDA_AT_0_01 = 1.353352832366127e-3  # 0.01 * e^-2 for beta = -1/2, C = 1
TOP_AT_0_01 = math.log(2) + math.log(10) - math.log(0.99)  # U(0, 0.01), beta = -1/2, C = 0


def test_lambda_bar_value():
    assert bar.lambda_bar(0.01, -0.5, 1.0) == pytest.approx(LAMBDA_AT_0_01, rel=1e-14)


def test_barrier_top_value():
    spec = bar.BarrierSpec(-0.5, 0.0)
    assert TOP_AT_0_01 == pytest.approx(3.005783, abs=5e-7)
    assert bar.blunt_cone(0.0, 0.01, spec) == pytest.approx(TOP_AT_0_01, rel=1e-14)
    assert bar.cap_top(0.01, -0.5, 0.0) == pytest.approx(TOP_AT_0_01, rel=1e-14)


def test_lambda_bar_window_and_domain():
    with pytest.raises(BarrierWindowError):
        bar.lambda_bar(2.0, -0.5, 0.0)
    assert bar.lambda_bar(2.0, -0.5, 0.0, check_window=False) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        bar.lambda_bar(0.0, -0.5, 0.0)
    with pytest.raises(ParameterError):
        bar.lambda_bar(0.1, 0.0, 0.0)
    assert bar.lambda_critical(0.01, -0.5, 0.0) > bar.lambda_bar(0.01, -0.5, 0.0)


def test_decay_slope():
    assert bar.decay_slope(-0.5) == -0.5
    assert bar.decay_slope(-0.75) == pytest.approx(-1.5)


@pytest.mark.parametrize("beta", [-0.25, -0.5, -0.75])
def test_blunt_cone_continuous_at_cap_edge(beta):
    spec = bar.BarrierSpec(beta, 0.3)
    lam = bar.lambda_bar(1e-3, beta, 0.3)
    inside = bar.blunt_cone(lam * (1 - 1e-12), 1e-3, spec)
    outside = bar.blunt_cone(lam * (1 + 1e-12), 1e-3, spec)
    assert inside == pytest.approx(outside, abs=1e-9)
    with pytest.raises(DomainError):
        bar.blunt_cone(1.0, 1e-3, spec)
    assert bar.blunt_cone_on_grid(np.array([0.5, 1.0]), 1e-3, spec)[1] == np.inf


@pytest.mark.parametrize("beta", [-0.25, -0.5, -0.75])
def test_cap_diffusion_against_high_precision(beta):
    C, t = 0.2, 3e-3
    lam = bar.lambda_bar(t, beta, C)
    mpmath.mp.dps = 40

    def S(x):
        return (mpmath.log(2) - mpmath.log(1 + (x / lam) ** 2) + mpmath.log(2 * (beta + 1))
                + beta * mpmath.log(lam) - mpmath.log(1 - mpmath.mpf(lam) ** (2 * (beta + 1))) + C)

    for rho in (0.2, 0.7):
        r = mpmath.mpf(rho * lam)
        lap = mpmath.diff(S, r, 2) + mpmath.diff(S, r, 1) / r
        ref = float(mpmath.e ** (-2 * S(r)) * lap)
        assert bar.cap_diffusion_term(t, beta, C) == pytest.approx(ref, rel=1e-10)
        assert float(bar.cap_diffusion_fd(rho * lam, t, beta, C)) == pytest.approx(ref, rel=1e-6)


def test_cap_time_derivative_against_difference_quotient():
    beta, C, r, t = -0.5, 0.0, 2e-4, 1e-3
    h = 1e-7 * t

    def S(tt):
        return bar.cap_value(r, bar.lambda_bar(tt, beta, C), beta, C)

    fd = (S(t + h) - S(t - h)) / (2 * h)
    assert bar.cap_time_derivative(r, t, beta, C) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("beta", [-0.25, -0.5, -0.75])
def test_barrier_inequality_after_calibration(beta):
    spec = bar.calibrate_C(beta, (1e-4, 1e-2))
    assert spec.calibrated and spec.B is not None
    rep = bar.check_barrier_pde(spec, (1e-4, 1e-2))
    assert rep.pass_ and rep.min_margin > 0 and rep.min_rel_margin >= 0.1
    assert rep.to_dict()["pass"]


def test_check_barrier_pde_rejects_bad_window():
    spec = bar.BarrierSpec(-0.5, 0.0)
    with pytest.raises(DomainError):
        bar.check_barrier_pde(spec, (1e-2, 1e-4))
    with pytest.raises(BarrierWindowError):
        bar.check_barrier_pde(spec, (1e-2, 5.0))


def test_sup_bound_dominates_cap_top():
    spec = bar.BarrierSpec(-0.5, 0.0).with_window(1e-4, 1e-2)
    ts = np.geomspace(1e-4, 1e-2, 50)
    top, affine = bar.sup_bound(ts, spec)
    assert np.all(top <= affine + 1e-12)
    with pytest.raises(ParameterError):
        bar.sup_bound(0.01, bar.BarrierSpec(-0.5, 0.0))
    with pytest.raises(DomainError):
        bar.sup_bound(2.0, spec)


@pytest.fixture(scope="module")
def small_flow():
    cone = make_cone("flat", -0.5, 256, deepest=5)
    f = evolve(truncate(cone, 5), SolverParams(0.05, "semi-implicit", store_every=10**9,
                                               store_times=tuple(np.geomspace(1e-5, 0.05, 12))))
    return cone, f


def test_flow_stays_under_barrier(small_flow):
    cone, f = small_flow
    spec = bar.calibrate_C(-0.5, (1e-4, 1e-2))
    rep = bar.verify_flow_under_barrier(f, spec, cone.w_sup())
    assert rep.passed and rep.to_dict()["pass"]


def test_flow_above_barrier_fails(small_flow):
    cone, f = small_flow
    low = bar.BarrierSpec(-0.5, -1.0)
    rep = bar.verify_flow_under_barrier(f, low, cone.w_sup(), match=False)
    assert not rep.passed and rep.worst_violation > rep.tol


def test_barrier_hypothesis_violation_rejected(small_flow):
    cone, f = small_flow
    with pytest.raises(ParameterError):
        bar.verify_flow_under_barrier(f, bar.BarrierSpec(-0.5, 0.0), cone.w_sup() - 1.0)
