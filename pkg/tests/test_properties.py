"""Property-based checks of the invariants (hypothesis)."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coneflow import barrier as bar
from coneflow import io
from coneflow.metric import Profile, RadialGrid, apply_laplacian
from coneflow.solver import SolverParams, compare_flows, evolve
from coneflow.truncation import psi, psi_d1, truncate_values

finite = st.floats(-50, 50, allow_nan=False)
betas = st.floats(-0.9, -0.1)
levels = st.floats(-5, 20)
SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(arrays(float, st.integers(1, 64), elements=finite), levels)
def test_truncation_below_min(u0, k):
    uk = truncate_values(u0, k)
    assert np.all(uk <= np.minimum(u0, k))


@given(arrays(float, st.integers(1, 64), elements=finite), levels, st.floats(0, 5))
def test_truncation_monotone_in_level(u0, k, dk):
    assert np.all(truncate_values(u0, k) <= truncate_values(u0, k + dk))


@given(arrays(float, st.integers(1, 64), elements=finite), levels)
def test_truncation_equality_zones(u0, k):
    uk = truncate_values(u0, k)
    low = u0 <= k - 1.0
    high = u0 >= k + 1.0
    assert np.array_equal(uk[low], u0[low])
    assert np.all(uk[high] == k)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_psi_monotone_lipschitz(a, b):
    lo, hi = min(a, b), max(a, b)
    assert psi(lo) <= psi(hi) + 1e-15
    assert psi(hi) - psi(lo) <= hi - lo + 1e-12
    assert 0.0 <= psi_d1(a) <= 1.0


@given(st.floats(1e-6, 0.1), st.floats(1e-6, 0.1), betas, st.floats(-1, 3))
def test_cap_radius_monotone_in_time(t1, t2, beta, C):
    lo, hi = min(t1, t2), max(t1, t2)
    a = bar.lambda_bar(lo, beta, C, check_window=False)
    b = bar.lambda_bar(hi, beta, C, check_window=False)
    assert a <= b * (1 + 1e-12)


@given(st.floats(1e-6, 0.1), betas, st.floats(-1, 3))
def test_cap_radius_absorbs_C_into_time(t, beta, C):
    lhs = bar.lambda_bar(t, beta, C, check_window=False)
    rhs = bar.lambda_bar(t * math.exp(-2 * C), beta, 0.0, check_window=False)
    assert math.isclose(lhs, rhs, rel_tol=1e-12)


@SLOW
@given(betas)
def test_calibrated_barrier_is_supersolution(beta):
    spec = bar.calibrate_C(beta, (1e-4, 1e-2))
    rep = bar.check_barrier_pde(spec, (1e-4, 1e-2), n=24)
    assert rep.pass_ and rep.min_margin > 0


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_laplacian_exact_on_harmonic_and_quadratic(a, b, c):
    g = RadialGrid(0.05, 1.0, 48)
    u = a + b * np.log(g.nodes) + c * g.nodes ** 2
    lap = apply_laplacian(g, u)[g.interior]
    assert np.allclose(lap, 4.0 * c, atol=1e-8 * (1 + abs(a) + abs(b) + abs(c)) / g.h ** 2)


@SLOW
@given(st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3),
       st.lists(st.floats(0.0, 0.3), min_size=3, max_size=3))
def test_comparison_principle(coef, lift):
    # ordered initial data (same boundary value) stay ordered along the flow
    g = RadialGrid(0.0, 1.0, 33)
    x = g.nodes
    modes = [np.cos(0.5 * math.pi * (2 * j + 1) * x) for j in range(3)]
    u = sum(c * m for c, m in zip(coef, modes))
    bumpy = np.cos(0.5 * math.pi * x) ** 2
    v = u + sum(lift) * bumpy
    params = SolverParams(0.02, "explicit", store_times=(0.005, 0.01), store_every=10**9)
    fu = evolve(Profile(g, u), params)
    fv = evolve(Profile(g, v), params)
    assert compare_flows(fu, fv, tol=1e-12).passed


@given(arrays(float, st.integers(2, 20),
              elements=st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)))
@settings(suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_csv_roundtrip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    io.write_csv(path, ("i", "v"), (np.arange(len(values)), values))
    _, cols = io.read_csv(path)
    assert np.array_equal(cols["v"], values)
