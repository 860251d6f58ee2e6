"""End-to-end acceptance checks, one per criterion, at their stated tolerances.

Each check records a PASS/FAIL line in ``RESULTS``; the conftest prints
them in the terminal summary. Run as a script to get the lines directly::

    python tests/test_acceptance.py
"""
from __future__ import annotations

import filecmp
import functools
import sys
import tempfile
from pathlib import Path

import numpy as np

from coneflow import barrier as bar
from coneflow import experiments as ex
from coneflow.cli import identity_check, main
from coneflow.metric import RadialGrid, flat_cone, hyperbolic_cone, sample_cone
from coneflow.solver import SolverParams, evolve
from coneflow.truncation import curvature_bound_check, truncate

BETAS = (-0.25, -0.5, -0.75)
BARRIER_WINDOW = (1e-4, 1e-2)
RESULTS: dict = {}


def _record(num: int, title: str, ok: bool, detail: str) -> bool:
    RESULTS[num] = (bool(ok), f"{'PASS' if ok else 'FAIL'} [{num}] {title}: {detail}")
    print(RESULTS[num][1])
    return bool(ok)


# -- shared runs -------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def half_cone_setup():
    """Flat cone beta = -1/2 on a log grid, levels 4..8, with every probe time stored."""
    cone = ex.make_cone("flat", -0.5, 2048, deepest=12)
    ts = tuple(np.geomspace(1e-5, 0.25, 51))
    config = ex.ExperimentConfig(cone, (4.0, 5.0, 6.0, 7.0, 8.0),
                                 SolverParams(0.25, "semi-implicit", store_every=10**9), ts)
    extra = (1e-3, 1e-2, 0.05, 0.2) + tuple(np.geomspace(1e-3, 1e-1, 21))
    return config, ex.FlowCache(cone, config.params(extra))


# -- criteria ----------------------------------------------------------------------

def check_curvature_oracles() -> bool:
    checks = ex.curvature_oracles(2048)
    detail = "; ".join(f"{k.split('_')[1]} err={c['error']:.2e}<={c['tol']:g} "
                       f"order={c['order']:.3f}" for k, c in checks.items())
    return _record(1, "curvature oracles", all(c["pass"] for c in checks.values()), detail)


def check_exact_flows() -> bool:
    s = ex.exact_sphere_run(2048, dt_max=1e-4)
    h = ex.exact_hyperbolic_run(2048, dt_max=1e-4)
    ok = s["pass"] and h["pass"]
    return _record(2, "exact flows", ok,
                   f"sphere sup err={s['error']:.2e}, hyperbolic sup err={h['error']:.2e} "
                   f"(tol 1e-3)")


def check_truncation_suite() -> bool:
    bad = []
    worst = np.inf
    for kind, r_max, factory in (("flat", 1.0, flat_cone), ("hyperbolic", 0.9, hyperbolic_cone)):
        for beta in BETAS:
            cone = factory(beta, RadialGrid(0.0, r_max, 2048))
            u0 = sample_cone(cone).u
            prev = None
            for k in range(1, 9):
                uk = truncate(cone, k).u
                tag = f"{kind} beta={beta} k={k}"
                if not np.all(uk <= np.minimum(u0, k)):
                    bad.append(f"{tag}: above min(u0, k)")
                if prev is not None and not np.all(prev <= uk):
                    bad.append(f"{tag}: not monotone in k")
                low, high = u0 <= k - 1.0, u0 >= k + 1.0
                if not (np.array_equal(uk[low], u0[low]) and np.all(uk[high] == k)):
                    bad.append(f"{tag}: equality zone not exact")
                rep = curvature_bound_check(cone, k)
                worst = min(worst, rep.min_margin)
                if not rep.passed:
                    bad.append(f"{tag}: curvature bound margin {rep.min_margin:.3e}")
                prev = uk
    detail = "48 truncations ok" if not bad else "; ".join(bad[:3])
    return _record(3, "truncation suite", not bad,
                   f"{detail}, worst K[g_k] - bound = {worst:.2e} (allowed >= -10h^2)")


def check_barrier() -> bool:
    ok = True
    parts = []
    for beta in BETAS:
        spec = bar.calibrate_C(beta, BARRIER_WINDOW)
        pde = bar.check_barrier_pde(spec, BARRIER_WINDOW)
        ident = identity_check(beta, spec.C, BARRIER_WINDOW)
        cone = ex.make_cone("flat", beta, 2048, deepest=8)
        f = evolve(truncate(cone, 8), SolverParams(
            0.25, "semi-implicit", store_every=10**9,
            store_times=tuple(np.geomspace(1e-6, 0.25, 41))))
        flow = bar.verify_flow_under_barrier(f, spec, cone.w_sup())
        good = pde.pass_ and pde.min_margin > 0 and ident["pass"] and flow.passed
        ok = ok and good
        parts.append(f"beta={beta}: C={spec.C:g} margin={pde.min_margin:.2e} "
                     f"dS rel err={ident['max_rel_error']:.1e} "
                     f"flow violation={flow.worst_violation:.3f}")
    return _record(4, "barrier", ok, "; ".join(parts))


def check_decay() -> bool:
    config, cache = half_cone_setup()
    rep = ex.run_decay(config, cache)
    ok = rep.slope_pass and not rep.cap_limited
    return _record(5, "decay rate", ok,
                   f"slope={rep.slope:.4f} target={rep.target:g} +-0.10, "
                   f"cap-limited={rep.cap_limited}")


def check_limit_structure() -> bool:
    config, cache = half_cone_setup()
    rep = ex.run_smoothening(config, cache)
    ok = rep.monotone_pass and rep.gap_pass and rep.floor_pass and not rep.failed_levels
    return _record(6, "monotone limit", ok,
                   f"monotone={rep.monotone_pass}, gap(t>=1e-2)={rep.max_gap_late:.2e}<=1e-3, "
                   f"floor={rep.floor_pass}")


def check_uniqueness() -> bool:
    config, cache = half_cone_setup()
    rep = ex.run_uniqueness(config, (3, 5, 7), (4, 6, 8), t0s=(1e-3, 1e-2),
                            window=(0.05, 0.2), cache=cache)
    ok = rep.defect <= 1e-2 and rep.nonincreasing and rep.rescaled_pass and rep.below_pass
    return _record(7, "uniqueness squeeze", ok,
                   f"defect={rep.defect:.2e} -> {rep.defect_deeper:.2e} when deepened, "
                   f"rescaled checks {sum(r['passed'] for r in rep.rescaled)}/{len(rep.rescaled)}")


def _tree(root: Path) -> dict:
    return {p.relative_to(root): p for p in sorted(root.rglob("*")) if p.is_file()}


def check_determinism() -> bool:
    args = ["experiment", "--set", "beta=-0.5", "--set", "solver.n=512",
            "--set", "levels=[2,3,4]", "--log-level", "quiet"]
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "a", Path(tmp) / "b"
        main(args + ["-o", str(a)])
        (run,) = a.iterdir()
        # second run is fed only the resolved config of the first
        main(["experiment", "--config", str(run / "resolved_config.json"),
              "--log-level", "quiet", "-o", str(b)])
        ta = _tree(a)
        tb = _tree(b)
        csvs = [p for p in ta if p.suffix == ".csv"]
        same = (ta.keys() == tb.keys() and bool(csvs)
                and all(filecmp.cmp(ta[p], tb[p], shallow=False) for p in ta))
    return _record(8, "determinism", same,
                   f"{len(csvs)} CSVs byte-identical after re-run from resolved config")


# -- pytest entry points -------------------------------------------------------------

def test_curvature_oracles():
    assert check_curvature_oracles(), RESULTS[1][1]


def test_exact_flows():
    assert check_exact_flows(), RESULTS[2][1]


def test_truncation_suite():
    assert check_truncation_suite(), RESULTS[3][1]


def test_barrier():
    assert check_barrier(), RESULTS[4][1]


def test_decay_rate():
    assert check_decay(), RESULTS[5][1]


def test_monotone_limit():
    assert check_limit_structure(), RESULTS[6][1]


def test_uniqueness_squeeze():
    assert check_uniqueness(), RESULTS[7][1]


def test_determinism():
    assert check_determinism(), RESULTS[8][1]


ALL_CHECKS = (check_curvature_oracles, check_exact_flows, check_truncation_suite,
              check_barrier, check_decay, check_limit_structure, check_uniqueness,
              check_determinism)


if __name__ == "__main__":
    results = [check() for check in ALL_CHECKS]
    sys.exit(0 if all(results) else 1)
