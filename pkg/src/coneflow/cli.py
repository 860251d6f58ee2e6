"""Command-line entry point.

    coneflow simulate      evolve one truncation level and write the flow
    coneflow truncate      write the truncation sequence and curvature checks
    coneflow barrier-check check the barrier inequality for one beta and C
    coneflow experiment    smoothening + decay (+ uniqueness) reports
    coneflow validate      solver qualification against exact flows

Exit status: 0 when every report passes, 1 when any check fails, 2 on
configuration or domain errors (one ``error: ...`` line on stderr).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import barrier as bar
from . import config as cfgmod
from . import io
from .errors import ConeFlowError, ConfigError

log = logging.getLogger("coneflow")

COMMANDS = ("simulate", "truncate", "barrier-check", "experiment", "validate")
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry (repeatable)")
    common.add_argument("-o", "--output-dir", type=Path, default=Path("runs"),
                        help="parent directory for run outputs (default: runs)")
    common.add_argument("--log-level", choices=sorted(LOG_LEVELS), default="info")

    p = argparse.ArgumentParser(prog="coneflow",
                                description="Ricci flow smoothing of cone points, radial lab")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("simulate", parents=[common], help="evolve one truncated cone")
    sub.add_parser("truncate", parents=[common], help="build the truncation sequence")
    b = sub.add_parser("barrier-check", parents=[common], help="check the barrier inequality")
    b.add_argument("--beta", type=float)
    b.add_argument("--c", type=float, help="barrier constant C")
    b.add_argument("--t-lo", type=float)
    b.add_argument("--t-hi", type=float)
    b.add_argument("--calibrate", action="store_true",
                   help="raise C from the given value until the check passes with margin")
    sub.add_parser("experiment", parents=[common], help="smoothening, decay and uniqueness")
    sub.add_parser("validate", parents=[common], help="exact-solution and order checks")
    return p


def _run_dir(root: Path, command: str, cfg: dict) -> Path:
    d = root / f"{command}-{cfgmod.config_hash(cfg, command)}"
    if d.exists():
        log.info("run directory %s exists; outputs are overwritten with identical content", d)
    d.mkdir(parents=True, exist_ok=True)
    io.write_json(d / "resolved_config.json", cfg)
    return d


# -- commands ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> bool:
    from .solver import curvature_floor, evolve
    from .truncation import truncate

    cone = cfgmod.build_cone(cfg, "simulate")
    level = cfg["simulate"]["level"]
    level = max(cfg["levels"]) if level == "auto" else level
    params = replace(cfgmod.build_solver(cfg), store_times=cfgmod.time_samples(cfg))
    f = evolve(truncate(cone, level), params)
    io.write_flow(out / "flow", f)
    floor = curvature_floor(f)
    report = {"level": level, "status": f.status, "stop_reason": f.stop_reason,
              "steps": f.steps, "grid": cone.grid.to_dict(), "floor": floor.to_dict(),
              "sup_u_final": float(f.diagnostics["sup_u"][-1]),
              "pass": f.completed and floor.passed}
    io.write_json(out / "simulate.json", report)
    log.info("simulate: level %g %s, floor %s", level, f.status,
             "PASS" if floor.passed else "FAIL")
    return report["pass"]


def cmd_truncate(cfg: dict, out: Path) -> bool:
    from .truncation import build_sequence, curvature_bound_check

    cone = cfgmod.build_cone(cfg, "truncate")
    seq = build_sequence(cone, levels=cfg["levels"])
    io.write_sequence(out / "sequence", seq)
    checks = [curvature_bound_check(cone, k).to_dict() for k in seq.levels]
    ok = all(c["pass"] for c in checks)
    io.write_json(out / "truncation.json", {"beta": cone.beta, "levels": list(seq.levels),
                                            "curvature_bound": checks, "pass": ok})
    log.info("truncate: %d levels, curvature bound %s", len(seq.levels), "PASS" if ok else "FAIL")
    return ok


def identity_check(beta: float, C: float, t_window, n: int = 16) -> dict:
    """Closed-form exp(-2S) Lap S against finite differences of S."""
    worst = 0.0
    for t in np.geomspace(t_window[0], t_window[1], n):
        lam = bar.lambda_bar(t, beta, C)
        r = np.linspace(0.05, 0.95, n) * lam
        exact = bar.cap_diffusion_term(t, beta, C)
        fd = bar.cap_diffusion_fd(r, t, beta, C)
        worst = max(worst, float(np.max(np.abs(fd - exact) / abs(exact))))
    return {"max_rel_error": worst, "tol": 1e-6, "pass": worst <= 1e-6}


def cmd_barrier(args, root: Path) -> bool:
    cfg = {"beta": args.beta, "barrier": {"C": args.c, "window": [args.t_lo, args.t_hi]},
           "calibrate": bool(args.calibrate)}
    if args.config is not None or args.overrides:
        base = cfgmod.load_config(args.config, args.overrides)
        cfg["beta"] = base["beta"] if args.beta is None else args.beta
        cfg["barrier"]["C"] = base["barrier"]["C"] if args.c is None else args.c
        w = base["barrier"]["window"]
        cfg["barrier"]["window"] = [w[0] if args.t_lo is None else args.t_lo,
                                    w[1] if args.t_hi is None else args.t_hi]
    defaults = cfgmod.DEFAULTS["barrier"]
    if cfg["beta"] is None:
        raise ConfigError("beta: required (--beta or config)")
    if cfg["barrier"]["C"] is None:
        cfg["barrier"]["C"] = defaults["C"]
    w = cfg["barrier"]["window"]
    cfg["barrier"]["window"] = [defaults["window"][0] if w[0] is None else w[0],
                                defaults["window"][1] if w[1] is None else w[1]]
    lo, hi = cfg["barrier"]["window"]
    if not (0.0 < lo < hi):
        raise ConfigError(f"barrier.window: need 0 < t_lo < t_hi, got [{lo}, {hi}]")
    out = _run_dir(root, "barrier-check", cfg)
    beta, C = float(cfg["beta"]), float(cfg["barrier"]["C"])
    if cfg["calibrate"]:
        C = bar.calibrate_C(beta, (lo, hi), C0=C).C
    rep = bar.check_barrier_pde(bar.BarrierSpec(beta, C), (lo, hi))
    ident = identity_check(beta, C, (lo, hi))
    report = rep.to_dict()
    report["identity"] = ident
    report["pass"] = rep.pass_ and ident["pass"]
    io.write_json(out / "barrier.json", report)
    spec = bar.BarrierSpec(beta, C)
    ts = np.geomspace(lo, hi, 9)
    r = np.linspace(0.0, 0.99, 100)
    U = np.array([bar.blunt_cone(r, t, spec) for t in ts])
    io.write_barrier_surface(out / "barrier_surface.csv", r, ts, U)
    log.info("barrier-check: beta=%g C=%g min margin %.3g %s", beta, C, rep.min_margin,
             "PASS" if report["pass"] else "FAIL")
    return report["pass"]


def cmd_experiment(cfg: dict, out: Path) -> bool:
    from . import experiments as ex
    from .truncation import build_sequence

    config = cfgmod.build_experiment(cfg, "experiment")
    config.output_dir = out
    u = cfg["uniqueness"]
    extra = tuple(np.geomspace(*config.decay_window, 21))
    if u["enabled"]:
        extra += tuple(u["t0"]) + tuple(u["window"])
    cache = ex.FlowCache(config.cone, config.params(extra))
    lim = ex.run_smoothening(config, cache)
    dec = ex.run_decay(config, cache, deepen=cfg["decay"]["deepen"])
    reports = {"smoothening": lim.to_dict(), "decay": dec.to_dict()}
    if u["enabled"]:
        uni = ex.run_uniqueness(config, u["schedule_a"], u["schedule_b"], t0s=u["t0"],
                                window=u["window"], deepen=u["deepen"], cache=cache)
        reports["uniqueness"] = uni.to_dict()
    for name, rep in reports.items():
        io.write_json(out / f"{name}.json", rep)
    for k, f in sorted(cache.flows.items()):
        io.write_flow(out / "flows" / f"level_{k:g}", f)
    io.write_sequence(out / "sequence", build_sequence(config.cone, levels=config.levels))
    (out / "summary.md").write_text(summary_markdown(cfg, reports), encoding="utf-8")
    ok = all(r["pass"] for r in reports.values())
    log.info("experiment: %s", ", ".join(f"{k} {'PASS' if r['pass'] else 'FAIL'}"
                                         for k, r in reports.items()))
    return ok


def summary_markdown(cfg: dict, reports: dict) -> str:
    lines = [f"# Cone flow experiment (beta = {cfg['beta']:g}, {cfg['cone']} cone)", ""]
    lim = reports["smoothening"]
    lines += ["## Smoothening", "",
              f"- levels: {', '.join(f'{k:g}' for k in lim['levels'])}",
              f"- max Cauchy gap of the two deepest levels for t >= {lim['gap_t_min']:g}: "
              f"{lim['max_gap_late']:.3e} (tol {lim['gap_tol']:g})",
              f"- curvature floor at t = 0: {lim['floor']['floor_t0']:.3e}, "
              f"worst later: {lim['floor']['worst']:.3e}"]
    lines += [f"- {k}: {'PASS' if v else 'FAIL'}" for k, v in lim["flags"].items()]
    dec = reports["decay"]
    lines += ["", "## Decay", "",
              f"- window: [{dec['window'][0]:g}, {dec['window'][1]:g}]",
              f"- fitted slope {dec['slope']:.4f} against {dec['target']:.4f} "
              f"(deeper level: {dec['slope_deeper']:.4f})",
              f"- cap-limited: {dec['cap_limited']}, result: {'PASS' if dec['pass'] else 'FAIL'}"]
    if "uniqueness" in reports:
        uni = reports["uniqueness"]
        lines += ["", "## Uniqueness", "",
                  f"- schedules {uni['schedule_a']} vs {uni['schedule_b']}",
                  f"- defect on [{uni['window'][0]:g}, {uni['window'][1]:g}]: {uni['defect']:.3e}"
                  f" (deepened: {uni['defect_deeper']:.3e})",
                  f"- rescaled comparisons: "
                  f"{'PASS' if all(r['passed'] for r in uni['rescaled']) else 'FAIL'}",
                  f"- result: {'PASS' if uni['pass'] else 'FAIL'}"]
    return "\n".join(lines) + "\n"


def cmd_validate(cfg: dict, out: Path) -> bool:
    from .experiments import run_exact_validation

    rep = run_exact_validation(cfg["validation"]["n"], cfg["validation"]["dt_max"])
    io.write_json(out / "validation.json", rep.to_dict())
    for name, c in rep.checks.items():
        log.info("validate %s: %s", name, "PASS" if c["pass"] else "FAIL")
    return rep.passed


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=LOG_LEVELS[args.log_level],
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "barrier-check":
            ok = cmd_barrier(args, args.output_dir)
        else:
            cfg = cfgmod.load_config(args.config, args.overrides)
            out = _run_dir(args.output_dir, args.command, cfg)
            ok = {"simulate": cmd_simulate, "truncate": cmd_truncate,
                  "experiment": cmd_experiment, "validate": cmd_validate}[args.command](cfg, out)
            log.info("outputs in %s", out)
    except ConeFlowError as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
