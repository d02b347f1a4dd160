"""Batch scenario runner CLI.

Verbs:
  run <scenario.json>             execute one scenario, write artifacts
  compare <a.json> <b.json> ...   run scenarios side by side, write compare.csv
  gait-design <plant.json> -o g   design a periodic gait and save it
  bench-qp [--channels ...]       solve-time percentiles of the controller QPs

Exit codes: 0 completed run (a recorded Fall is a valid outcome), 2 config
error, 3 internal error.  The CLFQP_THREADS env var caps compare's
parallelism.  All output is deterministic modulo timing columns.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import clfqp, mechsys, resclf, scenario
from .errors import ClfWalkError, ConfigError, IncompatibleScenarios
from .models import gait as gaitmod
from .models.three_link import ThreeLinkParams, make_three_link_biped
from .qpsolve import QPSolver

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def cmd_run(args) -> int:
    scn = scenario.parse_scenario(args.scenario)
    stats = scenario.run_scenario(scn)
    print(f"{scn.name}: outcome={stats.outcome} steps={stats.n_steps_completed} "
          f"saturated_frac={stats.saturated_tick_fraction:.4f} "
          f"clamped_frac={stats.clamped_tick_fraction:.4f} -> {scn.output_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scns = [scenario.parse_scenario(p) for p in args.scenarios]
    out_path = args.output or os.path.join(os.path.dirname(scns[0].output_dir) or ".",
                                           "compare.csv")
    rows = scenario.compare_scenarios(scns, out_path)
    header = f"{'scenario':<12} {'outcome':<10} {'steps':>5} {'mean|eta|':>11} {'sat%':>7} {'max d1':>10}"
    print(header)
    for scn, st in rows:
        mean_eta = float(np.mean(st.per_step_eta_mean)) if st.per_step_eta_mean else 0.0
        print(f"{scn.name:<12} {st.outcome:<10} {st.n_steps_completed:>5} "
              f"{mean_eta:>11.4g} {100 * st.saturated_tick_fraction:>6.2f}% "
              f"{st.max_abs_d1:>10.4g}")
    print(f"table -> {out_path}")
    return EXIT_OK


def cmd_gait_design(args) -> int:
    try:
        with open(args.plant) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"plant file not found: {args.plant}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"plant file is not valid JSON: {exc}") from None
    params_doc = doc.get("params", {}) or {}
    design_doc = doc.get("design", {}) or {}
    try:
        params = ThreeLinkParams(**params_doc) if params_doc else ThreeLinkParams()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key params invalid: {exc}") from None

    hm = make_three_link_biped(params)
    design = gaitmod.design_nominal_gait(
        hm,
        alpha=float(design_doc.get("alpha", 0.2)),
        torso_lean=float(design_doc.get("torso_lean", -0.15)),
        swing_p3=float(design_doc.get("swing_p3", 1.05)),
        swing_end_slope=float(design_doc.get("swing_end_slope", 0.3)),
    )
    cfg = clfqp.ControllerConfig(mode=clfqp.ControllerMode.MIN_NORM,
                                 clf=gaitmod.default_design_clf())
    gait = gaitmod.find_periodic_gait(hm, design.outmap, design.fixed_point, cfg=cfg)
    gaitmod.save_gait(gait, args.output, params=params)
    print(f"gait: period={gait.step_period:.4f}s "
          f"torque fit residual={gait.ustar_fit_residual:.3g} -> {args.output}")
    return EXIT_OK


def cmd_bench_qp(args) -> int:
    """Median/p99 solve times for the fixed controller QP structures."""
    rng = np.random.default_rng(0)
    solver = QPSolver()
    hm = make_three_link_biped()
    gait_path = args.gait
    if gait_path is None:
        here = os.path.dirname(os.path.abspath(__file__))
        gait_path = os.path.normpath(os.path.join(here, "..", "..", "gaits",
                                                  "three_link_default.json"))
    if not os.path.exists(gait_path):
        raise ConfigError(f"gait file not found: {gait_path}")
    gait = gaitmod.load_gait(gait_path)

    for m in args.channels:
        if m != 2:
            raise ConfigError(f"key channels only supports 2 hip torques, got {m}")
        clf = resclf.build_resclf(np.eye(m), 1.8 * np.eye(m), eps=0.05)
        umin = scenario.CONSTANT_PRESETS["caseB"][0]
        umax = scenario.CONSTANT_PRESETS["caseB"][1]
        k = len(gait.orbit_theta)
        problems = []
        for _ in range(args.samples):
            i = int(rng.integers(0, k))
            q = gait.orbit_q[i] + 0.02 * rng.standard_normal(3)
            dq = gait.orbit_dq[i] + 0.05 * rng.standard_normal(3)
            x = mechsys.MechState(q=q, dq=dq)
            try:
                io = mechsys.io_linearize(hm.plant, gait.outmap, x)
                y, dy, _, _ = mechsys.eval_outputs(gait.outmap, x)
            except ClfWalkError:
                continue
            psi = resclf.eval_psi(clf, np.concatenate([y, dy]))
            problems.append(clfqp.build_hard_qp(psi, io, umin, umax, 1e4))
        times = []
        for prob in problems:
            t0 = time.perf_counter()
            solver.solve(prob)
            times.append((time.perf_counter() - t0) * 1e6)
        times = np.array(times)
        nv = problems[0].nv
        nc = problems[0].nc
        print(f"hard QP m={m} ({nv} variables, {nc} constraints, {len(times)} solves): "
              f"median={np.median(times):.0f}us p99={np.percentile(times, 99):.0f}us "
              f"max={times.max():.0f}us")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clfwalk",
                                     description="CLF-QP walking controller batch runner")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute one scenario file")
    p_run.add_argument("scenario", help="scenario JSON path")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several scenarios side by side")
    p_cmp.add_argument("scenarios", nargs="+", help="scenario JSON paths (>= 2)")
    p_cmp.add_argument("-o", "--output", help="comparison CSV path")
    p_cmp.set_defaults(func=cmd_compare)

    p_gait = sub.add_parser("gait-design", help="design a periodic gait")
    p_gait.add_argument("plant", help="plant/design parameter JSON path")
    p_gait.add_argument("-o", "--output", required=True, help="gait JSON output path")
    p_gait.set_defaults(func=cmd_gait_design)

    p_bench = sub.add_parser("bench-qp", help="controller QP solve-time percentiles")
    p_bench.add_argument("--channels", type=int, nargs="+", default=[2],
                         help="torque channel counts to benchmark")
    p_bench.add_argument("--samples", type=int, default=500,
                         help="number of sampled states per structure")
    p_bench.add_argument("--gait", help="gait JSON supplying the sampled orbit")
    p_bench.set_defaults(func=cmd_bench_qp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IncompatibleScenarios) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClfWalkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
