"""Scenario configs: archived JSON documents driving batch simulations.

A scenario names a plant, a gait file, a controller and a saturation
preset, and the runner turns it into the output artifacts `log.csv`,
`summary.json`, `phase_portrait.csv` and (linear plant only)
`envelope.csv`.  `compare` runs several scenarios against the same plant
and gait and tabulates tracking error, saturation activity and step
completion side by side.

Named saturation presets encode a progressively tightening family of
hip-torque boxes for the three-link biped.  The nominal torque profile
of the default gait spans roughly [-19, 8] N·m on the stance-hip channel
and [-6, 21] N·m on the swing-hip channel; the presets are shaped around
that profile:

  caseA  generous box with >20% headroom everywhere (never binds),
  caseB  box clipping the torque peaks (binds often, walking persists),
  caseC  box tight enough that tracking collapses within a few steps,
  caseD  state-dependent box: fitted nominal torque plus a narrow margin.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import clfqp, hybridsim, mechsys, resclf
from .errors import ConfigError, IncompatibleScenarios
from .models import gait as gaitmod
from .models.linear_chain import make_linear_chain
from .models.three_link import ThreeLinkParams, make_three_link_biped

SCENARIO_SCHEMA = "clfwalk-scenario-v1"
COMPARE_SCHEMA = "clfwalk-compare-v1"

# constant presets: (umin, umax) per channel (stance hip, swing hip)
CONSTANT_PRESETS = {
    "caseA": (np.array([-24.0, -12.0]), np.array([12.0, 24.0])),
    "caseB": (np.array([-16.0, -8.0]), np.array([10.0, 16.0])),
    "caseC": (np.array([-11.25, -5.625]), np.array([7.625, 9.625])),
}
# dynamic preset: offsets about the fitted nominal torque profile
DYNAMIC_PRESETS = {
    "caseD": (np.array([-0.5, -1.0]), np.array([0.5, 1.0])),
}

_MODES = {m.value: m for m in clfqp.ControllerMode}


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: str                       # "three_link" | "linear_chain"
    plant_params: dict
    gait_path: str | None
    mode: clfqp.ControllerMode
    eps: float
    p1: float
    p2: float
    qp_max_iter: int
    qp_tol: float
    saturation: dict                 # raw saturation block, resolved at run time
    sim: hybridsim.SimConfig
    duration: float | None           # linear plant only
    output_dir: str
    eta0: np.ndarray | None          # linear plant initial transverse state

    def canonical(self) -> dict:
        """Round-trippable document with canonical key order."""
        return {
            "schema": SCENARIO_SCHEMA,
            "name": self.name,
            "plant": self.plant,
            "plant_params": dict(sorted(self.plant_params.items())),
            "gait": self.gait_path,
            "controller": {
                "mode": self.mode.value,
                "eps": self.eps,
                "p1": self.p1,
                "p2": self.p2,
                "qp_max_iter": self.qp_max_iter,
                "qp_tol": self.qp_tol,
            },
            "saturation": dict(sorted(self.saturation.items())),
            "sim": {
                "control_rate": self.sim.control_rate,
                "substeps": self.sim.substeps,
                "n_steps": self.sim.n_steps,
                "fall_pitch": self.sim.fall_pitch,
                "timeout_periods": self.sim.timeout_periods,
                "seed": self.sim.seed,
            },
            "duration": self.duration,
            "eta0": None if self.eta0 is None else list(self.eta0),
            "output_dir": self.output_dir,
        }


def _require(doc: dict, key: str, types, context: str = ""):
    path = f"{context}.{key}" if context else key
    if key not in doc:
        raise ConfigError(f"missing key {path}")
    val = doc[key]
    if not isinstance(val, types):
        raise ConfigError(f"key {path} has wrong type {type(val).__name__}")
    return val


def parse_scenario(path: str) -> Scenario:
    """Load and validate a scenario document; messages name the offending key."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file is not valid JSON: {exc}") from None
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ConfigError(f"key schema must be {SCENARIO_SCHEMA!r}, got {doc.get('schema')!r}")

    name = _require(doc, "name", str)
    plant = _require(doc, "plant", str)
    if plant not in ("three_link", "linear_chain"):
        raise ConfigError(f"key plant must be 'three_link' or 'linear_chain', got {plant!r}")
    plant_params = doc.get("plant_params", {}) or {}
    if not isinstance(plant_params, dict):
        raise ConfigError("key plant_params must be an object")

    base_dir = os.path.dirname(os.path.abspath(path))
    gait_path = doc.get("gait")
    if plant == "three_link":
        if not isinstance(gait_path, str):
            raise ConfigError("key gait (gait file path) is required for the three_link plant")
        if not os.path.isabs(gait_path):
            gait_path = os.path.normpath(os.path.join(base_dir, gait_path))
        if not os.path.exists(gait_path):
            raise ConfigError(f"key gait points to a missing file: {gait_path}")

    ctrl = _require(doc, "controller", dict)
    mode_name = _require(ctrl, "mode", str, "controller")
    if mode_name not in _MODES:
        raise ConfigError(f"key controller.mode must be one of {sorted(_MODES)}, got {mode_name!r}")
    eps = float(_require(ctrl, "eps", (int, float), "controller"))
    if not 0.0 < eps < 1.0:
        raise ConfigError(f"key controller.eps must lie in (0, 1), got {eps}")
    p1 = float(ctrl.get("p1", 50.0))
    p2 = float(ctrl.get("p2", 75.0))
    if p1 <= 0 or p2 <= 0:
        raise ConfigError("keys controller.p1 and controller.p2 must be positive")
    qp_max_iter = int(ctrl.get("qp_max_iter", 20))
    qp_tol = float(ctrl.get("qp_tol", 1e-7))
    if qp_max_iter < 1:
        raise ConfigError("key controller.qp_max_iter must be >= 1")
    if qp_tol <= 0:
        raise ConfigError("key controller.qp_tol must be positive")

    sat = doc.get("saturation", {"kind": "none"})
    if not isinstance(sat, dict):
        raise ConfigError("key saturation must be an object")
    _validate_saturation_block(sat)

    sim_doc = doc.get("sim", {}) or {}
    if not isinstance(sim_doc, dict):
        raise ConfigError("key sim must be an object")
    try:
        sim = hybridsim.SimConfig(
            control_rate=float(sim_doc.get("control_rate", 1000.0)),
            substeps=int(sim_doc.get("substeps", 10)),
            n_steps=int(sim_doc.get("n_steps", 15)),
            fall_pitch=float(sim_doc.get("fall_pitch", 0.5)),
            timeout_periods=float(sim_doc.get("timeout_periods", 5.0)),
            seed=int(sim_doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"key sim invalid: {exc}") from None

    duration = doc.get("duration")
    if plant == "linear_chain":
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise ConfigError("key duration (positive seconds) is required for the linear_chain plant")
        duration = float(duration)
    eta0 = doc.get("eta0")
    if eta0 is not None:
        eta0 = np.asarray(eta0, dtype=float)

    output_dir = doc.get("output_dir", os.path.join("out", name))
    if not os.path.isabs(output_dir):
        output_dir = os.path.normpath(os.path.join(base_dir, output_dir))

    return Scenario(name=name, plant=plant, plant_params=plant_params,
                    gait_path=gait_path, mode=_MODES[mode_name], eps=eps,
                    p1=p1, p2=p2, qp_max_iter=qp_max_iter, qp_tol=qp_tol,
                    saturation=sat, sim=sim, duration=duration,
                    output_dir=output_dir, eta0=eta0)


def _validate_saturation_block(sat: dict):
    preset = sat.get("preset")
    kind = sat.get("kind")
    if preset is not None:
        known = sorted(set(CONSTANT_PRESETS) | set(DYNAMIC_PRESETS))
        if preset not in known:
            raise ConfigError(f"key saturation.preset must be one of {known}, got {preset!r}")
        return
    if kind == "none" or kind is None:
        return
    if kind == "constant":
        umin = sat.get("umin")
        umax = sat.get("umax")
        if umin is None or umax is None:
            raise ConfigError("keys saturation.umin and saturation.umax are required for constant bounds")
        if not np.all(np.asarray(umin, dtype=float) < np.asarray(umax, dtype=float)):
            raise ConfigError("key saturation.umin must be componentwise below saturation.umax")
        return
    if kind == "dynamic":
        lo = sat.get("offsets_lo")
        hi = sat.get("offsets_hi")
        if lo is None or hi is None:
            raise ConfigError("keys saturation.offsets_lo and saturation.offsets_hi are required for dynamic bounds")
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if not np.all(lo < hi):
            raise ConfigError("key saturation.offsets_lo must be componentwise below saturation.offsets_hi")
        if not (np.all(lo <= 0.0) and np.all(hi >= 0.0)):
            raise ConfigError("keys saturation.offsets_lo/offsets_hi must straddle zero")
        return
    raise ConfigError(f"key saturation.kind must be none|constant|dynamic, got {kind!r}")


def resolve_saturation(sat: dict, gait: gaitmod.GaitDesign | None) -> clfqp.SaturationSpec:
    """Turn a validated saturation block into a concrete SaturationSpec."""
    preset = sat.get("preset")
    if preset in CONSTANT_PRESETS:
        umin, umax = CONSTANT_PRESETS[preset]
        return clfqp.SaturationSpec.constant(umin, umax)
    if preset in DYNAMIC_PRESETS:
        if gait is None:
            raise ConfigError(f"key saturation.preset={preset!r} needs a gait (fitted torque profile)")
        lo, hi = DYNAMIC_PRESETS[preset]
        return clfqp.SaturationSpec.dynamic(gait.ustar_fit, lo, hi)
    kind = sat.get("kind", "none")
    if kind == "none":
        return clfqp.SaturationSpec.none()
    if kind == "constant":
        return clfqp.SaturationSpec.constant(np.asarray(sat["umin"], dtype=float),
                                             np.asarray(sat["umax"], dtype=float))
    if gait is None:
        raise ConfigError("key saturation.kind=dynamic needs a gait (fitted torque profile)")
    return clfqp.SaturationSpec.dynamic(gait.ustar_fit,
                                        np.asarray(sat["offsets_lo"], dtype=float),
                                        np.asarray(sat["offsets_hi"], dtype=float))


def _build_controller(scn: Scenario, gait: gaitmod.GaitDesign | None, m: int) -> clfqp.ControllerConfig:
    clf = resclf.build_resclf(np.eye(m), 1.8 * np.eye(m), eps=scn.eps)
    sat = resolve_saturation(scn.saturation, gait)
    try:
        return clfqp.ControllerConfig(mode=scn.mode, clf=clf, sat=sat, p1=scn.p1,
                                      p2=scn.p2, qp_max_iter=scn.qp_max_iter,
                                      qp_tol=scn.qp_tol)
    except ValueError as exc:
        raise ConfigError(f"key controller invalid: {exc}") from None


def run_scenario(scn: Scenario) -> hybridsim.SummaryStats:
    """Execute one scenario and write its artifacts into scn.output_dir."""
    os.makedirs(scn.output_dir, exist_ok=True)

    if scn.plant == "three_link":
        try:
            params = ThreeLinkParams(**scn.plant_params) if scn.plant_params else ThreeLinkParams()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key plant_params invalid: {exc}") from None
        hm = make_three_link_biped(params)
        gait = gaitmod.load_gait(scn.gait_path)
        cfg = _build_controller(scn, gait, hm.plant.m)
        log = hybridsim.simulate_walk(hm, gait, cfg, scn.sim, gait.fixed_point)
        clf = cfg.clf
    else:
        m = int(scn.plant_params.get("m", 2))
        plant, outmap = make_linear_chain(m)
        cfg = _build_controller(scn, None, m)
        rng = np.random.default_rng(scn.sim.seed)
        eta0 = scn.eta0 if scn.eta0 is not None else rng.standard_normal(2 * m)
        if eta0.shape != (2 * m,):
            raise ConfigError(f"key eta0 must have length {2 * m}")
        q0 = np.zeros(2 * m)
        q0[:m] = eta0[:m]
        dq0 = np.zeros(2 * m)
        dq0[:m] = eta0[m:]
        x0 = mechsys.MechState(q=q0, dq=dq0)
        log = hybridsim.simulate_plant(plant, outmap, cfg, scn.sim, x0, scn.duration)
        clf = cfg.clf
        eta0_norm = float(np.linalg.norm(eta0))
        with open(os.path.join(scn.output_dir, "envelope.csv"), "w") as fh:
            fh.write(f"# schema={hybridsim.SIMLOG_SCHEMA}-envelope\n")
            fh.write("t,eta_norm,bound\n")
            for i in range(log.t.size):
                bound = resclf.convergence_envelope(clf, float(log.t[i]), eta0_norm)
                fh.write(f"{log.t[i]:.10g},{log.eta_norm[i]:.17g},{bound:.17g}\n")

    log.write_csv(os.path.join(scn.output_dir, "log.csv"))
    coord = 2 if scn.plant == "three_link" else 0
    hybridsim.write_phase_portrait(log, os.path.join(scn.output_dir, "phase_portrait.csv"),
                                   coord=coord)
    stats = hybridsim.summarize(log, phase_coord=coord)
    with open(os.path.join(scn.output_dir, "summary.json"), "w") as fh:
        fh.write(stats.to_json() + "\n")
    with open(os.path.join(scn.output_dir, "scenario.json"), "w") as fh:
        json.dump(scn.canonical(), fh, indent=1)
        fh.write("\n")
    return stats


def max_threads() -> int:
    """Parallelism cap: CLFQP_THREADS env var, default 1."""
    raw = os.environ.get("CLFQP_THREADS", "1")
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"env CLFQP_THREADS must be an integer, got {raw!r}") from None
    return max(1, val)


def compare_scenarios(scns: list, out_path: str) -> list:
    """Run several scenarios against one plant + gait; write a comparison table.

    Returns the list of (scenario, SummaryStats) rows in input order.
    """
    if len(scns) < 2:
        raise IncompatibleScenarios("compare needs at least two scenarios")
    first = scns[0]
    for scn in scns[1:]:
        if scn.plant != first.plant:
            raise IncompatibleScenarios(
                f"scenario {scn.name!r} uses plant {scn.plant!r}, expected {first.plant!r}")
        if scn.gait_path != first.gait_path:
            raise IncompatibleScenarios(
                f"scenario {scn.name!r} uses gait {scn.gait_path!r}, expected {first.gait_path!r}")

    workers = min(max_threads(), len(scns))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(run_scenario, scns))
    else:
        stats = [run_scenario(scn) for scn in scns]

    rows = list(zip(scns, stats))
    with open(out_path, "w") as fh:
        fh.write(f"# schema={COMPARE_SCHEMA}\n")
        fh.write("scenario,outcome,steps_completed,mean_eta,max_eta,"
                 "saturated_frac,clamped_frac,max_d1\n")
        for scn, st in rows:
            mean_eta = float(np.mean(st.per_step_eta_mean)) if st.per_step_eta_mean else 0.0
            max_eta = float(np.max(st.per_step_eta_max)) if st.per_step_eta_max else 0.0
            fh.write(f"{scn.name},{st.outcome},{st.n_steps_completed},"
                     f"{mean_eta:.17g},{max_eta:.17g},"
                     f"{st.saturated_tick_fraction:.17g},{st.clamped_tick_fraction:.17g},"
                     f"{st.max_abs_d1:.17g}\n")
    return rows
