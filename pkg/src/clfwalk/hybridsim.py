"""Fixed-control-rate hybrid walking simulator.

Torque is computed once per control tick and held (zero-order hold,
modeling the 1 kHz digital loop); the continuous dynamics are integrated
with classical RK4 on finer substeps.  Guard crossings are located by
bisection inside the substep where the sign change occurred, the reset
map applied, and the tick's torque kept for the remainder of the tick.
Runs terminate early with a recorded Fall/Timeout outcome instead of an
exception so partial logs stay analyzable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import clfqp, mechsys
from .errors import PhaseOutOfRange
from .mechsys import MechState, OutputMap, PlantModel
from .models.gait import GaitDesign
from .models.three_link import HybridModel
from .qpsolve import QPSolver

SIMLOG_SCHEMA = "clfwalk-simlog-v1"
SUMMARY_SCHEMA = "clfwalk-summary-v1"

IMPACT_GUARD_TOL = 1e-10
IMPACT_TIME_TOL = 1e-12
GRAZING_VELOCITY = 1e-6


@dataclass(frozen=True)
class SimConfig:
    control_rate: float = 1000.0
    substeps: int = 10
    n_steps: int = 1
    fall_pitch: float = 0.5
    timeout_periods: float = 5.0
    seed: int = 0
    zero_torque: bool = False  # diagnostic: open the loop for energy audits

    def __post_init__(self):
        if self.control_rate <= 0 or self.substeps < 1 or self.n_steps < 1:
            raise ValueError("control_rate > 0, substeps >= 1, n_steps >= 1 required")


@dataclass
class StepRecord:
    index: int
    t_impact: float
    duration: float
    post_impact: MechState
    poincare_residual: float


@dataclass
class SimLog:
    schema: str
    t: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    V: np.ndarray
    Vdot_fd: np.ndarray
    Vdot_pred: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    status: np.ndarray
    solve_us: np.ndarray
    eta_norm: np.ndarray
    umin: np.ndarray
    umax: np.ndarray
    clamped: np.ndarray
    tick_of_impact: np.ndarray  # tick indices right before each reset
    steps: list
    outcome: str  # Completed | Fall | Timeout

    def write_csv(self, path):
        n = self.q.shape[1]
        m = self.u.shape[1]
        cols = (["t"] + [f"q{i}" for i in range(n)] + [f"dq{i}" for i in range(n)]
                + [f"u{i}" for i in range(m)] + [f"mu{i}" for i in range(m)]
                + ["V", "Vdot_fd", "Vdot_pred", "d1"]
                + [f"d2_{i}" for i in range(m)] + [f"d3_{i}" for i in range(m)]
                + ["status", "solve_us"])
        with open(path, "w") as fh:
            fh.write(f"# schema={SIMLOG_SCHEMA}\n")
            fh.write(",".join(cols) + "\n")
            for i in range(self.t.size):
                row = ([f"{self.t[i]:.10g}"]
                       + [f"{v:.17g}" for v in self.q[i]]
                       + [f"{v:.17g}" for v in self.dq[i]]
                       + [f"{v:.17g}" for v in self.u[i]]
                       + [f"{v:.17g}" for v in self.mu[i]]
                       + [f"{self.V[i]:.17g}", f"{self.Vdot_fd[i]:.17g}",
                          f"{self.Vdot_pred[i]:.17g}", f"{self.d1[i]:.17g}"]
                       + [f"{v:.17g}" for v in self.d2[i]]
                       + [f"{v:.17g}" for v in self.d3[i]]
                       + [str(self.status[i]), f"{self.solve_us[i]:.6g}"])
                fh.write(",".join(row) + "\n")


def detect_impact(flow, guard, state_before, dt):
    """Bisect the guard crossing time within (0, dt] from state_before.

    flow(state, tau) advances the continuous dynamics by tau; guard maps a
    state to the scalar guard value, positive before impact.  Returns
    (impact_time, state_at_impact).
    """
    g0 = guard(state_before)
    a, b = 0.0, dt
    state_a = state_before
    for _ in range(200):
        mid = 0.5 * (a + b)
        state_m = flow(state_a, mid - a)
        gm = guard(state_m)
        if abs(gm) < IMPACT_GUARD_TOL or (b - a) < IMPACT_TIME_TOL:
            return mid, state_m
        if (gm > 0) == (g0 > 0):
            a, state_a = mid, state_m
        else:
            b = mid
    return mid, state_m


def _rk4(deriv, state, h):
    k1 = deriv(state)
    k2 = deriv(state + 0.5 * h * k1)
    k3 = deriv(state + 0.5 * h * k2)
    k4 = deriv(state + h * k3)
    return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_walk(hm: HybridModel, gait: GaitDesign, cfg_ctrl: clfqp.ControllerConfig,
                  cfg_sim: SimConfig, x0: MechState) -> SimLog:
    """Run up to cfg_sim.n_steps walking steps of the zero-order-hold loop."""
    return _simulate(hm.plant, gait.outmap, cfg_ctrl, cfg_sim, x0,
                     hm=hm, gait=gait, max_time=None)


def simulate_plant(plant: PlantModel, outmap: OutputMap, cfg_ctrl: clfqp.ControllerConfig,
                   cfg_sim: SimConfig, x0: MechState, duration: float) -> SimLog:
    """Non-hybrid fixed-duration run (linear test plant, envelope studies)."""
    return _simulate(plant, outmap, cfg_ctrl, cfg_sim, x0,
                     hm=None, gait=None, max_time=duration)


def _simulate(plant, outmap, cfg_ctrl, cfg_sim, x0, hm, gait, max_time):
    dt_tick = 1.0 / cfg_sim.control_rate
    h = dt_tick / cfg_sim.substeps
    n, m = plant.n, plant.m
    solver = QPSolver()

    rows = {k: [] for k in ("t", "q", "dq", "u", "mu", "V", "Vdot_pred", "d1",
                            "d2", "d3", "status", "solve_us", "eta_norm",
                            "umin", "umax", "clamped")}
    steps = []
    tick_of_impact = []
    outcome = "Completed"

    x = x0
    t = 0.0
    t_last_impact = 0.0
    step_index = 0
    tick = 0
    timeout = (cfg_sim.timeout_periods * gait.step_period) if gait is not None else None

    def deriv_factory(u_hold):
        def deriv(state):
            xs = MechState(q=state[:n], dq=state[n:])
            return np.concatenate([state[n:], mechsys.accel(plant, xs, u_hold)])
        return deriv

    while True:
        if max_time is not None and t >= max_time - 1e-12:
            break
        if hm is not None and step_index >= cfg_sim.n_steps:
            break
        if timeout is not None and (t - t_last_impact) > timeout:
            outcome = "Timeout"
            break
        if hm is not None and abs(x.q[2]) > cfg_sim.fall_pitch:
            outcome = "Fall"
            break
        try:
            res = clfqp.compute_control(cfg_ctrl, plant, outmap, x, solver=solver)
        except PhaseOutOfRange:
            outcome = "Fall"
            break
        u_hold = np.zeros(m) if cfg_sim.zero_torque else res.u

        rows["t"].append(t)
        rows["q"].append(x.q.copy())
        rows["dq"].append(x.dq.copy())
        rows["u"].append(u_hold.copy())
        rows["mu"].append(res.mu.copy())
        rows["V"].append(res.V)
        rows["Vdot_pred"].append(res.Vdot_pred)
        rows["d1"].append(res.d1)
        rows["d2"].append(res.d2.copy())
        rows["d3"].append(res.d3.copy())
        rows["status"].append(res.solver_status)
        rows["solve_us"].append(res.solve_time_us)
        rows["eta_norm"].append(float(np.linalg.norm(res.eta)))
        rows["umin"].append(res.umin.copy() if res.umin is not None else np.full(m, -np.inf))
        rows["umax"].append(res.umax.copy() if res.umax is not None else np.full(m, np.inf))
        rows["clamped"].append(res.clamped)

        deriv = deriv_factory(u_hold)
        state = np.concatenate([x.q, x.dq])
        impact_this_tick = False
        for k in range(cfg_sim.substeps):
            new_state = _rk4(deriv, state, h)
            if hm is not None:
                xs0 = MechState(q=state[:n], dq=state[n:])
                xs1 = MechState(q=new_state[:n], dq=new_state[n:])
                g0, g1 = hm.guard(xs0), hm.guard(xs1)
                if (hm.guard_armed(xs0) and hm.guard_armed(xs1)
                        and g0 > 0.0 and g1 <= 0.0):
                    def flow(vec, tau):
                        return _rk4(deriv, vec, tau) if tau > 0 else vec

                    tau, state_hit = detect_impact(
                        flow, lambda v: hm.guard(MechState(q=v[:n], dq=v[n:])),
                        state, h)
                    x_pre = MechState(q=state_hit[:n], dq=state_hit[n:])
                    vy = hm.swing_foot_velocity(x_pre.q, x_pre.dq)[1]
                    if abs(vy) < GRAZING_VELOCITY:
                        outcome = "Timeout"  # grazing impact: step aborted
                        impact_this_tick = True
                        new_state = state_hit
                        break
                    x_post = hm.reset(x_pre)
                    t_hit = t + k * h + tau
                    residual = float(np.linalg.norm(
                        np.concatenate([x_post.q - gait.fixed_point.q,
                                        x_post.dq - gait.fixed_point.dq])))
                    steps.append(StepRecord(index=step_index, t_impact=t_hit,
                                            duration=t_hit - t_last_impact,
                                            post_impact=x_post,
                                            poincare_residual=residual))
                    tick_of_impact.append(tick)
                    t_last_impact = t_hit
                    step_index += 1
                    impact_this_tick = True
                    # finish the tick from the post-impact state with the same torque
                    remaining = h - tau
                    state = np.concatenate([x_post.q, x_post.dq])
                    if remaining > 1e-12:
                        state = _rk4(deriv, state, remaining)
                    continue
            state = new_state
        if outcome == "Timeout" and impact_this_tick:
            break
        x = MechState(q=state[:n], dq=state[n:])
        t += dt_tick
        tick += 1

    for key, width in (("q", n), ("dq", n), ("u", m), ("mu", m),
                       ("d2", m), ("d3", m), ("umin", m), ("umax", m)):
        rows[key] = np.array(rows[key]) if rows[key] else np.zeros((0, width))
    for key in ("t", "V", "Vdot_pred", "d1", "solve_us", "eta_norm"):
        rows[key] = np.array(rows[key], dtype=float)
    status = np.array(rows["status"], dtype=object)
    clamped = np.array(rows["clamped"], dtype=bool)

    V = rows["V"]
    Vdot_fd = np.full_like(V, np.nan)
    if V.size >= 2:
        Vdot_fd[:-1] = np.diff(V) * cfg_sim.control_rate
    return SimLog(schema=SIMLOG_SCHEMA, t=rows["t"], q=rows["q"], dq=rows["dq"],
                  u=rows["u"], mu=rows["mu"], V=V, Vdot_fd=Vdot_fd,
                  Vdot_pred=rows["Vdot_pred"], d1=rows["d1"], d2=rows["d2"],
                  d3=rows["d3"], status=status, solve_us=rows["solve_us"],
                  eta_norm=rows["eta_norm"], umin=rows["umin"], umax=rows["umax"],
                  clamped=clamped, tick_of_impact=np.array(tick_of_impact, dtype=int),
                  steps=steps, outcome=outcome)


@dataclass
class SummaryStats:
    schema: str
    outcome: str
    n_steps_completed: int
    per_step_eta_max: list
    per_step_eta_mean: list
    per_step_V_max: list
    status_fractions: dict
    saturated_tick_fraction: float
    clamped_tick_fraction: float
    max_abs_d1: float
    max_norm_d2: float
    max_norm_d3: float
    solve_us_median: float
    solve_us_p99: float
    poincare_residuals: list
    step_durations: list
    phase_portrait_coord: int

    def to_json(self):
        return json.dumps(self.__dict__, indent=1, sort_keys=True)


def summarize(log: SimLog, phase_coord: int = 2, sat_tol: float = 1e-6) -> SummaryStats:
    """Aggregate a run: tracking error, solver statuses, saturation activity."""
    if log.t.size == 0:
        raise ValueError("empty log")
    bounds = np.concatenate([log.tick_of_impact, [log.t.size - 1]])
    seg_edges = [0] + [int(b) + 1 for b in bounds]
    eta_max, eta_mean, v_max = [], [], []
    for a, b in zip(seg_edges[:-1], seg_edges[1:]):
        if b <= a:
            continue
        eta_max.append(float(log.eta_norm[a:b].max()))
        eta_mean.append(float(log.eta_norm[a:b].mean()))
        v_max.append(float(log.V[a:b].max()))
    statuses, counts = np.unique(log.status.astype(str), return_counts=True)
    fractions = {s: float(c) / log.t.size for s, c in zip(statuses, counts)}
    finite = np.isfinite(log.umin)
    at_bound = np.zeros(log.t.size, dtype=bool)
    if np.any(finite):
        lo_hit = np.abs(log.u - log.umin) < sat_tol
        hi_hit = np.abs(log.u - log.umax) < sat_tol
        at_bound = np.any((lo_hit | hi_hit) & finite, axis=1)
    return SummaryStats(
        schema=SUMMARY_SCHEMA,
        outcome=log.outcome,
        n_steps_completed=len(log.steps),
        per_step_eta_max=eta_max,
        per_step_eta_mean=eta_mean,
        per_step_V_max=v_max,
        status_fractions=fractions,
        saturated_tick_fraction=float(at_bound.mean()),
        clamped_tick_fraction=float(log.clamped.mean()),
        max_abs_d1=float(np.abs(log.d1).max()),
        max_norm_d2=float(np.linalg.norm(log.d2, axis=1).max()) if log.d2.size else 0.0,
        max_norm_d3=float(np.linalg.norm(log.d3, axis=1).max()) if log.d3.size else 0.0,
        solve_us_median=float(np.median(log.solve_us)),
        solve_us_p99=float(np.percentile(log.solve_us, 99)),
        poincare_residuals=[s.poincare_residual for s in log.steps],
        step_durations=[s.duration for s in log.steps],
        phase_portrait_coord=phase_coord,
    )


def write_phase_portrait(log: SimLog, path, coord: int = 2):
    """Plot-ready CSV of one coordinate against its rate (torso by default)."""
    with open(path, "w") as fh:
        fh.write(f"# schema={SIMLOG_SCHEMA}-phase\n")
        fh.write(f"q{coord},dq{coord}\n")
        for i in range(log.t.size):
            fh.write(f"{log.q[i, coord]:.17g},{log.dq[i, coord]:.17g}\n")
