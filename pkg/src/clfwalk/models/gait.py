"""Periodic gait tooling for the three-link biped.

`design_nominal_gait` constructs an impact-invariant virtual-constraint
gait: the Bezier boundary control points are chosen so that the impact
map sends the zero-output manifold into itself, which reduces the search
for a periodic orbit to a scalar fixed-point problem in the pre-impact
phase rate.  `find_periodic_gait` then polishes the full-state Poincare
fixed point with a damped Newton shooting iteration and refits the
desired-output Bezier through the resulting orbit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .. import bezier, clfqp, mechsys, resclf
from ..errors import FallDetected, GrazingImpact, NoConvergence, PhaseOutOfRange, StepTimeout
from ..mechsys import MechState, OutputMap
from .three_link import HybridModel, ThreeLinkParams, make_three_link_biped

GAIT_SCHEMA = "clfwalk-gait-v1"


@dataclass(frozen=True)
class GaitDesign:
    outmap: OutputMap
    fixed_point: MechState      # post-impact state on the Poincare section
    step_period: float
    ustar_fit: np.ndarray       # m x 6 Bezier of u*(theta) along the orbit
    orbit_theta: np.ndarray
    orbit_q: np.ndarray         # (k, n)
    orbit_dq: np.ndarray
    orbit_ustar: np.ndarray     # (k, m)
    ustar_fit_residual: float


def default_design_clf(eps: float = 0.1) -> resclf.RESCLF:
    """CLF used for gait search; gains give a well-damped transverse loop."""
    KP = np.eye(2)
    KD = 1.8 * np.eye(2)
    return resclf.build_resclf(KP, KD, eps=eps)


def _on_manifold_state(outmap: OutputMap, theta: float, thetadot: float) -> MechState:
    """State on the zero-output manifold at a given phase and phase rate."""
    lo, hi = outmap.theta_range
    s = (theta - lo) / (hi - lo)
    yd = bezier.eval_bezier(outmap.yd, s)
    dyd = bezier.eval_bezier_deriv(outmap.yd, s)
    # q1 = -theta; q3 = yd[0]; q2 = yd[1]
    q = np.array([-theta, yd[1], yd[0]])
    dq = np.array([-thetadot,
                   dyd[1] * thetadot / outmap.delta,
                   dyd[0] * thetadot / outmap.delta])
    return MechState(q=q, dq=dq)


def _integrate_zero_dynamics(hm: HybridModel, outmap: OutputMap, x0: MechState,
                             dt: float = 2e-4, max_time: float = 5.0):
    """Flow with u = u* (exact output-zeroing input) until the armed guard fires.

    Returns (pre-impact state, step duration, samples) where samples is a
    list of (theta, q, dq, ustar) along the orbit.
    """
    x = x0
    t = 0.0
    samples = []
    g_prev = hm.guard(x)
    armed_prev = hm.guard_armed(x)

    def deriv(state):
        xs = MechState(q=state[:3], dq=state[3:])
        io = mechsys.io_linearize(hm.plant, outmap, xs)
        return np.concatenate([state[3:], mechsys.accel(hm.plant, xs, io.ustar)])

    def rk4(state, h):
        k1 = deriv(state)
        k2 = deriv(state + 0.5 * h * k1)
        k3 = deriv(state + 0.5 * h * k2)
        k4 = deriv(state + h * k3)
        return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    state = np.concatenate([x.q, x.dq])
    while t < max_time:
        io = mechsys.io_linearize(hm.plant, outmap, x)
        theta = float(outmap.theta_coeffs @ x.q)
        samples.append((theta, x.q.copy(), x.dq.copy(), io.ustar.copy()))
        new_state = rk4(state, dt)
        xn = MechState(q=new_state[:3], dq=new_state[3:])
        g = hm.guard(xn)
        armed = hm.guard_armed(xn)
        if armed_prev and armed and g_prev > 0.0 and g <= 0.0:
            # bisect the crossing time inside this interval
            a, b = 0.0, dt
            sa = state
            for _ in range(80):
                mid = 0.5 * (a + b)
                sm = rk4(sa, mid - a)
                gm = hm.guard(MechState(q=sm[:3], dq=sm[3:]))
                if abs(gm) < 1e-12 or (b - a) < 1e-13:
                    a = mid
                    sa = sm
                    break
                if (gm > 0) == (hm.guard(MechState(q=sa[:3], dq=sa[3:])) > 0):
                    sa = sm
                    a = mid
                else:
                    b = mid
            xf = MechState(q=sa[:3], dq=sa[3:])
            return xf, t + a, samples
        state = new_state
        x = xn
        g_prev = g
        armed_prev = armed
        t += dt
    raise StepTimeout("zero dynamics flow produced no impact")


def design_nominal_gait(hm: HybridModel, alpha: float = 0.2,
                        torso_lean: float = -0.15,
                        swing_p3: float = 1.05,
                        swing_end_slope: float = 0.3,
                        rate_bracket: tuple = (0.85, 1.15)):
    """Construct an impact-invariant gait and its periodic orbit.

    alpha: half step angle (phase runs -alpha..alpha); torso_lean: desired
    constant torso pitch (negative leans into the walking direction, which
    is what pumps energy back into the gait); swing_p3: fourth Bezier
    control value for the swing leg as a multiple of alpha; swing_end_slope:
    d(q2_des)/ds at the end of the step in units of the phase span.
    """
    lo, hi = -alpha, alpha
    delta = hi - lo
    H0 = np.array([[0.0, 0.0, 1.0],
                   [0.0, 1.0, 0.0]])
    c = np.array([-1.0, 0.0, 0.0])

    yd = np.zeros((2, 6))
    yd[0, :] = torso_lean
    yd[1, 0] = -alpha
    yd[1, 5] = alpha
    yd[1, 3] = swing_p3 * alpha
    # end slope: dyd/ds(1) = 5 (P5 - P4)
    yd[1, 4] = yd[1, 5] - swing_end_slope * delta / 5.0
    yd[0, 4] = yd[0, 5]  # zero torso rate at the end of the step

    # impact invariance fixes the initial-slope control points: the reset of a
    # unit-phase-rate pre-impact state on the manifold must again satisfy
    # ydot = 0 at the start of the next step
    pre_dir = np.array([-1.0,
                        5.0 * (yd[1, 5] - yd[1, 4]) / delta,
                        5.0 * (yd[0, 5] - yd[0, 4]) / delta])
    q_pre = np.array([-alpha, alpha, torso_lean])
    x_pre_unit = MechState(q=q_pre, dq=pre_dir)
    x_post_unit = hm.reset(x_pre_unit)
    thetadot_plus = float(c @ x_post_unit.dq)
    if thetadot_plus <= 0:
        raise NoConvergence("impact reverses phase progression; adjust gait shape")
    slope0 = delta * (H0 @ x_post_unit.dq) / thetadot_plus
    yd[:, 1] = yd[:, 0] + slope0 / 5.0
    # continue the post-impact slope one more control point so the desired
    # accelerations (and with them u*) stay moderate right after the reset
    yd[:, 2] = 2.0 * yd[:, 1] - yd[:, 0]

    outmap = OutputMap(H0=H0, theta_coeffs=c, yd=yd, theta_range=(lo, hi))

    def restricted_map(rate):
        x_pre = MechState(q=q_pre, dq=pre_dir * rate)
        x_post = hm.reset(x_pre)
        xf, duration, samples = _integrate_zero_dynamics(hm, outmap, x_post)
        return float(c @ xf.dq), duration, samples, x_post

    # scalar fixed point of the restricted Poincare map by secant iteration
    r0, r1 = rate_bracket
    f0 = restricted_map(r0)[0] - r0
    f1 = restricted_map(r1)[0] - r1
    for _ in range(60):
        if abs(f1 - f0) < 1e-14:
            break
        r2 = r1 - f1 * (r1 - r0) / (f1 - f0)
        r2 = min(max(r2, 0.05), 10.0)
        f2 = restricted_map(r2)[0] - r2
        r0, f0, r1, f1 = r1, f1, r2, f2
        if abs(f1) < 1e-10:
            break
    if abs(f1) > 1e-8:
        raise NoConvergence("restricted Poincare map has no fixed point in bracket",
                            best_residual=abs(f1))
    rate_star = r1
    _, period, samples, x_post = restricted_map(rate_star)

    thetas = np.array([s[0] for s in samples])
    qs = np.array([s[1] for s in samples])
    dqs = np.array([s[2] for s in samples])
    ustars = np.array([s[3] for s in samples])
    keep = np.concatenate([[True], np.diff(thetas) > 1e-12])
    thetas, qs, dqs, ustars = thetas[keep], qs[keep], dqs[keep], ustars[keep]
    ustar_fit = clfqp.fit_bezier_ustar(thetas, ustars.T, (lo, hi))
    fit_vals = np.array([bezier.eval_bezier(ustar_fit, (t - lo) / delta) for t in thetas])
    residual = float(np.abs(fit_vals - ustars).max())

    return GaitDesign(outmap=outmap, fixed_point=x_post, step_period=period,
                      ustar_fit=ustar_fit, orbit_theta=thetas, orbit_q=qs,
                      orbit_dq=dqs, orbit_ustar=ustars, ustar_fit_residual=residual)


def poincare_map(hm: HybridModel, cfg: clfqp.ControllerConfig, outmap: OutputMap,
                 x0: MechState, dt: float = 2e-4, nominal_period: float = 0.8,
                 fall_pitch: float = 0.5) -> MechState:
    """One step of the closed loop: post-impact state to next post-impact state.

    The feedback is evaluated at every integrator stage (continuous-time
    closed loop); the fixed-rate zero-order-hold loop lives in `hybridsim`.
    """
    solver = clfqp.QPSolver()

    def deriv(state):
        xs = MechState(q=state[:3], dq=state[3:])
        res = clfqp.compute_control(cfg, hm.plant, outmap, xs, solver=solver)
        return np.concatenate([state[3:], mechsys.accel(hm.plant, xs, res.u)])

    def rk4(state, h):
        k1 = deriv(state)
        k2 = deriv(state + 0.5 * h * k1)
        k3 = deriv(state + 0.5 * h * k2)
        k4 = deriv(state + h * k3)
        return state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    state = np.concatenate([x0.q, x0.dq])
    t = 0.0
    g_prev = hm.guard(x0)
    armed_prev = hm.guard_armed(x0)
    while t < 5.0 * nominal_period:
        try:
            new_state = rk4(state, dt)
        except PhaseOutOfRange as exc:
            raise FallDetected(str(exc)) from exc
        xn = MechState(q=new_state[:3], dq=new_state[3:])
        if abs(xn.q[2]) > fall_pitch:
            raise FallDetected(f"torso pitch {xn.q[2]:.3f} beyond +/-{fall_pitch}")
        g = hm.guard(xn)
        armed = hm.guard_armed(xn)
        if armed_prev and armed and g_prev > 0.0 and g <= 0.0:
            a, b = 0.0, dt
            sa = state
            for _ in range(80):
                mid = 0.5 * (a + b)
                sm = rk4(sa, mid - a)
                gm = hm.guard(MechState(q=sm[:3], dq=sm[3:]))
                if abs(gm) < 1e-12 or (b - a) < 1e-13:
                    sa = sm
                    break
                if (gm > 0) == (hm.guard(MechState(q=sa[:3], dq=sa[3:])) > 0):
                    sa = sm
                    a = mid
                else:
                    b = mid
            x_pre = MechState(q=sa[:3], dq=sa[3:])
            vel = hm.swing_foot_velocity(x_pre.q, x_pre.dq)
            if abs(vel[1]) < 1e-6:
                raise GrazingImpact("guard approach velocity below threshold")
            return hm.reset(x_pre)
        state = new_state
        g_prev = g
        armed_prev = armed
        t += dt
    raise StepTimeout(f"no impact within {5.0 * nominal_period:.2f} s")


def find_periodic_gait(hm: HybridModel, outmap_template: OutputMap, seed: MechState,
                       cfg: clfqp.ControllerConfig | None = None, tol: float = 1e-6,
                       max_iter: int = 50, fd_step: float = 1e-6,
                       nominal_period: float = 0.8) -> GaitDesign:
    """Damped Newton on x -> poincare_map(x) - x, then refit the output Bezier.

    The shooting Jacobian is central finite differences; the damping factor
    is halved whenever the residual increases.  After convergence the orbit
    is re-simulated, y_d refit through the H0 q samples (so y vanishes on
    the orbit) and u*(theta) regressed for dynamic torque bounds.
    """
    cfg = cfg or clfqp.ControllerConfig(mode=clfqp.ControllerMode.MIN_NORM,
                                        clf=default_design_clf())
    outmap = outmap_template

    def pmap(vec):
        xs = MechState(q=vec[:3], dq=vec[3:])
        xn = poincare_map(hm, cfg, outmap, xs, nominal_period=nominal_period)
        return np.concatenate([xn.q, xn.dq])

    x = np.concatenate([seed.q, seed.dq])
    residual = pmap(x) - x
    best = float(np.linalg.norm(residual))
    for _ in range(max_iter):
        if best < tol:
            break
        n = x.size
        Jac = np.zeros((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = fd_step
            Jac[:, i] = (pmap(x + e) - pmap(x - e)) / (2 * fd_step)
        try:
            step = np.linalg.solve(Jac - np.eye(n), -residual)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular shooting Jacobian", best_residual=best) from None
        damping = 1.0
        improved = False
        for _ in range(8):
            x_try = x + damping * step
            r_try = pmap(x_try) - x_try
            if np.linalg.norm(r_try) < best:
                x, residual = x_try, r_try
                best = float(np.linalg.norm(r_try))
                improved = True
                break
            damping *= 0.5
        if not improved:
            raise NoConvergence("damped Newton stalled", best_residual=best)
    if best >= tol:
        raise NoConvergence("shooting did not reach tolerance", best_residual=best)

    fixed_point = MechState(q=x[:3], dq=x[3:])
    # re-simulate the converged orbit with exact output zeroing to sample it
    xf, period, samples = _integrate_zero_dynamics(hm, outmap, fixed_point)
    thetas = np.array([s[0] for s in samples])
    qs = np.array([s[1] for s in samples])
    dqs = np.array([s[2] for s in samples])
    ustars = np.array([s[3] for s in samples])
    keep = np.concatenate([[True], np.diff(thetas) > 1e-12])
    thetas, qs, dqs, ustars = thetas[keep], qs[keep], dqs[keep], ustars[keep]
    lo, hi = outmap.theta_range
    s_samples = (thetas - lo) / (hi - lo)
    yd_refit = bezier.fit_bezier(s_samples, (outmap.H0 @ qs.T))
    outmap = OutputMap(H0=outmap.H0, theta_coeffs=outmap.theta_coeffs,
                       yd=yd_refit, theta_range=outmap.theta_range)
    ustar_fit = clfqp.fit_bezier_ustar(thetas, ustars.T, (lo, hi))
    fit_vals = np.array([bezier.eval_bezier(ustar_fit, s) for s in s_samples])
    residual_fit = float(np.abs(fit_vals - ustars).max())
    return GaitDesign(outmap=outmap, fixed_point=fixed_point, step_period=period,
                      ustar_fit=ustar_fit, orbit_theta=thetas, orbit_q=qs,
                      orbit_dq=dqs, orbit_ustar=ustars, ustar_fit_residual=residual_fit)


def save_gait(gait: GaitDesign, path, params: ThreeLinkParams | None = None):
    doc = {
        "schema": GAIT_SCHEMA,
        "params": params.__dict__.copy() if params else None,
        "H0": gait.outmap.H0.tolist(),
        "theta_coeffs": gait.outmap.theta_coeffs.tolist(),
        "yd": gait.outmap.yd.tolist(),
        "theta_range": list(gait.outmap.theta_range),
        "fixed_point": {"q": gait.fixed_point.q.tolist(), "dq": gait.fixed_point.dq.tolist()},
        "step_period": gait.step_period,
        "ustar_fit": gait.ustar_fit.tolist(),
        "ustar_fit_residual": gait.ustar_fit_residual,
        "orbit": {
            "theta": gait.orbit_theta.tolist(),
            "q": gait.orbit_q.tolist(),
            "dq": gait.orbit_dq.tolist(),
            "ustar": gait.orbit_ustar.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_gait(path) -> GaitDesign:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != GAIT_SCHEMA:
        raise ValueError(f"unknown gait schema {doc.get('schema')!r}")
    outmap = OutputMap(H0=np.array(doc["H0"]), theta_coeffs=np.array(doc["theta_coeffs"]),
                       yd=np.array(doc["yd"]), theta_range=tuple(doc["theta_range"]))
    orbit = doc["orbit"]
    return GaitDesign(outmap=outmap,
                      fixed_point=MechState(q=np.array(doc["fixed_point"]["q"]),
                                            dq=np.array(doc["fixed_point"]["dq"])),
                      step_period=doc["step_period"],
                      ustar_fit=np.array(doc["ustar_fit"]),
                      orbit_theta=np.array(orbit["theta"]),
                      orbit_q=np.array(orbit["q"]),
                      orbit_dq=np.array(orbit["dq"]),
                      orbit_ustar=np.array(orbit["ustar"]),
                      ustar_fit_residual=doc["ustar_fit_residual"])
