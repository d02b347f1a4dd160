"""Planar three-link biped: two legs and a torso, stance foot pinned.

Coordinates are absolute angles from the upright vertical (counter-
clockwise positive): q = (q1 stance leg, q2 swing leg, q3 torso).  Both
hip joints are actuated (torques act between torso and each leg), the
torso orientation is not directly actuated, so the system is
underactuated by one (m = 2 < n = 3).

Dynamics are derived symbolically once per parameter set (Lagrange with
Christoffel-symbol Coriolis matrix, so the skew-symmetry identity is
available to tests) and lambdified to fast numeric callables.  Impacts
are instantaneous plastic collisions of the swing foot with the ground,
followed by the leg-relabeling permutation; angular momentum about the
new stance foot is conserved across the impact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from ..mechsys import MechState, PlantModel

# swap stance and swing leg; torso untouched; involution
RELABEL = np.array([[0.0, 1.0, 0.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ThreeLinkParams:
    leg_mass: float = 5.0
    leg_length: float = 1.0
    leg_com: float = 0.5        # foot -> leg COM distance
    leg_inertia: float = 5.0 / 12.0
    torso_mass: float = 10.0
    torso_length: float = 0.5
    torso_com: float = 0.25     # hip -> torso COM distance
    torso_inertia: float = 10.0 * 0.5**2 / 12.0
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("leg_mass", "leg_length", "leg_com", "leg_inertia",
                     "torso_mass", "torso_length", "torso_com", "torso_inertia",
                     "gravity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"parameter {name} must be positive")

    def key(self):
        return (self.leg_mass, self.leg_length, self.leg_com, self.leg_inertia,
                self.torso_mass, self.torso_com, self.torso_inertia, self.gravity)


@dataclass(frozen=True)
class HybridModel:
    """Continuous plant plus impact guard and reset map."""

    plant: PlantModel
    params: ThreeLinkParams
    guard: Callable[[MechState], float] = field(compare=False)
    guard_armed: Callable[[MechState], bool] = field(compare=False)
    reset: Callable[[MechState], MechState] = field(compare=False)
    swing_foot: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    swing_foot_velocity: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)
    energy: Callable[[np.ndarray, np.ndarray], float] = field(compare=False)
    body_kinematics: Callable[[np.ndarray, np.ndarray], tuple] = field(compare=False)


_CACHE: dict = {}


def _derive(params: ThreeLinkParams):
    key = params.key()
    if key in _CACHE:
        return _CACHE[key]

    q1, q2, q3 = sp.symbols("q1 q2 q3")
    d1, d2, d3 = sp.symbols("d1 d2 d3")
    px, py, vx, vy = sp.symbols("px py vx vy")
    q = sp.Matrix([q1, q2, q3])
    dq = sp.Matrix([d1, d2, d3])

    mL = sp.Float(params.leg_mass)
    L = sp.Float(params.leg_length)
    lc = sp.Float(params.leg_com)
    IL = sp.Float(params.leg_inertia)
    mT = sp.Float(params.torso_mass)
    lt = sp.Float(params.torso_com)
    IT = sp.Float(params.torso_inertia)
    g = sp.Float(params.gravity)

    def leg_dir(a):
        # unit vector from foot to hip for a leg at absolute angle a
        return sp.Matrix([-sp.sin(a), sp.cos(a)])

    base = sp.Matrix([px, py])
    hip = base + L * leg_dir(q1)
    pc_stance = base + lc * leg_dir(q1)
    pc_swing = hip - (L - lc) * leg_dir(q2)
    pc_torso = hip + lt * leg_dir(q3)
    p_swing_foot = hip - L * leg_dir(q2)

    qe = sp.Matrix([q1, q2, q3, px, py])
    dqe = sp.Matrix([d1, d2, d3, vx, vy])

    bodies = [(mL, IL, pc_stance, d1), (mL, IL, pc_swing, d2), (mT, IT, pc_torso, d3)]
    KE = sp.S.Zero
    PE = sp.S.Zero
    vels = []
    for mass, inertia, pos, omega in bodies:
        vel = pos.jacobian(qe) * dqe
        vels.append(vel)
        KE += mass * (vel.T * vel)[0, 0] / 2 + inertia * omega**2 / 2
        PE += mass * g * pos[1]

    De = sp.hessian(KE, dqe)
    De = sp.simplify(De)

    pinned = {px: 0, py: 0, vx: 0, vy: 0}
    D = De[:3, :3].subs(pinned)
    n = 3
    Cmat = sp.zeros(n, n)
    for k in range(n):
        for j in range(n):
            Cmat[k, j] = sum(
                sp.Rational(1, 2)
                * (sp.diff(D[k, j], q[i]) + sp.diff(D[k, i], q[j]) - sp.diff(D[i, j], q[k]))
                * dq[i]
                for i in range(n)
            )
    Cdq = sp.simplify(Cmat * dq)
    Gvec = sp.Matrix([sp.diff(PE.subs(pinned), qi) for qi in q])

    E = p_swing_foot.jacobian(qe)  # base-independent entries only via angles

    args = (q1, q2, q3, d1, d2, d3)
    fns = {
        "dyn": sp.lambdify(args, (D, Cdq, Gvec), modules="numpy", cse=True),
        "De": sp.lambdify((q1, q2, q3), De, modules="numpy", cse=True),
        "E": sp.lambdify((q1, q2, q3), E, modules="numpy", cse=True),
        "swing_foot": sp.lambdify((q1, q2, q3), p_swing_foot.subs(pinned), modules="numpy", cse=True),
        "swing_foot_vel": sp.lambdify(
            args, (p_swing_foot.jacobian(q) * dq).subs(pinned), modules="numpy", cse=True),
        "energy": sp.lambdify(args, (KE + PE).subs(pinned), modules="numpy", cse=True),
        "com": sp.lambdify(args, (pc_stance.subs(pinned), pc_swing.subs(pinned),
                                  pc_torso.subs(pinned),
                                  vels[0].subs(pinned), vels[1].subs(pinned),
                                  vels[2].subs(pinned)), modules="numpy", cse=True),
    }
    _CACHE[key] = fns
    return fns


# torque 1 acts between torso and stance leg, torque 2 between torso and swing leg
_B = np.array([[1.0, 0.0],
               [0.0, 1.0],
               [-1.0, -1.0]])


def make_three_link_biped(params: ThreeLinkParams | None = None) -> HybridModel:
    """Build the hybrid three-link biped model."""
    params = params or ThreeLinkParams()
    fns = _derive(params)
    L = params.leg_length
    forward_min = 0.1 * L  # guard armed only with the swing foot clearly ahead

    def dynamics(q, dq):
        D, Cdq, Gvec = fns["dyn"](q[0], q[1], q[2], dq[0], dq[1], dq[2])
        return (np.asarray(D, dtype=float),
                np.asarray(Cdq, dtype=float).reshape(3),
                np.asarray(Gvec, dtype=float).reshape(3),
                _B)

    plant = PlantModel(n=3, m=2, kind="ThreeLinkBiped",
                       params=params.__dict__.copy(), dynamics=dynamics)

    def swing_foot(q):
        return np.asarray(fns["swing_foot"](q[0], q[1], q[2]), dtype=float).reshape(2)

    def swing_foot_velocity(q, dq):
        return np.asarray(
            fns["swing_foot_vel"](q[0], q[1], q[2], dq[0], dq[1], dq[2]), dtype=float).reshape(2)

    def guard(x: MechState) -> float:
        return float(swing_foot(x.q)[1])

    def guard_armed(x: MechState) -> bool:
        return float(swing_foot(x.q)[0]) > forward_min

    def reset(x: MechState) -> MechState:
        De = np.asarray(fns["De"](x.q[0], x.q[1], x.q[2]), dtype=float)
        E = np.asarray(fns["E"](x.q[0], x.q[1], x.q[2]), dtype=float)
        dqe_minus = np.concatenate([x.dq, np.zeros(2)])
        K = np.block([[De, -E.T], [E, np.zeros((2, 2))]])
        rhs = np.concatenate([De @ dqe_minus, np.zeros(2)])
        sol = np.linalg.solve(K, rhs)
        dq_plus = sol[:3]
        return MechState(q=RELABEL @ x.q, dq=RELABEL @ dq_plus)

    def energy(q, dq):
        return float(fns["energy"](q[0], q[1], q[2], dq[0], dq[1], dq[2]))

    def body_kinematics(q, dq):
        out = fns["com"](q[0], q[1], q[2], dq[0], dq[1], dq[2])
        pos = np.stack([np.asarray(o, dtype=float).reshape(2) for o in out[:3]])
        vel = np.stack([np.asarray(o, dtype=float).reshape(2) for o in out[3:]])
        return pos, vel, np.asarray(dq, dtype=float)

    return HybridModel(plant=plant, params=params, guard=guard, guard_armed=guard_armed,
                       reset=reset, swing_foot=swing_foot,
                       swing_foot_velocity=swing_foot_velocity, energy=energy,
                       body_kinematics=body_kinematics)
