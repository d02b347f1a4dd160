"""Saturation-aware CLF-QP walking controllers and a hybrid biped simulator.

The library builds rapidly exponentially stabilizing control Lyapunov
functions over input-output linearized walking dynamics and realizes them
as three interchangeable controllers: a closed-form pointwise min-norm
law, a soft-saturation QP with relaxable torque bounds, and a
hard-saturation QP whose torque bounds are inviolable.  A fixed-rate
zero-order-hold simulator exercises the controllers on a linear test
plant and on a planar three-link biped with plastic impacts.
"""

from .errors import (
    BadEpsilon,
    ClfWalkError,
    ConfigError,
    FallDetected,
    GrazingImpact,
    IncompatibleScenarios,
    NoConvergence,
    NonFiniteDynamics,
    NotHurwitz,
    PhaseOutOfRange,
    RankDeficientFit,
    SingularDecoupling,
    SingularInertia,
    SolveFailed,
    StepTimeout,
)
from .mechsys import IOLinearization, MechState, OutputMap, PlantModel
from .qpsolve import QPProblem, QPSolution, QPSolver, QPStatus, solve_qp
from .resclf import RESCLF, PsiPair, build_resclf, convergence_envelope, eval_V, eval_psi
from .clfqp import (
    ControllerConfig,
    ControllerMode,
    ControlTickResult,
    SaturationKind,
    SaturationSpec,
    compute_control,
    min_norm_mu,
)
from .hybridsim import SimConfig, SimLog, SummaryStats, simulate_plant, simulate_walk, summarize

__version__ = "0.1.0"

__all__ = [
    "BadEpsilon", "ClfWalkError", "ConfigError", "FallDetected", "GrazingImpact",
    "IncompatibleScenarios", "NoConvergence", "NonFiniteDynamics", "NotHurwitz",
    "PhaseOutOfRange", "RankDeficientFit", "SingularDecoupling", "SingularInertia",
    "SolveFailed", "StepTimeout",
    "IOLinearization", "MechState", "OutputMap", "PlantModel",
    "QPProblem", "QPSolution", "QPSolver", "QPStatus", "solve_qp",
    "RESCLF", "PsiPair", "build_resclf", "convergence_envelope", "eval_V", "eval_psi",
    "ControllerConfig", "ControllerMode", "ControlTickResult",
    "SaturationKind", "SaturationSpec", "compute_control", "min_norm_mu",
    "SimConfig", "SimLog", "SummaryStats", "simulate_plant", "simulate_walk", "summarize",
    "__version__",
]
