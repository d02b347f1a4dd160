"""Concrete plants and gait tooling."""

from .linear_chain import make_linear_chain
from .three_link import HybridModel, RELABEL, ThreeLinkParams, make_three_link_biped
from .gait import (
    GaitDesign,
    default_design_clf,
    design_nominal_gait,
    find_periodic_gait,
    load_gait,
    poincare_map,
    save_gait,
)

__all__ = [
    "make_linear_chain",
    "HybridModel", "RELABEL", "ThreeLinkParams", "make_three_link_biped",
    "GaitDesign", "default_design_clf", "design_nominal_gait",
    "find_periodic_gait", "load_gait", "poincare_map", "save_gait",
]
