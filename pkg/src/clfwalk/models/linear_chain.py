"""Linear chain test plant: m double-integrator output channels.

The configuration has n = 2m coordinates: the first m are the actuated
output positions (D = I, unit input map), the remaining m are inert
spectator coordinates, one of which carries the (trivial) phase variable.
With H0 selecting the output block and a constant desired output, the
transverse dynamics are exactly etadot = F eta + G mu, so closed-loop
behavior can be compared against the theoretical convergence envelope
without modeling error.
"""

from __future__ import annotations

import numpy as np

from ..mechsys import OutputMap, PlantModel


def make_linear_chain(m: int):
    """Return (PlantModel, OutputMap) for m output channels."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = 2 * m
    D = np.eye(n)
    B = np.zeros((n, m))
    B[:m, :] = np.eye(m)
    zero = np.zeros(n)

    def dynamics(q, dq):
        return D, zero, zero, B

    plant = PlantModel(n=n, m=m, kind="LinearChain", params={"m": m}, dynamics=dynamics)
    H0 = np.zeros((m, n))
    H0[:, :m] = np.eye(m)
    c = np.zeros(n)
    c[m] = 1.0  # phase rides on the first spectator coordinate
    outmap = OutputMap(H0=H0, theta_coeffs=c, yd=np.zeros((m, 6)), theta_range=(-1.0, 1.0))
    return plant, outmap
