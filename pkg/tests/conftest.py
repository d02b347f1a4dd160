import os

import numpy as np
import pytest

from clfwalk.models import gait as gaitmod
from clfwalk.models.three_link import make_three_link_biped

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GAIT_PATH = os.path.join(REPO_ROOT, "gaits", "three_link_default.json")
SCENARIO_DIR = os.path.join(REPO_ROOT, "scenarios")


@pytest.fixture(scope="session")
def biped():
    return make_three_link_biped()


@pytest.fixture(scope="session")
def gait():
    return gaitmod.load_gait(GAIT_PATH)


@pytest.fixture(scope="session")
def orbit_states(gait):
    """(MechState, theta) samples along the nominal periodic orbit."""
    from clfwalk.mechsys import MechState

    return [(MechState(q=q, dq=dq), th)
            for q, dq, th in zip(gait.orbit_q, gait.orbit_dq, gait.orbit_theta)]
