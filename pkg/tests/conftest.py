import os

import numpy as np
import pytest
from hypothesis import settings

from boltzsde.phase_domain import CrossSectionField, Domain, Rect, RegionDensity, ScatterKernel
from boltzsde.transport import SimulationParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def slab():
    """The two-rectangle slab experiment used across the suite."""
    return {
        "domain": Domain((-1.0, 1.0), (-1.0, 1.0)),
        "xs": CrossSectionField(5.0, 2.5),
        "kernel": ScatterKernel.uniform(),
        "f": RegionDensity.indicator(Rect((0.29, 0.69))),
        "g": RegionDensity.indicator(Rect((-0.22, -0.06))),
        "params": SimulationParams(dt=0.01, v=1.0),
    }


@pytest.fixture
def rng_np():
    return np.random.default_rng(12345)
