import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from voxelpde import BoundarySpec, GridSpec, StencilContext

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

BC_FAMILIES = {
    "periodic": BoundarySpec.periodic,
    "dirichlet": lambda: BoundarySpec.dirichlet(0.0),
    "zeroflux": BoundarySpec.zero_flux,
}


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def make_ctx(dims, bc=None, spacing=1.0):
    grid = GridSpec(tuple(dims), (spacing,) * 3 if np.isscalar(spacing) else tuple(spacing))
    return StencilContext(grid, bc or BoundarySpec.periodic())
