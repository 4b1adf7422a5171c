import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxelpde import BoundarySpec, Dirichlet, GridSpec, NeumannFlux, NeumannZeroFlux, Periodic, VoxelFields, create
from voxelpde.grid import fill_ghosts, interior, parse_condition


def test_create_extent():
    vf = create(GridSpec((4, 4, 4), (1, 1, 1)))
    assert vf.grid.extent == (4, 4, 4)
    assert vf.names == []


def test_extent_half_spacing():
    assert GridSpec((64, 64, 64), (0.5, 0.5, 0.5)).extent == (32, 32, 32)


@pytest.mark.parametrize("dims", [(0, 4, 4), (-2, 4, 4)])
def test_bad_dims(dims):
    with pytest.raises(ValueError, match="dims must be ≥ 2"):
        GridSpec(dims)


@pytest.mark.parametrize("spacing", [(0, 1, 1), (1, -1, 1)])
def test_bad_spacing(spacing):
    with pytest.raises(ValueError, match="spacing must be > 0"):
        GridSpec((4, 4, 4), spacing)


def test_first_center_is_half_cell():
    g = GridSpec((8, 8, 8), (0.25, 0.5, 1.0), origin=(1.0, 2.0, 3.0))
    assert g.centers(0)[0] == pytest.approx(1.125)
    assert g.centers(1)[0] == pytest.approx(2.25)
    assert g.centers(2)[-1] == pytest.approx(3.0 + 7.5)


def test_add_constant():
    vf = VoxelFields(GridSpec((8, 8, 8)))
    vf.add_field("phi", 0.5)
    assert vf["phi"].size == 512
    assert np.all(vf["phi"] == 0.5)


def test_duplicate_name():
    vf = VoxelFields(GridSpec((8, 8, 8)))
    vf.add_field("phi", 0.5)
    with pytest.raises(ValueError, match="already exists"):
        vf.add_field("phi", 0.1)


def test_length_mismatch():
    vf = VoxelFields(GridSpec((4, 4, 4)))
    with pytest.raises(ValueError, match="grid needs 64"):
        vf.add_field("c", np.zeros(63))


def test_non_finite_rejected():
    vf = VoxelFields(GridSpec((2, 2, 2)))
    with pytest.raises(ValueError, match="non-finite"):
        vf.add_field("c", np.full(8, np.nan))


def test_generator_cell_centered():
    L = 16.0
    vf = VoxelFields(GridSpec((16, 2, 2)))
    vf.add_field("s", lambda x, y, z: np.sin(2 * np.pi * x / L))
    assert vf["s"][0, 0, 0] == pytest.approx(np.sin(2 * np.pi * 0.5 / L))


def test_float32_opt_in():
    vf = VoxelFields(GridSpec((4, 4, 4)), dtype=np.float32)
    assert vf.add_field("c", 1.0).dtype == np.float32
    with pytest.raises(ValueError):
        VoxelFields(GridSpec((4, 4, 4)), dtype=np.int32)


def _line(values, cond):
    u = np.asarray(values, dtype=float).reshape(-1, 1, 1)
    bc = BoundarySpec(((cond[0], cond[1]), (Periodic(), Periodic()), (Periodic(), Periodic())))
    g = GridSpec((u.shape[0], 1, 1))
    return fill_ghosts(u, bc, g)[:, 1, 1]


def test_ghost_periodic():
    p = _line([1, 2, 3], (Periodic(), Periodic()))
    assert (p[0], p[-1]) == (3, 1)


def test_ghost_dirichlet_zero():
    p = _line([1, 2, 3], (Dirichlet(0.0), NeumannZeroFlux()))
    assert p[0] == -1


def test_ghost_zero_flux():
    p = _line([1, 2, 3], (NeumannZeroFlux(), NeumannZeroFlux()))
    assert (p[0], p[-1]) == (1, 3)


def test_ghost_flux_inward():
    p = _line([1, 2, 3], (NeumannFlux(0.5), NeumannFlux(0.5)))
    # inward flux j means ghost − edge = j·h/Γ at the low side and edge − ghost = −j·h/Γ high
    assert p[0] == pytest.approx(1.5)
    assert p[-1] == pytest.approx(3.5)


def test_periodic_must_pair():
    with pytest.raises(ValueError, match="both sides"):
        BoundarySpec(((Periodic(), Dirichlet(0)), (Periodic(), Periodic()), (Periodic(), Periodic())))


def test_spectral_compatibility():
    mixed = BoundarySpec(((Dirichlet(0), NeumannZeroFlux()), (Periodic(), Periodic()), (Periodic(), Periodic())))
    with pytest.raises(ValueError):
        mixed.check_spectral(GridSpec((4, 4, 4)))
    BoundarySpec.dirichlet(1.0).check_spectral(GridSpec((4, 4, 4)))
    assert [BoundarySpec.zero_flux().transform_kind(a) for a in range(3)] == ["dct"] * 3


def test_parse_condition_forms():
    assert parse_condition("periodic") == Periodic()
    assert parse_condition({"type": "dirichlet", "value": 2}) == Dirichlet(2.0)
    assert parse_condition("zero_flux") == NeumannZeroFlux()
    with pytest.raises(ValueError):
        parse_condition({"type": "zero_flux", "value": 1})


conditions = st.sampled_from(["periodic", "dirichlet", "zero_flux", "flux"])


def _bc(kinds, value):
    pairs = []
    for k in kinds:
        if k == "periodic":
            pairs.append((Periodic(), Periodic()))
        elif k == "dirichlet":
            pairs.append((Dirichlet(value), Dirichlet(-value)))
        elif k == "zero_flux":
            pairs.append((NeumannZeroFlux(), NeumannZeroFlux()))
        else:
            pairs.append((NeumannFlux(value), NeumannFlux(value)))
    return BoundarySpec(tuple(pairs))


@given(
    kinds=st.lists(conditions, min_size=3, max_size=3),
    dims=st.tuples(*[st.integers(2, 6)] * 3),
    value=st.floats(-3, 3),
    seed=st.integers(0, 2**16),
)
def test_ghost_fill_interior_identity(kinds, dims, value, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dims)
    bc = _bc(kinds, value)
    assert np.array_equal(interior(fill_ghosts(u, bc, GridSpec(dims))), u)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), n=st.integers(2, 12))
def test_dirichlet_ghost_exact_for_affine(a, b, n):
    g = GridSpec((n, 1, 1), (1.0 / n, 1, 1))
    x = g.centers(0)
    u = (a + b * x).reshape(-1, 1, 1)
    bc = BoundarySpec(((Dirichlet(a), Dirichlet(a + b)), (Periodic(), Periodic()), (Periodic(), Periodic())))
    p = fill_ghosts(u, bc, g)[:, 1, 1]
    # face midpoint value is the average of ghost and edge cell
    assert 0.5 * (p[0] + p[1]) == pytest.approx(a, abs=1e-12)
    assert 0.5 * (p[-1] + p[-2]) == pytest.approx(a + b, abs=1e-12)
