import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxelpde import BoundarySpec, CahnHilliard, Diffusion, GridSpec, MuDiffusion, StencilContext
from voxelpde.grid import Dirichlet, NeumannFlux, NeumannZeroFlux, Periodic
from voxelpde.spectral import (
    SpectralSymbol,
    Stabilizer,
    TransformPlan,
    build_symbol,
    etd1_prefactor,
    imex_prefactor,
    phi1,
    wavenumbers_sq,
)
from voxelpde.stencils import laplacian

from conftest import BC_FAMILIES

MIXED = BoundarySpec(((Periodic(), Periodic()), (Dirichlet(0), Dirichlet(0)), (NeumannZeroFlux(), NeumannZeroFlux())))
ALL_BCS = {**{k: f() for k, f in BC_FAMILIES.items()}, "mixed": MIXED}


def test_mode_zero_is_zero():
    g = GridSpec((8, 6, 4))
    for name in ("periodic", "zeroflux", "mixed"):
        k2 = wavenumbers_sq(g, ALL_BCS[name])
        if name != "mixed":
            assert k2[0, 0, 0] == 0.0
    assert np.all(wavenumbers_sq(g, ALL_BCS["dirichlet"]) > 0)


def test_nyquist_modified():
    g = GridSpec((8, 1, 1))
    k2 = wavenumbers_sq(g, BoundarySpec.periodic())
    assert k2[4, 0, 0] == pytest.approx(4.0)
    assert k2.shape == (5, 1, 1)


def test_continuous_wavenumber():
    g = GridSpec((4, 1, 1), (1.0, 1.0, 1.0))
    k2 = wavenumbers_sq(g, BoundarySpec.periodic(), mode="continuous")
    assert k2[1, 0, 0] == pytest.approx((2 * np.pi / 4) ** 2)
    assert k2[1, 0, 0] == pytest.approx(2.4674, abs=1e-4)


def test_incompatible_bc():
    bc = BoundarySpec(((Dirichlet(0), NeumannZeroFlux()), (Periodic(), Periodic()), (Periodic(), Periodic())))
    with pytest.raises(ValueError):
        wavenumbers_sq(GridSpec((4, 4, 4)), bc)
    flux = BoundarySpec(((NeumannFlux(1.0), NeumannFlux(1.0)), (Periodic(), Periodic()), (Periodic(), Periodic())))
    with pytest.raises(ValueError):
        TransformPlan(GridSpec((4, 4, 4)), flux)


def test_symbol_examples():
    assert Stabilizer(diffusive=2.0)(np.array(4.0)) == -8.0
    assert Stabilizer(diffusive=1.0)(np.array(0.0)) == 0.0
    ch = CahnHilliard(gamma0=1.0, eps=1.0, D0=1.0, M0=1.0)
    assert ch.stabilizers()["phi"](np.array(4.0)) == pytest.approx(-32.0)


def test_build_symbol_shapes_and_sign():
    g = GridSpec((8, 8, 8))
    for bc in ALL_BCS.values():
        plan = TransformPlan(g, bc)
        sym = build_symbol(Diffusion(D0=1.5), g, bc, plan=plan)["c"]
        assert sym.s.shape == plan.mode_shape
        assert np.all(sym.s <= 0)


def test_problem_without_symbol():
    prob = MuDiffusion(mu=lambda c: c)
    with pytest.raises(ValueError, match="explicit Euler"):
        build_symbol(prob, GridSpec((4, 4, 4)), BoundarySpec.periodic())


def test_positive_symbol_rejected():
    with pytest.raises(ValueError):
        SpectralSymbol(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        Stabilizer(diffusive=-1.0)


def test_constant_field_backward_norm():
    g = GridSpec((4, 4, 4))
    plan = TransformPlan(g, BoundarySpec.periodic(), norm="backward")
    c = plan.forward(np.ones(g.shape))
    assert c[0, 0, 0] == pytest.approx(g.n_voxels * 1.0)
    c[0, 0, 0] = 0
    assert np.max(np.abs(c)) < 1e-13


def test_pure_tone_two_modes():
    n = 16
    g = GridSpec((n, 1, 1))
    plan = TransformPlan(g, BoundarySpec.periodic())
    x = g.coords()[0]
    c = np.fft.fft(np.sin(2 * np.pi * x / n).ravel(), norm="ortho")
    assert np.sum(np.abs(c) > 1e-13) == 2
    half = plan.forward(np.sin(2 * np.pi * x / n))
    assert np.sum(np.abs(half) > 1e-13) == 1  # the conjugate partner lives in the dropped half


@pytest.mark.parametrize("name", sorted(ALL_BCS))
def test_round_trip_random(name, rng):
    g = GridSpec((16, 16, 16))
    plan = TransformPlan(g, ALL_BCS[name])
    u = rng.standard_normal(g.shape)
    back = plan.inverse(plan.forward(u))
    assert np.max(np.abs(back - u)) <= 1e-13 * np.max(np.abs(u))


def test_shape_mismatch():
    plan = TransformPlan(GridSpec((4, 4, 4)), BoundarySpec.periodic())
    with pytest.raises(ValueError, match="shape mismatch"):
        plan.forward(np.zeros((4, 4, 5)))


@given(dims=st.tuples(*[st.integers(2, 9)] * 3), name=st.sampled_from(sorted(ALL_BCS)),
       seed=st.integers(0, 2**16))
def test_parseval(dims, name, seed):
    u = np.random.default_rng(seed).standard_normal(dims)
    plan = TransformPlan(GridSpec(dims), ALL_BCS[name])
    assert plan.coefficient_norm_sq(plan.forward(u)) == pytest.approx(float(np.sum(u * u)), rel=1e-12)


@given(dims=st.tuples(*[st.integers(2, 9)] * 3), name=st.sampled_from(sorted(ALL_BCS)),
       seed=st.integers(0, 2**16), h=st.floats(0.1, 3.0))
def test_spectral_laplacian_matches_stencil(dims, name, seed, h):
    """Homogeneous BCs: the modified symbol diagonalizes the 7-point stencil."""
    u = np.random.default_rng(seed).standard_normal(dims)
    g = GridSpec(dims, (h, h, h))
    bc = ALL_BCS[name]
    plan = TransformPlan(g, bc)
    spec = plan.inverse(-wavenumbers_sq(g, bc, plan=plan) * plan.forward(u))
    fd = laplacian(u, StencilContext(g, bc))
    assert np.max(np.abs(spec - fd)) <= 1e-11 * max(np.max(np.abs(fd)), 1e-300)


@given(s=st.lists(st.floats(-1e6, 0), min_size=1, max_size=20), dt=st.floats(1e-4, 10))
def test_imex_prefactor_bounds(s, dt):
    p = imex_prefactor(np.array(s), dt)
    assert np.all(p > 0) and np.all(p <= dt)


def test_phi1_branches():
    z = np.array([0.0, 1e-6, -1e-5, 9.9e-5, 1e-4, -1.0, -50.0])
    ref = np.array([1.0] + [np.expm1(v) / v for v in z[1:]])
    assert np.allclose(phi1(z), ref, rtol=1e-14, atol=0)
    assert np.allclose(etd1_prefactor(np.zeros(3), 0.3), 0.3)
