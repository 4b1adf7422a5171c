"""End-to-end acceptance checks, one block per criterion.

Each test records its outcome; one PASS/FAIL line per criterion is printed
when the module finishes.  Criteria that do not hold are left failing.
"""

import time
from collections import defaultdict

import numpy as np
import pytest
import tomli_w

from voxelpde import (
    AllenCahn,
    AllenCahnNoCurvature,
    BoundarySpec,
    CahnHilliard,
    Diffusion,
    GridSpec,
    MultiPhase,
    NonFiniteError,
    SmoothedBoundary,
    StepperSpec,
    VoxelFields,
    cli,
    run,
)
from voxelpde.inverse import InverseProblem, Observation, Parameter, fit
from voxelpde.problems import rhs_smoothed_boundary
from voxelpde.stencils import StencilContext
from voxelpde.verification import dense_oracle_step, run_case, run_suite, smoothed_boundary_spatial_case

pytestmark = pytest.mark.acceptance

TITLES = {
    1: "IMEX stability, CH spinodal 64³, 1000 steps at dt=1",
    2: "mass conservation and explicit-Euler blow-up",
    3: "convergence orders",
    4: "IMEX vs dense implicit-Euler oracle on 8³",
    5: "Allen–Cahn curvature flow, 96³",
    6: "multiphase partition of unity",
    7: "smoothed-boundary reduction",
    8: "memory linearity",
    9: "inverse recovery",
    10: "determinism",
}
_results = defaultdict(list)


def record(criterion, part, ok, detail):
    _results[criterion].append((part, bool(ok), detail))
    assert ok, f"criterion {criterion} ({part}): {detail}"


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.getplugin("terminalreporter")
    lines = ["", "acceptance summary"]
    for n in sorted(TITLES):
        parts = _results.get(n)
        if not parts:
            lines.append(f"criterion {n:2d} NOT RUN  {TITLES[n]}")
            continue
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p}: {'ok' if ok else 'FAILED'} ({d})" for p, ok, d in parts)
        lines.append(f"criterion {n:2d} {status}  {TITLES[n]} | {detail}")
    for line in lines:
        if tr is not None:
            tr.write_line(line)
        else:
            print(line)


def _noise(grid, mean=0.5, amplitude=0.05, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    return mean + amplitude * (2 * rng.random(grid.shape) - 1)


# -- 1, 2 -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def spinodal_run():
    g = GridSpec((64, 64, 64))
    vf = VoxelFields(g)
    vf.add_field("phi", _noise(g))
    var0 = float(np.var(vf["phi"]))
    tic = time.perf_counter()
    _, m = run(CahnHilliard(gamma0=1.0, eps=1.0, D0=1.0), vf, StepperSpec("imex", 1.0, 1000, every=10),
               BoundarySpec.periodic(), track_memory=False)
    return vf, m, var0, time.perf_counter() - tic


def test_c1_imex_stability(spinodal_run):
    vf, m, var0, wall = spinodal_run
    phi = vf["phi"]
    lo, hi = float(phi.min()), float(phi.max())
    ratio = float(np.var(phi)) / var0
    ok = np.all(np.isfinite(phi)) and lo >= -0.1 and hi <= 1.1 and ratio >= 10 and wall <= 300
    record(1, "IMEX run", ok, f"range [{lo:.4f}, {hi:.4f}], variance ×{ratio:.0f}, {wall:.0f}s")


def test_c2_mass_drift(spinodal_run):
    _, m, _, _ = spinodal_run
    mass = np.array(m.mass["phi"])
    drift = float(np.max(np.abs(mass - mass[0])) / abs(mass[0]))
    record(2, "mass drift", drift <= 1e-12, f"max relative drift {drift:.2e}")


def test_c2_explicit_euler_blows_up():
    g = GridSpec((64, 64, 64))
    vf = VoxelFields(g)
    vf.add_field("phi", _noise(g))
    try:
        run(CahnHilliard(gamma0=1.0, eps=1.0, D0=1.0), vf, StepperSpec("euler", 1.0, 1000, every=100),
            BoundarySpec.periodic(), track_memory=False, diagnostics=False)
    except NonFiniteError as exc:
        record(2, "euler NaN", True, f"aborted at step {exc.step}")
        return
    phi = vf["phi"]
    record(2, "euler NaN", False,
           f"no NaN: finite for 1000 steps, |φ| up to {np.max(np.abs(phi)):.1e}, mobility clamp freezes all cells")


# -- 3, 4 -----------------------------------------------------------------------------


def test_c3_convergence_suite():
    tic = time.perf_counter()
    results = run_suite()
    wall = time.perf_counter() - tic
    failed = [f"{r.case.name}={r.order:.3f}" for r in results if not r.passed]
    required = {f"diffusion+{bc}+{s}" for bc in ("periodic", "dirichlet", "zeroflux") for s in ("euler", "imex", "etd1")}
    required |= {"allen_cahn+periodic+imex", "allen_cahn+periodic+etd1"}
    names = {r.case.name for r in results}
    orders = ", ".join(f"{r.case.name}={r.order:.3f}" for r in results if r.case.name in required)
    ok = not failed and required <= names and wall <= 600
    record(3, "suite", ok, f"{len(results) - len(failed)}/{len(results)} cases, {wall:.0f}s"
           + (f", failing {failed}" if failed else "") + f"; {orders}")


@pytest.mark.parametrize("family", ["periodic", "dirichlet", "zeroflux"])
def test_c4_dense_oracle(family):
    g = GridSpec((8, 8, 8))
    bc = {"periodic": BoundarySpec.periodic(), "dirichlet": BoundarySpec.dirichlet(0.3),
          "zeroflux": BoundarySpec.zero_flux()}[family]
    u0 = _noise(g, 0.5, 0.5, seed=4)
    vf = VoxelFields(g)
    vf.add_field("c", u0)
    run(Diffusion(D0=0.9), vf, StepperSpec("imex", 0.6, 1), bc, track_memory=False)
    err = float(np.max(np.abs(vf["c"] - dense_oracle_step(u0, 0.9, g, bc, 0.6))))
    record(4, family, err <= 1e-10, f"max diff {err:.1e}")


# -- 5 ---------------------------------------------------------------------------------

AC_N, AC_EPS, AC_R0, AC_T, AC_DT = 96, 3.0, 30.0, 30.0, 0.1


def _sphere_run(cls):
    g = GridSpec((AC_N,) * 3)
    c = AC_N / 2

    def sphere(x, y, z):
        r = np.sqrt((x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2)
        return 0.5 * (1 - np.tanh(1.5 * (r - AC_R0) / AC_EPS))

    vf = VoxelFields(g)
    vf.add_field("phi", sphere)
    steps = int(round(AC_T / AC_DT))
    _, m = run(cls(gamma0=1.0, eps=AC_EPS, M=1.0), vf, StepperSpec("imex", AC_DT, steps, every=steps // 10),
               BoundarySpec.periodic(), track_memory=False)
    t = np.array(m.t)
    vol = np.array(m.mass["phi"])
    return t, vol


@pytest.fixture(scope="module")
def ac_sphere():
    t, vol = _sphere_run(AllenCahn)
    r2 = (3 * vol / (4 * np.pi)) ** (2 / 3)
    slope = float(np.polyfit(t, r2, 1)[0])
    return slope


def test_c5_curvature_flow_rate(ac_sphere):
    expected = -4.0
    rel = abs(ac_sphere - expected) / abs(expected)
    record(5, "R² = R0² − 4Mγ0t", rel <= 0.10, f"dR²/dt = {ac_sphere:.3f} vs {expected}, off by {rel:.0%}")


def test_c5_curvature_free_volume():
    _, vol = _sphere_run(AllenCahnNoCurvature)
    change = float(abs(vol[-1] / vol[0] - 1))
    record(5, "curvature-free volume", change <= 0.01, f"volume change {change:.2%}")


def test_curvature_flow_matches_sharp_interface_rate(ac_sphere):
    # velocity 2Mγ0 times the summed curvature 2/R gives dR²/dt = −8Mγ0
    rel = abs(ac_sphere + 8.0) / 8.0
    assert rel <= 0.10, f"dR²/dt = {ac_sphere:.3f}"


# -- 6 ---------------------------------------------------------------------------------


def test_c6_multiphase_partition():
    g = GridSpec((32, 32, 32))
    rng = np.random.Generator(np.random.Philox(6))
    x, y, z = g.coords()
    centers = rng.random((3, 3)) * 32
    d = [np.sqrt(((x - cx + 16) % 32 - 16) ** 2 + ((y - cy + 16) % 32 - 16) ** 2 + ((z - cz + 16) % 32 - 16) ** 2)
         for cx, cy, cz in centers]
    w = np.exp(-np.array(d) / 2.0)
    phis = w / w.sum(axis=0)
    vf = VoxelFields(g)
    for i, p in enumerate(phis):
        vf.add_field(f"phi{i}", p)
    total0 = sum(vf[f"phi{i}"] for i in range(3))
    M = np.array([[0.0, 1.0, 0.7], [1.0, 0.0, 0.4], [0.7, 0.4, 0.0]])
    worst = [0.0]

    def check(step, t, state):
        total = sum(state[f"phi{i}"] for i in range(3))
        worst[0] = max(worst[0], float(np.max(np.abs(total - total0))))

    run(MultiPhase(mobility=M, gamma0=1.0, eps=2.0), vf, StepperSpec("imex", 0.5, 100), BoundarySpec.periodic(),
        callbacks=[check], track_memory=False)
    record(6, "Σφ drift", worst[0] <= 1e-8, f"max pointwise drift {worst[0]:.1e} over 100 steps")


# -- 7 ---------------------------------------------------------------------------------


def test_c7_unit_indicator_matches_diffusion():
    g = GridSpec((16, 16, 16))
    c0 = _noise(g, 0.5, 0.4, seed=7)
    spec = StepperSpec("euler", 0.1, 50)
    traj = {}
    for key, prob, names in (("sb", SmoothedBoundary(D0=1.0), ("z", "psi")), ("d", Diffusion(D0=1.0), ("c",))):
        vf = VoxelFields(g)
        vf.add_field(names[0], c0)
        if len(names) > 1:
            vf.add_field("psi", 1.0)
        states = []
        run(prob, vf, spec, BoundarySpec.periodic(), callbacks=[lambda s, t, st, n=names[0]: states.append(st[n].copy())],
            track_memory=False)
        traj[key] = states
    worst = max(float(np.max(np.abs(a - b))) for a, b in zip(traj["sb"], traj["d"]))
    record(7, "ψ≡1 trajectory", worst <= 1e-12 and len(traj["sb"]) == 51, f"max per-step diff {worst:.1e}")


def test_c7_slab_uniform_residual():
    residuals = []
    for n in (16, 32, 64, 128):
        grid = GridSpec((n, 4, 1), (1.0 / n, 1.0 / n, 1.0))
        x, _, _ = grid.coords()
        psi = np.broadcast_to(0.5 * (np.tanh((x - 0.25) / 0.05) - np.tanh((x - 0.75) / 0.05)), grid.shape).copy()
        ctx = StencilContext(grid, BoundarySpec.periodic())
        out = rhs_smoothed_boundary(0.7 * psi, psi, SmoothedBoundary(D0=1.0), ctx)
        residuals.append(float(np.max(np.abs(out))))
    # the scheme is exactly well balanced: the residual is round-off, scaled by 1/h²
    h2_envelope = all(r <= 1e-12 * n**2 for r, n in zip(residuals, (16, 32, 64, 128)))
    res = run_case(smoothed_boundary_spatial_case())
    ok = h2_envelope and res.passed
    record(7, "slab residual", ok,
           "uniform residuals " + " ".join(f"{r:.1e}" for r in residuals) + f"; tangential RHS order {res.order:.3f}")


# -- 8 ---------------------------------------------------------------------------------


def test_c8_memory_linearity():
    rows = []
    for n in (32, 64, 128):
        g = GridSpec((n, n, n))
        vf = VoxelFields(g)
        vf.add_field("phi", _noise(g))
        _, m = run(CahnHilliard(), vf, StepperSpec("imex", 1.0, 3), BoundarySpec.periodic(), diagnostics=False)
        rows.append((n, m.bytes_per_voxel, m.persistent_bytes / (g.n_voxels * 8)))
    bpv = [r[1] for r in rows]
    spread = max(bpv) / min(bpv) - 1
    persistent = max(r[2] for r in rows)
    ok = spread <= 0.05 and persistent <= 6
    record(8, "bytes/voxel", ok, " ".join(f"{n}³={b:.2f}" for n, b, _ in rows)
           + f", spread {spread:.1%}, persistent {persistent:.2f} field-equivalents")


# -- 9 ---------------------------------------------------------------------------------


def _snapshots(problem, vf, spec, steps):
    snaps = {}

    def grab(step, t, state):
        if step in steps:
            snaps[step] = state[problem.evolved[0]].copy()

    run(problem, vf.copy(), spec, BoundarySpec.periodic(), callbacks=[grab], track_memory=False)
    return [Observation(s * spec.dt, snaps[s]) for s in sorted(steps)]


def test_c9_diffusion_fit():
    g = GridSpec((16, 16, 16))
    x, y, z = g.coords()
    vf = VoxelFields(g)
    vf.add_field("c", np.exp(-((x - 7.5) ** 2 + (y - 6) ** 2 + (z - 9) ** 2) / 8.0))
    spec = StepperSpec("imex", 0.5, 50)
    obs = _snapshots(Diffusion(D0=1.0), vf, spec, {10, 20, 30, 40, 50})
    inv = InverseProblem(Diffusion(D0=0.3), vf, BoundarySpec.periodic(), spec, [Parameter("D0", 0.01, 10.0)], obs)
    tic = time.perf_counter()
    res = fit(inv, [0.5])
    wall = time.perf_counter() - tic
    rel = abs(res.params["D0"] - 1.0)
    record(9, "diffusion D", rel <= 0.01 and wall <= 120,
           f"D*={res.params['D0']:.6f} ({res.status}, {res.iterations} iterations, {wall:.1f}s)")


def test_c9_cahn_hilliard_fit():
    g = GridSpec((16, 16, 16))
    vf = VoxelFields(g)
    vf.add_field("phi", _noise(g, seed=9))
    spec = StepperSpec("imex", 1.0, 200)
    obs = _snapshots(CahnHilliard(D0=1.0), vf, spec, {100, 200})
    inv = InverseProblem(CahnHilliard(D0=1.0), vf, BoundarySpec.periodic(), spec, [Parameter("D0", 0.1, 10.0)], obs)
    tic = time.perf_counter()
    res = fit(inv, [2.0])
    wall = time.perf_counter() - tic
    rel = abs(res.params["D0"] - 1.0)
    record(9, "CH D0", rel <= 0.05 and wall <= 120,
           f"D0*={res.params['D0']:.6f} ({res.status}, {res.iterations} iterations, {wall:.1f}s)")


# -- 10 --------------------------------------------------------------------------------


def test_c10_determinism(tmp_path):
    data = {
        "grid": {"dims": [32, 32, 32]},
        "problem": {"name": "cahn_hilliard"},
        "initial": {"phi": "spinodal-noise(mean=0.5, amplitude=0.05, seed=42)"},
        "stepper": {"kind": "imex", "dt": 1.0, "steps": 100, "every": 5},
        "output": {"wall_time": False},
    }
    cfg = tmp_path / "run.toml"
    cfg.write_text(tomli_w.dumps(data))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(((out / "metrics.csv").read_bytes(), (out / "phi_final.raw").read_bytes()))
    same_metrics = outs[0][0] == outs[1][0]
    same_raw = outs[0][1] == outs[1][1]
    record(10, "bit-identical", same_metrics and same_raw, f"metrics {same_metrics}, final raw {same_raw}")
