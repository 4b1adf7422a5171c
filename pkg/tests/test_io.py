import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxelpde import GridSpec, VoxelFields
from voxelpde.io import read_raw, read_sidecar, read_vtk, write_raw, write_vtk


def test_vtk_zeros(tmp_path):
    vf = VoxelFields(GridSpec((2, 2, 2)))
    vf.add_field("phi", 0.0)
    text = write_vtk(vf, tmp_path / "z.vtk").read_text()
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET STRUCTURED_POINTS" in text
    assert "DIMENSIONS 2 2 2" in text
    assert "POINT_DATA 8" in text
    body = lines[lines.index("LOOKUP_TABLE default") + 1:]
    assert [float(v) for v in body] == [0.0] * 8


def test_vtk_grammar_and_order(tmp_path, rng):
    g = GridSpec((3, 4, 5), (0.5, 1.0, 2.0), origin=(1, 2, 3))
    vf = VoxelFields(g)
    vf.add_field("a", rng.random(g.shape))
    vf.add_field("b", lambda x, y, z: x + 10 * y + 100 * z)
    path = write_vtk(vf, tmp_path / "f.vtk")
    lines = path.read_text().splitlines()
    assert lines[2] == "ASCII"
    assert "ORIGIN 1.25 2.5 4.0" in lines
    assert any(line.startswith("SPACING 0.5 1") for line in lines)
    assert lines.count("LOOKUP_TABLE default") == 2
    first_b = lines.index("SCALARS b double 1") + 2
    # x varies fastest
    assert float(lines[first_b + 1]) - float(lines[first_b]) == pytest.approx(0.5)
    back = read_vtk(path)
    assert np.array_equal(back["a"], vf["a"])
    assert np.array_equal(back["b"], vf["b"])


@given(dims=st.tuples(*[st.integers(2, 5)] * 3), seed=st.integers(0, 1000), f32=st.booleans())
def test_raw_round_trip_bit_exact(tmp_path_factory, dims, seed, f32):
    g = GridSpec(dims)
    vf = VoxelFields(g, np.float32 if f32 else np.float64)
    vf.add_field("c", np.random.default_rng(seed).standard_normal(g.shape))
    path = tmp_path_factory.mktemp("raw") / "c.raw"
    write_raw(vf, "c", path)
    back = read_raw(path)
    assert back["c"].dtype == vf["c"].dtype
    assert back["c"].tobytes() == vf["c"].tobytes()


def test_raw_sidecar_contents(tmp_path):
    vf = VoxelFields(GridSpec((2, 3, 4), (1, 2, 3), (0, 0, 1)))
    vf.add_field("psi", 1.0)
    write_raw(vf, "psi", tmp_path / "psi.raw", extra={"t": 2.5})
    meta = read_sidecar(tmp_path / "psi.raw")
    assert meta == {"dims": [2, 3, 4], "spacing": [1, 2, 3], "origin": [0, 0, 1],
                    "dtype": "float64", "field": "psi", "t": 2.5}
    assert (tmp_path / "psi.raw").stat().st_size == 24 * 8


def test_raw_x_fastest(tmp_path):
    vf = VoxelFields(GridSpec((2, 2, 2)))
    vf.add_field("i", lambda x, y, z: (x - 0.5) + 2 * (y - 0.5) + 4 * (z - 0.5))
    write_raw(vf, "i", tmp_path / "i.raw")
    flat = np.frombuffer((tmp_path / "i.raw").read_bytes(), dtype="<f8")
    assert flat.tolist() == list(range(8))


def test_raw_size_mismatch(tmp_path):
    np.arange(7, dtype="<f8").tofile(tmp_path / "bad.raw")
    with pytest.raises(ValueError, match="size mismatch"):
        read_raw(tmp_path / "bad.raw", grid=GridSpec((2, 2, 2)), dtype="float64", name="c")


def test_raw_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.raw"):
        read_raw(tmp_path / "nope.raw")


def test_unwritable_path(tmp_path):
    vf = VoxelFields(GridSpec((2, 2, 2)))
    vf.add_field("c", 0.0)
    with pytest.raises(OSError):
        write_raw(vf, "c", tmp_path / "missing_dir" / "c.raw")
