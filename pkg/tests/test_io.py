import numpy as np
import pytest

from elastinv import io
from elastinv.mesh import boundary_nodes, generate_mesh
from elastinv.wave import BoundaryRecord


def test_fmt_nine_digits():
    assert io.fmt(1.0) == "1.00000000e+00"
    assert io.fmt(-1.2345678912e-21) == "-1.23456789e-21"


def test_field_csv_roundtrip(tmp_path, mesh20):
    vals = np.linspace(-1, 1, mesh20.n_nodes)
    p = tmp_path / "theta.csv"
    io.write_field_csv(p, mesh20, vals)
    text = p.read_bytes()
    assert text.startswith(b"x,y,theta\n") and b"\r" not in text
    assert text.count(b"\n") == mesh20.n_nodes + 1
    xy, v = io.read_field_csv(p)
    assert np.allclose(xy, mesh20.nodes) and np.allclose(v, vals, rtol=1e-8)


def test_boundary_record_roundtrip(tmp_path, mesh20):
    gamma = boundary_nodes(mesh20, "Top")
    rng = np.random.default_rng(0)
    rec = BoundaryRecord(gamma, mesh20.nodes[gamma, 0], rng.normal(size=(6, 21)) * 1e-9, 3e-6)
    p = tmp_path / "b.csv"
    io.write_boundary_record(p, rec)
    lines = p.read_text().splitlines()
    assert lines[0] == "t," + ",".join(f"x{i}" for i in range(21))
    assert len(lines) == 7
    back = io.read_boundary_record(p, mesh20, gamma)
    assert back.values == pytest.approx(rec.values, rel=1e-8)
    assert back.h == pytest.approx(3e-6, rel=1e-8)
    with pytest.raises(ValueError):
        io.read_boundary_record(p, generate_mesh(10), boundary_nodes(generate_mesh(10), "Top"))


def test_write_rows(tmp_path):
    p = tmp_path / "h.csv"
    io.write_rows(p, "iter,cost", [[0, 1.5], [1, 0.25]])
    assert p.read_text() == "iter,cost\n0,1.50000000e+00\n1,2.50000000e-01\n"


def test_rasterize_linear_field(mesh20):
    img = io.rasterize(mesh20, mesh20.nodes[:, 0] + 2 * mesh20.nodes[:, 1], size=16)
    c = (np.arange(16) + 0.5) / 16
    X, Y = np.meshgrid(c, c[::-1])
    assert img == pytest.approx(X + 2 * Y, abs=1e-12)


def test_write_ppm(tmp_path):
    img = np.array([[0.0, 1.0], [0.5, 2.0]])
    p = tmp_path / "a.ppm"
    io.write_ppm(p, img, 0.0, 1.0)
    data = p.read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 255, 128, 255]
    io.write_ppm(p, np.zeros((3, 3)))
    assert p.read_bytes()[-9:] == bytes(9)
