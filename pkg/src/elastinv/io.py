"""CSV / PPM writers and readers.

Floats are written in scientific notation with 9 significant digits, comma
separated, ``\\n`` line endings, so identical runs give identical files.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh
from .wave import BoundaryRecord


def fmt(x: float) -> str:
    return f"{float(x):.8e}"


def _write(path, header: str, rows) -> None:
    lines = [header] + [",".join(r) for r in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_field_csv(path, mesh: Mesh, values, name: str = "theta") -> None:
    values = np.asarray(values)
    _write(path, f"x,y,{name}", ([fmt(x), fmt(y), fmt(v)] for (x, y), v in zip(mesh.nodes, values)))


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]


def write_boundary_record(path, rec: BoundaryRecord) -> None:
    header = "t," + ",".join(f"x{i}" for i in range(len(rec.gamma_nodes)))
    rows = ([fmt(t)] + [fmt(v) for v in row] for t, row in zip(rec.times, rec.values))
    _write(path, header, rows)


def read_boundary_record(path, mesh: Mesh, gamma_nodes: np.ndarray) -> BoundaryRecord:
    """Load a record written by :func:`write_boundary_record` onto ``gamma_nodes`` of ``mesh``."""
    text = Path(path).read_text().splitlines()
    n_cols = len(text[0].split(",")) - 1
    if n_cols != len(gamma_nodes):
        raise ValueError(f"{path}: {n_cols} boundary columns, mesh has {len(gamma_nodes)} top nodes")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    h = float(t[1] - t[0]) if len(t) > 1 else 0.0
    return BoundaryRecord(np.asarray(gamma_nodes), mesh.nodes[gamma_nodes, 0].copy(), data[:, 1:], h)


def write_rows(path, header: str, rows) -> None:
    _write(path, header, ([fmt(v) if isinstance(v, float) else str(v) for v in r] for r in rows))


def rasterize(mesh: Mesh, values, size: int = 128) -> np.ndarray:
    """Sample the P1 interpolant of nodal ``values`` at pixel centres (row 0 at y = 1)."""
    values = np.asarray(values, dtype=float)
    c = (np.arange(size) + 0.5) / size
    out = np.zeros((size, size))
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        lo, hi = p.min(axis=0), p.max(axis=0)
        ix = np.nonzero((c >= lo[0]) & (c <= hi[0]))[0]
        iy = np.nonzero((c >= lo[1]) & (c <= hi[1]))[0]
        if len(ix) == 0 or len(iy) == 0:
            continue
        X, Y = np.meshgrid(c[ix], c[iy])
        T = np.array([p[1] - p[0], p[2] - p[0]]).T
        lam = np.linalg.solve(T, np.stack([X.ravel() - p[0, 0], Y.ravel() - p[0, 1]]))
        bary = np.vstack([1 - lam.sum(axis=0), lam])
        inside = np.all(bary >= -1e-12, axis=0)
        vals = values[tri] @ bary
        rows = size - 1 - np.repeat(iy, len(ix))
        cols = np.tile(ix, len(iy))
        out[rows[inside], cols[inside]] = vals[inside]
    return out


def write_ppm(path, image: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> None:
    """8-bit grayscale binary PGM/PPM ``P5`` heatmap."""
    vmin = float(image.min()) if vmin is None else vmin
    vmax = float(image.max()) if vmax is None else vmax
    span = vmax - vmin if vmax > vmin else 1.0
    pix = np.clip(np.round((image - vmin) / span * 255.0), 0, 255).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
