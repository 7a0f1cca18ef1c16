"""Triangulated unit square and P1 primitives.

Nodes are stored row-major by (y, then x).  Cells of the structured grid are
split along alternating diagonals ("union jack"), which makes the mesh mirror
symmetric about x = 0.5 whenever the number of divisions is even.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAGS = ("Top", "Bottom", "Left", "Right")


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    boundary_edges: np.ndarray  # (B, 2)
    boundary_tags: tuple  # (B,) entries of TAGS
    _geom: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.triangles, self.boundary_edges):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def _geometry(self):
        if "area" not in self._geom:
            p = self.nodes[self.triangles]  # (T, 3, 2)
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            # gradients of the barycentric coordinates, shape (T, 3, 2)
            x, y = p[..., 0], p[..., 1]
            gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
            gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
            grads = np.stack([gx, gy], axis=-1) / det[:, None, None]
            edges = np.concatenate([
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            ])
            self._geom.update(
                signed_area=0.5 * det,
                area=0.5 * np.abs(det),
                grads=grads,
                min_edge=float(edges.min()),
                max_edge=float(edges.max()),
            )
        return self._geom

    @property
    def signed_areas(self) -> np.ndarray:
        return self._geometry()["signed_area"]

    @property
    def areas(self) -> np.ndarray:
        return self._geometry()["area"]

    @property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions on each triangle, (T, 3, 2)."""
        return self._geometry()["grads"]

    @property
    def cell_size(self) -> float:
        """Shortest edge length."""
        return self._geometry()["min_edge"]

    @property
    def cell_diameter(self) -> float:
        """Longest edge length."""
        return self._geometry()["max_edge"]

    def edges(self) -> np.ndarray:
        """Unique undirected edges, (E, 2) with i < j."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected {self.mesh.n_nodes} nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class VectorField:
    mesh: Mesh
    values: np.ndarray  # (N, 2)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes, 2):
            raise ValueError(f"expected ({self.mesh.n_nodes}, 2) values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def flat(self) -> np.ndarray:
        """Node-major interleaved vector (u1_0, u2_0, u1_1, ...)."""
        return self.values.reshape(-1)


def generate_mesh(n_divisions: int) -> Mesh:
    if n_divisions < 2:
        raise ValueError("n_divisions must be at least 2")
    n = n_divisions
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)  # row-major by y then x
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    # exact grid coordinates on the boundary
    nodes[np.isclose(nodes, 1.0, atol=1e-14)] = 1.0

    def idx(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    triangles = np.array(tris, dtype=np.int64)

    edges, tags = [], []
    for i in range(n):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        tags.append("Bottom")
    for j in range(n):
        edges.append((idx(n, j), idx(n, j + 1)))
        tags.append("Right")
    for i in range(n):
        edges.append((idx(i + 1, n), idx(i, n)))
        tags.append("Top")
    for j in range(n):
        edges.append((idx(0, j + 1), idx(0, j)))
        tags.append("Left")
    return Mesh(nodes, triangles, np.array(edges, dtype=np.int64), tuple(tags))


def load_mesh(path) -> Mesh:
    """Read the plain-text mesh format.

    First line ``nodes N triangles T``, then N lines ``x y``, T lines ``i j k``
    (0-based) and any number of boundary edge lines ``i j TAG``.
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0]
    if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
        raise ValueError(f"{path}: bad header {' '.join(head)!r}")
    n, t = int(head[1]), int(head[3])
    nodes = np.array([[float(v) for v in ln] for ln in lines[1:1 + n]])
    tris = np.array([[int(v) for v in ln] for ln in lines[1 + n:1 + n + t]], dtype=np.int64)
    edges, tags = [], []
    for ln in lines[1 + n + t:]:
        if ln[2] not in TAGS:
            raise ValueError(f"{path}: unknown boundary tag {ln[2]!r}")
        edges.append((int(ln[0]), int(ln[1])))
        tags.append(ln[2])
    # enforce positive orientation
    p = nodes[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return Mesh(nodes, tris, np.array(edges, dtype=np.int64).reshape(-1, 2), tuple(tags))


def write_mesh(mesh: Mesh, path) -> None:
    out = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    out += [f"{i} {j} {tag}" for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(out) + "\n")


def element_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-triangle gradient of the P1 interpolant of nodal ``values``.

    ``values`` of shape (N,) gives (T, 2); shape (N, k) gives (T, k, 2).
    """
    v = np.asarray(values)[mesh.triangles]  # (T, 3) or (T, 3, k)
    if v.ndim == 2:
        return np.einsum("ta,tad->td", v, mesh.basis_gradients)
    return np.einsum("tak,tad->tkd", v, mesh.basis_gradients)


def element_gradient(field: ScalarField, triangle_index: int) -> np.ndarray:
    mesh = field.mesh
    if not 0 <= triangle_index < mesh.n_triangles:
        raise IndexError(f"triangle index {triangle_index} out of range")
    tri = mesh.triangles[triangle_index]
    return field.values[tri] @ mesh.basis_gradients[triangle_index]


def node_average(mesh: Mesh, element_values: np.ndarray) -> np.ndarray:
    """Area-weighted average of per-triangle values over the triangles around each node."""
    w = mesh.areas
    num = np.zeros(mesh.n_nodes)
    den = np.zeros(mesh.n_nodes)
    for a in range(3):
        np.add.at(num, mesh.triangles[:, a], w * element_values)
        np.add.at(den, mesh.triangles[:, a], w)
    return num / den


def nodal_gradient_magnitude(field: ScalarField) -> ScalarField:
    g = element_gradients(field.mesh, field.values)
    return ScalarField(field.mesh, node_average(field.mesh, np.hypot(g[:, 0], g[:, 1])))


def boundary_nodes(mesh: Mesh, tag: str) -> np.ndarray:
    if tag not in TAGS:
        raise ValueError(f"unknown boundary tag {tag!r}")
    sel = [e for e, t in zip(mesh.boundary_edges, mesh.boundary_tags) if t == tag]
    idx = np.unique(np.array(sel, dtype=np.int64).reshape(-1))
    axis = 0 if tag in ("Top", "Bottom") else 1
    return idx[np.argsort(mesh.nodes[idx, axis], kind="stable")]
