"""Signed-distance level sets: construction, zero contour, reinitialization, motion.

Sign convention: theta < 0 marks the inclusion phase, theta >= 0 the matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh import Mesh, ScalarField, nodal_gradient_magnitude


class ReinitializationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class LevelSet(ScalarField):
    """A :class:`ScalarField` interpreted as a level set function."""

    @property
    def theta(self) -> np.ndarray:
        return self.values


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float
    sign: int = 1  # +1 adds the disk to the inclusion, -1 carves it out


@dataclass(frozen=True)
class Contour:
    segments: np.ndarray  # (S, 2, 2)

    @property
    def length(self) -> float:
        if len(self.segments) == 0:
            return 0.0
        return float(np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1).sum())

    def __len__(self):
        return len(self.segments)


def signed_distance_circle(mesh: Mesh, center, radius: float) -> LevelSet:
    if radius <= 0:
        raise ValueError("radius must be positive")
    d = np.linalg.norm(mesh.nodes - np.asarray(center, dtype=float), axis=1)
    return LevelSet(mesh, d - radius)


def signed_distance_circles(mesh: Mesh, circles) -> LevelSet:
    """Level set of a union of disks (minus any negatively signed ones).

    Exact for a single disk; for several disks the result is reinitialized so
    that it is a true signed distance to the combined contour.
    """
    circles = list(circles)
    if not circles:
        raise ValueError("at least one circle is required")
    theta = None
    for c in circles:
        d = signed_distance_circle(mesh, c.center, c.radius).values
        if theta is None:
            theta = d if c.sign > 0 else -d
        elif c.sign > 0:
            theta = np.minimum(theta, d)
        else:
            theta = np.maximum(theta, -d)
    ls = LevelSet(mesh, theta)
    if len(circles) > 1:
        ls = reinitialize(ls)
    return ls


def _edge_crossings(ls: LevelSet):
    """Per crossing triangle, the two interpolated zero points."""
    mesh = ls.mesh
    th = ls.values[mesh.triangles]  # (T, 3)
    neg = th < 0
    cut = neg.any(axis=1) & ~neg.all(axis=1)
    tri = np.nonzero(cut)[0]
    segs = np.empty((len(tri), 2, 2))
    for k, t in enumerate(tri):
        v = mesh.triangles[t]
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if neg[t, a] != neg[t, b]:
                ta, tb = th[t, a], th[t, b]
                s = ta / (ta - tb)
                pts.append(mesh.nodes[v[a]] + s * (mesh.nodes[v[b]] - mesh.nodes[v[a]]))
        segs[k] = pts
    return tri, segs


def extract_zero_contour(ls: LevelSet) -> Contour:
    _, segs = _edge_crossings(ls)
    return Contour(segs)


def _point_segment_distance(points: np.ndarray, segments: np.ndarray, chunk: int = 512) -> np.ndarray:
    a = segments[:, 0]
    ab = segments[:, 1] - a
    denom = np.einsum("sd,sd->s", ab, ab)
    safe = np.where(denom > 0, denom, 1.0)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        p = points[lo:lo + chunk, None, :]  # (P, 1, 2)
        ap = p - a[None]
        t = np.where(denom > 0, np.einsum("psd,sd->ps", ap, ab) / safe, 0.0)
        t = np.clip(t, 0.0, 1.0)
        d = ap - t[..., None] * ab[None]
        out[lo:lo + chunk] = np.sqrt(np.einsum("psd,psd->ps", d, d).min(axis=1))
    return out


def reinitialize(ls: LevelSet) -> LevelSet:
    """Rebuild theta as the exact signed distance to its zero contour."""
    contour = extract_zero_contour(ls)
    if len(contour) == 0:
        warnings.warn("level set has no zero contour; left unchanged", ReinitializationWarning, stacklevel=2)
        return ls
    dist = _point_segment_distance(ls.mesh.nodes, contour.segments)
    sign = np.where(ls.values < 0, -1.0, 1.0)
    return LevelSet(ls.mesh, sign * dist)


def evolve(ls: LevelSet, speed: ScalarField, tau_star: float, cfl: float = 0.5) -> LevelSet:
    """Explicit sub-stepped descent ``theta_tau = -|grad theta| * speed`` over ``tau_star``."""
    if tau_star <= 0:
        raise ValueError("tau_star must be positive")
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    g = np.asarray(speed.values, dtype=float)
    gmax = np.abs(g).max()
    if gmax == 0:
        return ls
    dtau_max = cfl * ls.mesh.cell_size / gmax
    theta = ls.values.copy()
    remaining = tau_star
    while remaining > 1e-14 * tau_star:
        dtau = min(remaining, dtau_max)
        grad = nodal_gradient_magnitude(ScalarField(ls.mesh, theta)).values
        theta = theta - dtau * grad * g
        remaining -= dtau
    return LevelSet(ls.mesh, theta)


def _clip_negative(pts: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Polygon of the part of a triangle where the linear interpolant is negative."""
    poly = []
    for a in range(3):
        b = (a + 1) % 3
        if vals[a] < 0:
            poly.append(pts[a])
        if (vals[a] < 0) != (vals[b] < 0):
            s = vals[a] / (vals[a] - vals[b])
            poly.append(pts[a] + s * (pts[b] - pts[a]))
    return np.array(poly)


def _polygon_area_centroid(poly: np.ndarray):
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, poly.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6 * area)
    cy = ((y + yn) * cross).sum() / (6 * area)
    return abs(area), np.array([cx, cy])


def inclusion_area_centroid(ls: LevelSet) -> tuple[float, np.ndarray]:
    """Exact area and centroid of {theta < 0} for the piecewise-linear theta."""
    mesh = ls.mesh
    th = ls.values[mesh.triangles]
    neg = th < 0
    full = neg.all(axis=1)
    areas = mesh.areas
    centroids = mesh.nodes[mesh.triangles].mean(axis=1)
    total = areas[full].sum()
    moment = (areas[full, None] * centroids[full]).sum(axis=0)
    for t in np.nonzero(neg.any(axis=1) & ~full)[0]:
        a, c = _polygon_area_centroid(_clip_negative(mesh.nodes[mesh.triangles[t]], th[t]))
        total += a
        moment = moment + a * c
    if total == 0:
        return 0.0, np.array([np.nan, np.nan])
    return float(total), moment / total


def count_components(ls: LevelSet) -> int:
    """Connected components of the triangles whose mean theta is negative."""
    mesh = ls.mesh
    inside = ls.values[mesh.triangles].mean(axis=1) < 0
    tri = np.nonzero(inside)[0]
    if len(tri) == 0:
        return 0
    # triangles sharing an edge are adjacent
    local = mesh.triangles[tri]
    e = np.concatenate([local[:, [0, 1]], local[:, [1, 2]], local[:, [2, 0]]])
    e = np.sort(e, axis=1)
    owner = np.tile(np.arange(len(tri)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    i, j = owner[:-1][same], owner[1:][same]
    adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(len(tri), len(tri)))
    n, _ = connected_components(adj, directed=False)
    return int(n)
