"""
Point-to-surface distances

closest_points_on_triangles is a vectorised transcription of the
region test from Ericson, Real-Time Collision Detection (2004).
SurfaceIndex first tries the triangles of the nearest centroids. Where
that set cannot be proven complete it prunes with two k-d trees: the
nearest surface vertex gives an upper bound d0 on the distance, so only
triangles whose centroid lies within d0 + (largest centroid-to-corner
radius) can hold the closest point.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.spatial import cKDTree

from mesh_core.surface import MeshError, TriMesh, require_nonempty

# Query points handled per vectorised block
_CHUNK = 4096
# Nearest centroids tried before falling back to a radius search
_NEAREST = 8


def closest_points_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                                c: np.ndarray) -> np.ndarray:
    """
    Closest point of each triangle (a[i], b[i], c[i]) to p[i]

    All arguments are (k, 3) arrays; the result is (k, 3). Vertex, edge
    and interior regions are all handled.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        result = a + ab * v[:, None] + ac * w[:, None]

        # later assignments win, so regions go in reverse order of precedence
        in_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        result = np.where(in_bc[:, None], b + (c - b) * t[:, None], result)

        in_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        result = np.where(in_ac[:, None], a + ac * t[:, None], result)

        in_c = (d6 >= 0) & (d5 <= d6)
        result = np.where(in_c[:, None], c, result)

        in_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        result = np.where(in_ab[:, None], a + ab * t[:, None], result)

        in_b = (d3 >= 0) & (d4 <= d3)
        result = np.where(in_b[:, None], b, result)

        in_a = (d1 <= 0) & (d2 <= 0)
        result = np.where(in_a[:, None], a, result)

    bad = ~np.all(np.isfinite(result), axis=1)
    if np.any(bad):
        # degenerate triangles: fall back to the nearest corner
        corners = np.stack([a[bad], b[bad], c[bad]], axis=1)
        gaps = np.linalg.norm(corners - p[bad][:, None, :], axis=2)
        result[bad] = corners[np.arange(bad.sum()), np.argmin(gaps, axis=1)]
    return result


@dataclass
class DistanceStats:
    """
    Order statistics of a set of point-to-surface distances (mm)

    The median is the middle order statistic, the mean of the two middle
    values for even counts. std uses the population convention.
    """
    distances: np.ndarray
    mean: float
    median: float
    std: float
    max: float
    min: float

    @classmethod
    def from_distances(cls, distances) -> "DistanceStats":
        d = np.asarray(distances, dtype=np.float64).ravel()
        if d.size == 0:
            raise MeshError("No distances to summarise")
        return cls(d, float(d.mean()), float(np.median(d)), float(d.std()),
                   float(d.max()), float(d.min()))

    def to_dict(self, include_distances: bool = False) -> Dict:
        record = {"count": int(self.distances.size), "mean": self.mean, "median": self.median,
                  "std": self.std, "max": self.max, "min": self.min}
        if include_distances:
            record["distances"] = self.distances.tolist()
        return record


class SurfaceIndex:
    """
    Static closest-point index over one mesh

    Built once per target surface; queries are exact (not approximate)
    and ties between equally distant triangles go to the lowest index.
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = require_nonempty(mesh)
        tris = mesh.triangles
        self._a = mesh.vertices[tris[:, 0]]
        self._b = mesh.vertices[tris[:, 1]]
        self._c = mesh.vertices[tris[:, 2]]
        centroids = (self._a + self._b + self._c) / 3.0
        self._radius = float(max(
            np.linalg.norm(self._a - centroids, axis=1).max(),
            np.linalg.norm(self._b - centroids, axis=1).max(),
            np.linalg.norm(self._c - centroids, axis=1).max(),
        ))
        used = np.unique(tris)
        self._vertex_tree = cKDTree(mesh.vertices[used])
        self._centroid_tree = cKDTree(centroids)

    def query(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Closest surface point for every query point

        Returns:
            (distances (k,), closest points (k, 3), triangle indices (k,))
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        distances = np.empty(len(points))
        closest = np.empty((len(points), 3))
        owners = np.empty(len(points), dtype=np.int64)
        for start in range(0, len(points), _CHUNK):
            block = slice(start, start + _CHUNK)
            distances[block], closest[block], owners[block] = self._query_block(points[block])
        return distances, closest, owners

    def distances(self, points) -> np.ndarray:
        return self.query(points)[0]

    def _query_block(self, points: np.ndarray):
        k = min(_NEAREST, len(self._a))
        centre_gap, tri = self._centroid_tree.query(points, k=k)
        centre_gap, tri = centre_gap.reshape(len(points), k), tri.reshape(len(points), k)
        flat = tri.ravel()
        nearest = closest_points_on_triangles(np.repeat(points, k, axis=0), self._a[flat],
                                              self._b[flat], self._c[flat]).reshape(-1, k, 3)
        gap = np.linalg.norm(nearest - points[:, None, :], axis=2)
        pick = np.lexsort((tri, gap), axis=-1)[:, 0]
        rows = np.arange(len(points))
        distances, closest, owners = gap[rows, pick], nearest[rows, pick], tri[rows, pick]

        # a triangle outside the k nearest centroids lies at least its
        # centroid distance minus the radius away
        if k < len(self._a):
            open_rows = np.flatnonzero(centre_gap[:, -1] <= distances + self._radius + 1e-9)
            if len(open_rows):
                (distances[open_rows], closest[open_rows],
                 owners[open_rows]) = self._query_ball(points[open_rows])
        return distances, closest, owners

    def _query_ball(self, points: np.ndarray):
        upper, _ = self._vertex_tree.query(points)
        candidates = self._centroid_tree.query_ball_point(points, upper + self._radius + 1e-9)
        counts = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=len(points))
        group = np.repeat(np.arange(len(points)), counts)
        tri = np.fromiter((t for c in candidates for t in c), dtype=np.int64, count=int(counts.sum()))

        nearest = closest_points_on_triangles(points[group], self._a[tri], self._b[tri], self._c[tri])
        gap = np.linalg.norm(nearest - points[group], axis=1)

        order = np.lexsort((tri, gap, group))
        first = np.ones(len(order), dtype=bool)
        first[1:] = group[order][1:] != group[order][:-1]
        pick = order[first]
        return gap[pick], nearest[pick], tri[pick]


def surface_index(mesh: TriMesh) -> SurfaceIndex:
    """SurfaceIndex built once per mesh and kept with it"""
    return mesh._cached("surface_index", lambda: SurfaceIndex(mesh))


def point_to_surface_distance(p, mesh: TriMesh) -> float:
    """
    Exact Euclidean distance from a point to a triangle mesh

    Args:
        p: 3D point (mm)
        mesh: Non-empty mesh

    Returns:
        float: min over all triangles of the point-to-triangle distance

    Raises:
        MeshError: empty mesh
    """
    require_nonempty(mesh)
    p = np.asarray(p, dtype=np.float64).reshape(3)
    tris = mesh.triangles
    query = np.broadcast_to(p, (len(tris), 3))
    nearest = closest_points_on_triangles(
        query, mesh.vertices[tris[:, 0]], mesh.vertices[tris[:, 1]], mesh.vertices[tris[:, 2]]
    )
    return float(np.linalg.norm(nearest - query, axis=1).min())


def mesh_to_surface_stats(source: TriMesh, target: TriMesh) -> DistanceStats:
    """
    Distances from every source vertex to the target surface

    Asymmetric: mesh_to_surface_stats(a, b) and (b, a) differ in general.
    """
    require_nonempty(source, "source mesh")
    index = SurfaceIndex(target)
    return DistanceStats.from_distances(index.distances(source.vertices))
