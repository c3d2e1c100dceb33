"""
Procedural meshes: planar grids, icospheres, ellipsoids and lattice patches
used as synthetic templates and as analytic test surfaces
"""

from typing import Dict, Tuple

import numpy as np
from scipy.spatial import Delaunay

from mesh_core.surface import MeshError, TriMesh

GOLDEN_RATIO = (1.0 + 5.0 ** 0.5) / 2.0


def grid_mesh(nx: int, ny: int, spacing: float = 1.0, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """
    Planar grid in z = origin[2] with nx x ny vertices

    Each cell is split into two triangles along alternating diagonals so
    the mesh has no preferred direction.
    """
    if nx < 2 or ny < 2:
        raise MeshError("A grid needs at least 2 x 2 vertices")
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)]) + np.asarray(origin)

    triangles = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b, c, d = a + 1, a + nx, a + nx + 1
            if (i + j) % 2 == 0:
                triangles += [(a, b, d), (a, d, c)]
            else:
                triangles += [(a, b, c), (b, d, c)]
    return TriMesh(vertices, np.array(triangles))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriMesh:
    """Sphere from repeated 1-to-4 subdivision of an icosahedron, outward winding"""
    t = GOLDEN_RATIO
    vertices = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
                (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
                (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    points = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]

    for _ in range(subdivisions):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = points[i] + points[j]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined

    return TriMesh(np.array(points) * radius, np.array(faces))


def ellipsoid(axes=(1.0, 1.0, 1.0), subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Icosphere scaled per axis"""
    sphere = icosphere(subdivisions)
    return sphere.with_vertices(sphere.vertices * np.asarray(axes, dtype=np.float64) + np.asarray(center))


def golden_lattice(n: int) -> np.ndarray:
    """n quasi-uniform points in the unit square [0, 1]^2 (golden-ratio lattice)"""
    if n < 3:
        raise MeshError("A lattice patch needs at least 3 points")
    k = np.arange(n, dtype=np.float64)
    u = (k + 0.5) / n
    v = np.mod(k / GOLDEN_RATIO, 1.0)
    return np.column_stack([u, v])


def lattice_patch(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Delaunay triangulation of an n-point golden-ratio lattice

    Returns:
        (uv coordinates (n, 2), triangles (m, 3)) with counter-clockwise
        triangles in the uv plane
    """
    uv = golden_lattice(n)
    triangles = Delaunay(uv).simplices.astype(np.int64)
    a, b, c = uv[triangles[:, 0]], uv[triangles[:, 1]], uv[triangles[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    triangles[cross < 0] = triangles[cross < 0][:, [0, 2, 1]]
    # hull slivers between nearly collinear border points
    return uv, triangles[np.abs(cross) > 1e-10]


if __name__ == "__main__":
    for name, mesh in (("grid", grid_mesh(5, 4)), ("icosphere", icosphere(2)),
                       ("ellipsoid", ellipsoid((3, 2, 1), 2))):
        print(f"🔷 {name}: {mesh}, mean edge {mesh.mean_edge_length():.4f}")
