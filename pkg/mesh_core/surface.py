"""
Triangle surface type shared by every stage of the pipeline
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from errors import GeometryError

log = logging.getLogger(__name__)

# Triangles below this area (mm^2) are treated as degenerate
AREA_EPSILON = 1e-12


class MeshError(GeometryError):
    """Invalid mesh content or query on an empty mesh"""
    kind = "mesh"


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area of every triangle"""
    if len(triangles) == 0:
        return np.zeros(0)
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def drop_degenerate(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Removes triangles whose area is below AREA_EPSILON

    Returns:
        (kept triangles, indices of the dropped triangles in the input)
    """
    if len(triangles) == 0:
        return triangles, np.zeros(0, dtype=np.int64)
    areas = triangle_areas(vertices, triangles)
    bad = areas < AREA_EPSILON
    return triangles[~bad], np.flatnonzero(bad)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Triangulated surface, vertex positions in mm

    Vertices are a (n, 3) float array and triangles a (m, 3) integer
    array of vertex indices. The constructor validates indices, finiteness
    and triangle areas; use TriMesh.repaired() for raw scan data.
    """
    vertices: np.ndarray
    triangles: np.ndarray
    notes: Tuple[str, ...] = field(default=())
    check_areas: bool = field(default=True, repr=False)

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "_cache", {})

        if not np.all(np.isfinite(vertices)):
            raise MeshError("Vertex coordinates must be finite")
        if len(triangles):
            if triangles.min() < 0 or triangles.max() >= len(vertices):
                bad = int(np.flatnonzero((triangles < 0) | (triangles >= len(vertices)))[0] // 3)
                raise MeshError(
                    f"Triangle references vertex {int(triangles[bad].max())} "
                    f"of {len(vertices)}", triangle=bad
                )
            areas = triangle_areas(vertices, triangles)
            if self.check_areas and np.any(areas < AREA_EPSILON):
                raise MeshError(
                    "Degenerate triangle", triangle=int(np.argmax(areas < AREA_EPSILON))
                )

    @classmethod
    def repaired(cls, vertices, triangles, source: str = "") -> "TriMesh":
        """Builds a mesh dropping degenerate triangles with a warning"""
        vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            # index errors are not repairable; let the constructor report them
            return cls(vertices, triangles)
        kept, dropped = drop_degenerate(vertices, triangles)
        notes: Tuple[str, ...] = ()
        if len(dropped):
            message = f"dropped {len(dropped)} degenerate triangle(s)"
            if source:
                message += f" from {source}"
            log.warning(message, extra={"fields": {"triangles": dropped[:10].tolist()}})
            notes = (message,)
        return cls(vertices, kept, notes)

    # ---------- basic properties ----------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.n_vertices == 0 or self.n_triangles == 0

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same topology, new positions (areas are not re-checked)"""
        return TriMesh(
            np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
            self.triangles.copy(),
            check_areas=False,
        )

    def transformed(self, rotation: np.ndarray, translation: np.ndarray, scale: float = 1.0) -> "TriMesh":
        """Applies x -> scale * R x + t to every vertex"""
        moved = scale * self.vertices @ np.asarray(rotation).T + np.asarray(translation)
        return self.with_vertices(moved)

    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    # ---------- connectivity ----------

    def _cached(self, key: str, build):
        """Memoises derived data; meshes are immutable so it never goes stale"""
        cache: Dict = self._cache  # type: ignore[attr-defined]
        if key not in cache:
            cache[key] = build()
        return cache[key]

    def edges(self) -> np.ndarray:
        """Unique undirected edges (k, 2), lower index first, sorted"""
        def build():
            t = self.triangles
            pairs = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            pairs.sort(axis=1)
            return np.unique(pairs, axis=0) if len(pairs) else np.zeros((0, 2), dtype=np.int64)
        return self._cached("edges", build)

    def edge_triangles(self) -> Dict[Tuple[int, int], List[int]]:
        """Map from undirected edge to the triangles containing it"""
        def build():
            table: Dict[Tuple[int, int], List[int]] = {}
            for index, (a, b, c) in enumerate(self.triangles.tolist()):
                for u, v in ((a, b), (b, c), (c, a)):
                    key = (u, v) if u < v else (v, u)
                    table.setdefault(key, []).append(index)
            return table
        return self._cached("edge_triangles", build)

    def vertex_triangles(self) -> List[List[int]]:
        """Triangles incident to each vertex"""
        def build():
            incident: List[List[int]] = [[] for _ in range(self.n_vertices)]
            for index, tri in enumerate(self.triangles.tolist()):
                for v in tri:
                    incident[v].append(index)
            return incident
        return self._cached("vertex_triangles", build)

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric binary vertex adjacency"""
        def build():
            e = self.edges()
            n = self.n_vertices
            data = np.ones(2 * len(e))
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._cached("adjacency", build)

    def boundary_edges(self) -> np.ndarray:
        """Edges used by exactly one triangle"""
        def build():
            table = self.edge_triangles()
            edges = sorted(key for key, tris in table.items() if len(tris) == 1)
            return np.array(edges, dtype=np.int64).reshape(-1, 2)
        return self._cached("boundary_edges", build)

    def boundary_vertices(self) -> np.ndarray:
        """Boolean mask of vertices on an open boundary"""
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_edges().ravel()] = True
        return mask

    def mean_edge_length(self) -> float:
        e = self.edges()
        if len(e) == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    def compacted(self) -> Tuple["TriMesh", np.ndarray]:
        """
        Drops vertices no triangle uses

        Returns:
            (new mesh, old index of every kept vertex)
        """
        used = np.unique(self.triangles)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        compact = TriMesh(self.vertices[used], remap[self.triangles], self.notes, self.check_areas)
        return compact, used

    def __repr__(self) -> str:
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles)"


def require_nonempty(mesh: Optional[TriMesh], what: str = "mesh") -> TriMesh:
    """Raises MeshError if the mesh has no triangles"""
    if mesh is None or mesh.is_empty():
        raise MeshError(f"Empty {what}")
    return mesh
