"""
Symmetry plane fitting and half-surface extraction

Halves are expressed in a frame where the symmetry plane is x = 0 and
the kept side has x >= 0. Left halves are mirrored (x -> -x, winding
reversed) so both sides of a head share one chirality and one template.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from scipy.spatial import cKDTree

from errors import GeometryError
from landmarks import LandmarkSet, strip_side_tag
from mesh_core.surface import AREA_EPSILON, TriMesh, require_nonempty, triangle_areas

log = logging.getLogger(__name__)

# Vertices within this distance of the plane count as lying on it
PLANE_EPSILON = 1e-12


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> float:
        return 1.0 if self is Side.RIGHT else -1.0


class RankError(GeometryError):
    """Too few or collinear points for a plane fit"""
    kind = "rank"


class EmptyResultError(GeometryError):
    """Nothing of the mesh lies on the requested side"""
    kind = "empty_result"


@dataclass(frozen=True)
class Plane:
    """Plane n . p = offset with unit normal n"""
    normal: Tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).ravel()
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise GeometryError("Plane normal must be a unit 3-vector", normal=n.tolist())
        object.__setattr__(self, "normal", tuple(n.tolist()))

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.n - self.offset

    def residual(self, points) -> float:
        """Sum of squared orthogonal distances"""
        return float(np.sum(self.signed_distance(points) ** 2))


def fit_symmetry_plane(midpoints) -> Plane:
    """
    Total-least-squares plane through the anatomical midpoints

    The normal is the eigenvector of the point covariance with the
    smallest eigenvalue, signed so its largest-magnitude entry is positive.

    Raises:
        RankError: fewer than 3 points, or all points collinear
    """
    pts = np.asarray(midpoints, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise RankError(f"Need at least 3 midpoints, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    eigenvalues, eigenvectors = np.linalg.eigh(centered.T @ centered)
    if eigenvalues[1] <= 1e-12 * max(eigenvalues[2], np.finfo(float).tiny):
        raise RankError("Midpoints are collinear", count=len(pts))
    normal = eigenvectors[:, 0]
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    return Plane(tuple(normal), float(normal @ centroid))


@dataclass(frozen=True)
class HalfFrame:
    """
    Rigid map into the half-surface frame (plane -> x = 0)

    to_frame(p) = R p - (offset, 0, 0), followed by x -> -x for mirrored
    (left) halves. R is a proper rotation whose first row is the normal.
    """
    rotation: np.ndarray
    offset: float
    mirrored: bool

    def to_frame(self, points) -> np.ndarray:
        q = np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.rotation.T
        q[:, 0] -= self.offset
        if self.mirrored:
            q[:, 0] = -q[:, 0]
        return q

    def to_world(self, points) -> np.ndarray:
        q = np.array(points, dtype=np.float64).reshape(-1, 3)
        if self.mirrored:
            q[:, 0] = -q[:, 0]
        q[:, 0] += self.offset
        return q @ self.rotation

    def mesh_to_world(self, mesh: TriMesh) -> TriMesh:
        tris = mesh.triangles[:, [0, 2, 1]] if self.mirrored else mesh.triangles
        return TriMesh(self.to_world(mesh.vertices), tris, check_areas=False)


def half_frame(plane: Plane, side: Side) -> HalfFrame:
    """Frame used by split_half for the given plane and side"""
    n = plane.n
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e2 = helper - (helper @ n) * n
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(n, e2)
    return HalfFrame(np.vstack([n, e2, e3]), plane.offset, side is Side.LEFT)


def mirror_mesh(mesh: TriMesh) -> TriMesh:
    """x -> -x with winding reversed"""
    vertices = mesh.vertices.copy()
    vertices[:, 0] = -vertices[:, 0]
    return TriMesh(vertices, mesh.triangles[:, [0, 2, 1]], check_areas=False)


def _clip(vertices: np.ndarray, triangles: np.ndarray, keep: np.ndarray,
          values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clips triangles against the half-space values >= 0

    Straddling triangles are cut by exact edge-plane intersection; cut
    points are shared between neighbouring triangles.
    """
    new_points: List[np.ndarray] = []
    cut_index: Dict[Tuple[int, int], int] = {}
    out: List[Tuple[int, int, int]] = []
    base = len(vertices)

    def cut(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in cut_index:
            p, q = vertices[key[0]], vertices[key[1]]
            t = values[key[0]] / (values[key[0]] - values[key[1]])
            point = p + t * (q - p)
            point[0] = 0.0
            cut_index[key] = base + len(new_points)
            new_points.append(point)
        return cut_index[key]

    for tri in triangles.tolist():
        inside = [bool(keep[v]) for v in tri]
        if all(inside):
            out.append(tuple(tri))
            continue
        if not any(inside):
            continue
        polygon = []
        for k in range(3):
            p, q = tri[k], tri[(k + 1) % 3]
            if keep[p]:
                polygon.append(p)
            if keep[p] != keep[q]:
                polygon.append(cut(p, q))
        for k in range(1, len(polygon) - 1):
            out.append((polygon[0], polygon[k], polygon[k + 1]))

    if new_points:
        vertices = np.vstack([vertices, np.array(new_points)])
    return vertices, np.array(out, dtype=np.int64).reshape(-1, 3)


def split_half(mesh: TriMesh, plane: Plane, side: Side,
               landmarks: LandmarkSet) -> Tuple[TriMesh, LandmarkSet]:
    """
    Extracts one half of a surface and its landmarks in the half frame

    Args:
        mesh: Whole surface
        plane: Symmetry plane from fit_symmetry_plane
        side: Side.RIGHT or Side.LEFT
        landmarks: Whole landmark set (midplane/lateral flags set)

    Returns:
        (half mesh, half landmark set); the boundary along the cut is
        left open, midplane landmarks are projected onto x = 0 and
        lateral ids lose their _L/_R side tag

    Raises:
        EmptyResultError: no triangle on the requested side
    """
    require_nonempty(mesh)
    side = Side(side)
    frame = half_frame(plane, side)
    unmirrored = HalfFrame(frame.rotation, frame.offset, False)

    vertices = unmirrored.to_frame(mesh.vertices)
    values = side.sign * vertices[:, 0]
    on_plane = np.abs(values) <= PLANE_EPSILON
    vertices[on_plane, 0] = 0.0
    keep = (values >= 0) | on_plane

    vertices, triangles = _clip(vertices, mesh.triangles, keep, np.where(on_plane, 0.0, values))
    if len(triangles):
        triangles = triangles[triangle_areas(vertices, triangles) >= AREA_EPSILON]
    if len(triangles) == 0:
        raise EmptyResultError(f"Mesh has no part on the {side.value} side of the plane")
    half, _ = TriMesh(vertices, triangles).compacted()
    if side is Side.LEFT:
        half = mirror_mesh(half)
    marks = _split_landmarks(landmarks, unmirrored, side)
    log.debug("split half", extra={"fields": {"side": side.value, "vertices": half.n_vertices,
                                              "triangles": half.n_triangles, "landmarks": len(marks)}})
    return half, marks


def _split_landmarks(landmarks: LandmarkSet, frame: HalfFrame, side: Side) -> LandmarkSet:
    positions = frame.to_frame(landmarks.positions())
    renamed: Dict[str, str] = {}
    points = []
    for point, position in zip(landmarks.points, positions):
        if point.midplane:
            position[0] = 0.0
            new_id = point.id
        elif side.sign * position[0] > 0:
            new_id = strip_side_tag(point.id)
        else:
            continue
        if side is Side.LEFT:
            position[0] = -position[0] + 0.0
        renamed[point.id] = new_id
        points.append(replace(point, id=new_id, position=tuple(position)))
    triangles = [tuple(renamed[pid] for pid in tri) for tri in landmarks.connectivity
                 if all(pid in renamed for pid in tri)]
    return LandmarkSet(points, triangles)


def merge_halves(right: TriMesh, left: TriMesh, tolerance: float = 1e-6) -> TriMesh:
    """
    Rebuilds a whole surface from two halves given in the half frame

    The second half is un-mirrored; vertices of both halves lying on
    x = 0 that coincide within tolerance are welded.
    """
    other = mirror_mesh(left)
    vertices = np.vstack([right.vertices, other.vertices])
    triangles = np.vstack([right.triangles, other.triangles + right.n_vertices])

    remap = np.arange(len(vertices))
    seam_right = np.flatnonzero(np.abs(right.vertices[:, 0]) <= tolerance)
    seam_left = np.flatnonzero(np.abs(other.vertices[:, 0]) <= tolerance)
    if len(seam_right) and len(seam_left):
        gaps, nearest = cKDTree(right.vertices[seam_right]).query(other.vertices[seam_left])
        close = gaps <= tolerance
        remap[right.n_vertices + seam_left[close]] = seam_right[nearest[close]]
    merged = TriMesh(vertices, remap[triangles], check_areas=False)
    return merged.compacted()[0]
