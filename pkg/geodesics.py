"""
CranioFace - Geodesics
Fast marching distance fields, steepest-descent geodesic paths and
iterative midpoint densification of landmark templates

The marching front is a binary heap with lazy deletion. A vertex is
updated from a triangle whose two other corners are frozen by placing a
virtual source where circles of the frozen distances meet (exact on
planar patches); obtuse corners borrow frozen vertices from unfolded
neighbouring triangles.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from errors import GeometryError, LayoutError
from landmarks import LandmarkPoint, LandmarkSet
from mesh_core import TriMesh, require_nonempty, surface_index

log = logging.getLogger(__name__)

# Waypoints closer than this to the surface count as on it (mm)
SURFACE_EPSILON = 1e-6
# Barycentric weights below this are treated as zero
BARY_EPSILON = 1e-9
# Neighbouring triangles unfolded when a corner is obtuse
UNFOLD_DEPTH = 4
# Rings of exact straight-line seeds around a surface source point
SEED_RINGS = 2
# Largest normal deviation (degrees) a seeded vertex may have
SEED_MAX_BEND = 20.0


class GeodesicError(GeometryError):
    """Base for geodesic failures"""
    kind = "geodesic"


class SourceIndexError(GeodesicError):
    kind = "geodesic_source_index"


class ConnectivityError(GeodesicError):
    """Target not reachable from the source"""
    kind = "geodesic_connectivity"


class StagnationError(GeodesicError):
    """Steepest descent found no decreasing direction"""
    kind = "geodesic_stagnation"


class DegeneratePathError(GeodesicError):
    kind = "geodesic_degenerate_path"


@dataclass
class DistanceField:
    """
    Per-vertex geodesic distance from one source (mm)

    seed_triangles are the triangles in which the straight segment to
    the source lies on the surface; path backtracing stops there.
    """
    values: np.ndarray
    source_point: np.ndarray
    seed_triangles: Tuple[int, ...]
    source_vertex: Optional[int] = None

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __getitem__(self, index):
        return self.values[index]

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class GeodesicPath:
    """Polyline on the surface, ordered from source to target"""
    waypoints: np.ndarray
    length: float
    endpoints: Tuple[str, str] = ("", "")

    @classmethod
    def from_waypoints(cls, waypoints, endpoints: Tuple[str, str] = ("", "")) -> "GeodesicPath":
        points = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
        length = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum()) if len(points) > 1 else 0.0
        return cls(points, length, tuple(endpoints))


# ============== fast marching ==============

def _dist(p: Sequence[float], q: Sequence[float]) -> float:
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2)


def _dot(p, q) -> float:
    return p[0] * q[0] + p[1] * q[1] + p[2] * q[2]


def _sub(p, q) -> Tuple[float, float, float]:
    return (p[0] - q[0], p[1] - q[1], p[2] - q[2])


def _virtual_source(c2, a2, da: float, b2, db: float) -> Optional[float]:
    """
    Distance at c2 from the point source consistent with da at a2 and db at b2

    All points are 2D. The source is taken on the far side of a2-b2 from
    c2 and must see c2 through the segment a2-b2; otherwise None.
    """
    ex, ey = b2[0] - a2[0], b2[1] - a2[1]
    length = math.hypot(ex, ey)
    if length <= 0.0:
        return None
    ex, ey = ex / length, ey / length
    nx, ny = -ey, ex
    cx, cy = c2[0] - a2[0], c2[1] - a2[1]
    xc, yc = cx * ex + cy * ey, cx * nx + cy * ny
    if yc < 0:
        nx, ny, yc = -nx, -ny, -yc
    if yc <= 0.0:
        return None

    xs = (da * da - db * db + length * length) / (2.0 * length)
    h2 = da * da - xs * xs
    if h2 < -1e-12 * length * length:
        return None
    h = math.sqrt(max(h2, 0.0))
    # crossing of the source-to-c line with the a-b line
    tau = h / (yc + h)
    crossing = xs + tau * (xc - xs)
    if crossing < -1e-12 * length or crossing > length * (1.0 + 1e-12):
        return None
    return math.hypot(xc - xs, yc + h)


class FastMarcher:
    """
    One fast marching run over a mesh

    Vertices move FAR -> TRIAL (in the heap) -> ALIVE. Seed vertices are
    fixed at their initial values.
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = require_nonempty(mesh)
        self.points = mesh.vertices.tolist()
        self.triangles = mesh.triangles.tolist()
        self.incident = mesh.vertex_triangles()
        self.edge_triangles = mesh.edge_triangles()

    def run(self, seeds: Dict[int, float]) -> np.ndarray:
        n = len(self.points)
        self.dist = [math.inf] * n
        self.alive = [False] * n
        fixed = [False] * n
        heap: List[Tuple[float, int]] = []
        for vertex, value in sorted(seeds.items()):
            self.dist[vertex] = value
            fixed[vertex] = True
            heapq.heappush(heap, (value, vertex))

        while heap:
            value, u = heapq.heappop(heap)
            if self.alive[u] or value > self.dist[u]:
                continue
            self.alive[u] = True
            for t in self.incident[u]:
                tri = self.triangles[t]
                for v in tri:
                    if v == u or self.alive[v] or fixed[v]:
                        continue
                    w = tri[3 - tri.index(u) - tri.index(v)]
                    candidate = self.dist[u] + _dist(self.points[u], self.points[v])
                    if self.alive[w]:
                        solved = self._triangle_update(v, u, w, t)
                        if solved is not None and solved < candidate:
                            candidate = solved
                    if candidate < self.dist[v]:
                        self.dist[v] = candidate
                        heapq.heappush(heap, (candidate, v))
        return np.array(self.dist)

    def _triangle_update(self, c: int, a: int, b: int, t: int) -> Optional[float]:
        pa, pb, pc = self.points[a], self.points[b], self.points[c]
        ab = _sub(pb, pa)
        length = math.sqrt(_dot(ab, ab))
        ac = _sub(pc, pa)
        xc = _dot(ac, ab) / length
        yc = math.sqrt(max(_dot(ac, ac) - xc * xc, 0.0))
        c2, a2, b2 = (xc, yc), (0.0, 0.0), (length, 0.0)

        value = _virtual_source(c2, a2, self.dist[a], b2, self.dist[b])
        if value is None and _dot(_sub(pa, pc), _sub(pb, pc)) < 0:
            value = self._unfolded(c2, a, a2, b, b2, t, UNFOLD_DEPTH)
        if value is None:
            return None
        return max(value, self.dist[a], self.dist[b])

    def _unfolded(self, c2, a: int, a2, b: int, b2, t: int, depth: int) -> Optional[float]:
        """Splits the update of an obtuse corner across unfolded neighbours"""
        if depth == 0:
            return None
        key = (a, b) if a < b else (b, a)
        others = [s for s in self.edge_triangles.get(key, []) if s != t]
        if not others:
            return None
        s = others[0]
        tri = self.triangles[s]
        d = tri[3 - tri.index(a) - tri.index(b)]
        d2 = self._place_across(c2, a, a2, b, b2, d)

        results = []
        for (p, p2), (q, q2) in (((a, a2), (d, d2)), ((d, d2), (b, b2))):
            value = None
            if self.alive[p] and self.alive[q]:
                value = _virtual_source(c2, p2, self.dist[p], q2, self.dist[q])
            if value is None:
                value = self._unfolded(c2, p, p2, q, q2, s, depth - 1)
            if value is not None:
                results.append(value)
        return min(results) if results else None

    def _place_across(self, c2, a: int, a2, b: int, b2, d: int) -> Tuple[float, float]:
        """2D position of vertex d unfolded across a2-b2, away from c2"""
        pa, pb, pd = self.points[a], self.points[b], self.points[d]
        ab = _sub(pb, pa)
        length = math.sqrt(_dot(ab, ab))
        ad = _sub(pd, pa)
        xd = _dot(ad, ab) / length
        yd = math.sqrt(max(_dot(ad, ad) - xd * xd, 0.0))

        ex, ey = (b2[0] - a2[0]) / length, (b2[1] - a2[1]) / length
        nx, ny = -ey, ex
        if (c2[0] - a2[0]) * nx + (c2[1] - a2[1]) * ny < 0:
            nx, ny = -nx, -ny
        return (a2[0] + xd * ex - yd * nx, a2[1] + xd * ey - yd * ny)


def fast_marching_field(mesh: TriMesh, source: int) -> DistanceField:
    """
    Geodesic distance from one vertex to every vertex

    Args:
        mesh: Triangle mesh (mm)
        source: Source vertex index

    Returns:
        DistanceField: 0 at the source, infinite where unreachable

    Raises:
        SourceIndexError: source out of range
    """
    require_nonempty(mesh)
    if not 0 <= int(source) < mesh.n_vertices:
        raise SourceIndexError(f"Source vertex {source} out of range", vertices=mesh.n_vertices)
    source = int(source)
    values = FastMarcher(mesh).run({source: 0.0})
    return DistanceField(values, mesh.vertices[source].copy(),
                         tuple(mesh.vertex_triangles()[source]), source)


def _flat_patch(mesh: TriMesh, t: int, rings: int) -> List[int]:
    """
    Vertices within `rings` edge hops of triangle t on a near-flat patch

    A vertex joins only if every incident triangle's normal stays within
    SEED_MAX_BEND degrees of triangle t's normal.
    """
    corners = mesh.vertices[mesh.triangles]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-300)
    limit = math.cos(math.radians(SEED_MAX_BEND))
    incident = mesh.vertex_triangles()
    adjacency = mesh.adjacency()

    def flat(v: int) -> bool:
        return bool(np.all(np.abs(normals[incident[v]] @ normals[t]) >= limit))

    patch = [int(v) for v in mesh.triangles[t]]
    seen, frontier = set(patch), patch
    for _ in range(rings):
        grown = []
        for u in frontier:
            for v in adjacency[u].indices.tolist():
                if v not in seen and flat(v):
                    seen.add(v)
                    grown.append(v)
        patch += grown
        frontier = grown
    return patch


def fast_marching_from_point(mesh: TriMesh, point) -> DistanceField:
    """
    Geodesic distance from an arbitrary surface point

    The point is projected onto the surface. Vertices of its triangle and
    of the flat patch SEED_RINGS hops around it start with their exact
    straight-line distances.
    """
    require_nonempty(mesh)
    _, closest, owners = surface_index(mesh).query(np.asarray(point, dtype=np.float64).reshape(1, 3))
    q, t = closest[0], int(owners[0])
    patch = _flat_patch(mesh, t, SEED_RINGS)
    seeds = {v: float(np.linalg.norm(mesh.vertices[v] - q)) for v in patch}
    values = FastMarcher(mesh).run(seeds)
    log.debug("point field", extra={"fields": {"triangle": t, "seeds": len(seeds)}})
    return DistanceField(values, q, (t,))


# ============== path backtracing ==============

def _barycentric(corners: np.ndarray, q: np.ndarray) -> np.ndarray:
    e1, e2 = corners[1] - corners[0], corners[2] - corners[0]
    gram = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    rhs = np.array([(q - corners[0]) @ e1, (q - corners[0]) @ e2])
    u, v = np.linalg.solve(gram, rhs)
    bary = np.clip(np.array([1.0 - u - v, u, v]), 0.0, None)
    bary[bary < BARY_EPSILON] = 0.0
    return bary / bary.sum()


class _Walker:
    """Steepest descent of a piecewise-linear field across triangles"""

    def __init__(self, mesh: TriMesh, field: DistanceField):
        self.mesh = mesh
        self.values = np.asarray(field.values, dtype=np.float64)
        self.seeds = set(field.seed_triangles)
        self.seed_vertices = {int(v) for t in field.seed_triangles for v in mesh.triangles[t]}
        self.incident = mesh.vertex_triangles()
        self.edge_triangles = mesh.edge_triangles()

    # a location is {vertex: weight} with 1-3 entries summing to one

    def point(self, location: Dict[int, float]) -> np.ndarray:
        return sum(w * self.mesh.vertices[v] for v, w in location.items())

    def value(self, location: Dict[int, float]) -> float:
        return float(sum(w * self.values[v] for v, w in location.items()))

    def candidates(self, location: Dict[int, float]) -> List[int]:
        keys = sorted(location)
        if len(keys) == 1:
            return sorted(self.incident[keys[0]])
        if len(keys) == 2:
            return sorted(self.edge_triangles.get((keys[0], keys[1]), []))
        tri = set(keys)
        return [t for t in self.incident[keys[0]] if set(self.mesh.triangles[t].tolist()) == tri]

    def touches_seed(self, location: Dict[int, float]) -> bool:
        return any(t in self.seeds for t in self.candidates(location))

    def descend(self, location: Dict[int, float]) -> Optional[Dict[int, float]]:
        """Exit location of the steepest triangle step, or None"""
        here = self.value(location)
        best, best_rate = None, 0.0
        for t in self.candidates(location):
            tri = self.mesh.triangles[t]
            f = self.values[tri]
            if not np.all(np.isfinite(f)):
                continue
            corners = self.mesh.vertices[tri]
            e1, e2 = corners[1] - corners[0], corners[2] - corners[0]
            gram = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
            coef = np.linalg.solve(gram, np.array([f[1] - f[0], f[2] - f[0]]))
            direction = -(coef[0] * e1 + coef[1] * e2)
            rate = float(np.linalg.norm(direction))
            if rate <= 1e-12:
                continue
            db12 = np.linalg.solve(gram, np.array([direction @ e1, direction @ e2]))
            db = np.array([-db12.sum(), db12[0], db12[1]])
            bary = np.array([location.get(int(v), 0.0) for v in tri])

            leaving = db < -1e-12 * rate
            if np.any(leaving & (bary <= BARY_EPSILON)):
                continue
            if not np.any(leaving):
                continue
            step = float(np.min(bary[leaving] / -db[leaving]))
            if step <= 1e-12:
                continue
            exit_bary = np.clip(bary + step * db, 0.0, None)
            exit_bary[exit_bary < BARY_EPSILON] = 0.0
            exit_bary /= exit_bary.sum()
            exit_location = {int(v): float(w) for v, w in zip(tri, exit_bary) if w > 0.0}
            if self.value(exit_location) >= here - 1e-12:
                continue
            if rate > best_rate:
                best, best_rate = exit_location, rate
        return best

    def slide(self, location: Dict[int, float]) -> Optional[Dict[int, float]]:
        """Edge-following fallback: move to the lowest lower vertex"""
        here = self.value(location)
        if len(location) == 1:
            (v,) = location
            options = self.mesh.adjacency()[v].indices
        else:
            options = np.array(sorted(location))
        if len(options) == 0:
            return None
        lowest = int(options[np.argmin(self.values[options])])
        if self.values[lowest] < here - 1e-12:
            return {lowest: 1.0}
        return None


def geodesic_path(mesh: TriMesh, field: DistanceField, target,
                  endpoints: Tuple[str, str] = ("", "")) -> GeodesicPath:
    """
    Backtraces a geodesic from target to the field's source

    Args:
        mesh: Mesh the field was computed on
        field: DistanceField from fast_marching_field / fast_marching_from_point
        target: 3D point (projected onto the surface)
        endpoints: Landmark ids (source, target) kept on the path

    Returns:
        GeodesicPath ordered from source to target

    Raises:
        ConnectivityError: target not reachable
        StagnationError: no decreasing direction (location attached)
    """
    require_nonempty(mesh)
    _, closest, owners = surface_index(mesh).query(np.asarray(target, dtype=np.float64).reshape(1, 3))
    q, t = closest[0], int(owners[0])
    tri = mesh.triangles[t]
    if not np.all(np.isfinite(field.values[tri])):
        raise ConnectivityError("Target is not reachable from the source",
                                triangle=t, target=q.tolist())
    if np.linalg.norm(q - field.source_point) <= SURFACE_EPSILON:
        return GeodesicPath.from_waypoints([q], endpoints)

    walker = _Walker(mesh, field)
    bary = _barycentric(mesh.vertices[tri], q)
    location = {int(v): float(w) for v, w in zip(tri, bary) if w > 0.0}
    waypoints = [q]
    max_steps = 4 * mesh.n_triangles + 100
    for _ in range(max_steps):
        if walker.touches_seed(location):
            break
        following = walker.descend(location) or walker.slide(location)
        if following is None:
            raise StagnationError("Steepest descent stagnated",
                                  point=walker.point(location).tolist(),
                                  vertices=sorted(location), value=walker.value(location))
        location = following
        waypoints.append(walker.point(location))
    else:
        raise StagnationError("Steepest descent did not reach the source",
                              point=walker.point(location).tolist(), steps=max_steps)

    if np.linalg.norm(waypoints[-1] - field.source_point) > 0.0:
        waypoints.append(field.source_point.copy())
    return GeodesicPath.from_waypoints(waypoints[::-1], endpoints)


def geodesic_midpoint(path: GeodesicPath) -> np.ndarray:
    """
    Point at half the arc length of the waypoint polyline

    Raises:
        DegeneratePathError: zero-length path
    """
    if path.length <= 0.0 or len(path.waypoints) < 2:
        raise DegeneratePathError("Cannot take the midpoint of a zero-length path",
                                  endpoints=list(path.endpoints))
    segments = np.linalg.norm(np.diff(path.waypoints, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(segments)])
    half = cumulative[-1] / 2.0
    i = int(np.clip(np.searchsorted(cumulative, half, side="left"), 1, len(segments)))
    while segments[i - 1] <= 0.0 and i > 1:
        i -= 1
    fraction = (half - cumulative[i - 1]) / segments[i - 1] if segments[i - 1] > 0 else 0.0
    fraction = min(max(fraction, 0.0), 1.0)
    return path.waypoints[i - 1] + fraction * (path.waypoints[i] - path.waypoints[i - 1])


# ============== densification ==============

@dataclass
class DensifyParams:
    """Thresholds of the midpoint densification"""
    degenerate_length: float = 0.5
    degenerate_edge_factor: float = 2.0
    midplane_tolerance: float = 1e-3


@dataclass
class EdgeGeodesic:
    """Geodesic of one template edge on one individual"""
    edge: Tuple[str, str]
    path: Optional[GeodesicPath]
    degenerate: bool
    midplane_contained: bool = False


def template_edges(connectivity: Sequence[Tuple[str, str, str]]) -> List[Tuple[str, str]]:
    """Unique undirected edges, ids sorted, in order of first appearance"""
    seen, edges = set(), []
    for a, b, c in connectivity:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            if key not in seen:
                seen.add(key)
                edges.append(key)
    return edges


def midpoint_id(generation: int, edge: Tuple[str, str]) -> str:
    a, b = sorted(edge)
    return f"m{generation}:{a}+{b}"


def trace_edges(mesh: TriMesh, landmarks: LandmarkSet, edges: List[Tuple[str, str]],
                params: DensifyParams) -> List[EdgeGeodesic]:
    """
    Geodesics of the given template edges on one individual

    One distance field is computed per source landmark and shared by all
    edges leaving it.
    """
    require_nonempty(mesh)
    min_gap = params.degenerate_edge_factor * mesh.mean_edge_length()
    fields: Dict[str, DistanceField] = {}
    traced = []
    for a, b in edges:
        pa = np.array(landmarks.get(a).position)
        pb = np.array(landmarks.get(b).position)
        try:
            if a not in fields:
                fields[a] = fast_marching_from_point(mesh, pa)
            path = geodesic_path(mesh, fields[a], pb, endpoints=(a, b))
        except GeodesicError as e:
            raise e.with_context(edge=f"{a}-{b}")
        degenerate = path.length < params.degenerate_length or np.linalg.norm(pa - pb) < min_gap
        contained = bool(np.all(np.abs(path.waypoints[:, 0]) <= params.midplane_tolerance))
        traced.append(EdgeGeodesic((a, b), path, degenerate, contained))
    return traced


@dataclass
class DensifyResult:
    """Densified templates plus the edges skipped at every generation"""
    landmark_sets: List[LandmarkSet]
    skipped_edges: List[Tuple[int, str, str]] = field(default_factory=list)


def densify_population(meshes: Sequence[TriMesh], landmark_sets: Sequence[LandmarkSet],
                       iterations: int, params: Optional[DensifyParams] = None,
                       jobs: int = 1) -> DensifyResult:
    """
    Densifies several individuals sharing one template

    An edge that degenerates on any individual is skipped on all, so the
    output id sequences stay identical.

    Args:
        meshes: One surface per individual
        landmark_sets: Generation-0 landmarks with shared ids and connectivity
        iterations: Number of midpoint generations (>= 0)
        params: Degeneracy and midplane thresholds
        jobs: Parallel workers over individuals

    Raises:
        LayoutError: templates differ between individuals
        GeodesicError: geodesic failure, with the edge attached
    """
    params = params or DensifyParams()
    if iterations < 0:
        raise GeometryError("iterations must be >= 0", iterations=iterations)
    if len(meshes) != len(landmark_sets) or not meshes:
        raise LayoutError("Need one landmark set per mesh")
    current = list(landmark_sets)
    for other in current[1:]:
        if not other.same_structure(current[0]):
            raise LayoutError("Individuals do not share one landmark template")
    skipped_all: List[Tuple[int, str, str]] = []

    for generation in range(1, iterations + 1):
        edges = template_edges(current[0].connectivity)
        traced = Parallel(n_jobs=jobs)(
            delayed(trace_edges)(mesh, marks, edges, params) for mesh, marks in zip(meshes, current)
        )
        skipped = {e.edge for per_individual in traced for e in per_individual if e.degenerate}
        midplane = {}
        template = current[0]
        for index, edge in enumerate(edges):
            both = template.get(edge[0]).midplane and template.get(edge[1]).midplane
            midplane[edge] = both and all(t[index].midplane_contained for t in traced)

        for edge in edges:
            if edge in skipped:
                skipped_all.append((generation, edge[0], edge[1]))
        if skipped:
            log.warning("skipped degenerate geodesic edges", extra={"fields": {
                "generation": generation, "count": len(skipped)}})

        current = [
            _subdivide(marks, edges, per_individual, skipped, midplane, generation)
            for marks, per_individual in zip(current, traced)
        ]
        log.info("densified", extra={"fields": {"generation": generation,
                                                "points": len(current[0]),
                                                "triangles": len(current[0].connectivity)}})
    return DensifyResult(current, skipped_all)


def _subdivide(marks: LandmarkSet, edges, traced: List[EdgeGeodesic], skipped, midplane,
               generation: int) -> LandmarkSet:
    points = list(marks.points)
    new_ids: Dict[Tuple[str, str], str] = {}
    for edge, geodesic in zip(edges, traced):
        if edge in skipped:
            continue
        position = geodesic_midpoint(geodesic.path)
        if midplane[edge]:
            position[0] = 0.0
        new_ids[edge] = midpoint_id(generation, edge)
        points.append(LandmarkPoint(new_ids[edge], tuple(position), midplane[edge], generation))

    def mid(u: str, v: str) -> Optional[str]:
        return new_ids.get((u, v) if u < v else (v, u))

    triangles = []
    for a, b, c in marks.connectivity:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        if ab is None or bc is None or ca is None:
            triangles.append((a, b, c))
            continue
        triangles += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return LandmarkSet(points, triangles)


def densify(mesh: TriMesh, landmarks: LandmarkSet, iterations: int,
            params: Optional[DensifyParams] = None) -> LandmarkSet:
    """
    Iterative geodesic midpoint densification of one individual

    Each generation inserts the geodesic midpoint of every template edge
    and replaces each triangle by its 1-to-4 subdivision; triangles with a
    degenerate edge are kept whole.
    """
    return densify_population([mesh], [landmarks], iterations, params).landmark_sets[0]


if __name__ == "__main__":
    from mesh_core import grid_mesh, icosphere

    grid = grid_mesh(21, 21)
    field_ = fast_marching_field(grid, 0)
    print(f"📐 grid corner-to-corner: {field_[len(field_) - 1]:.4f} (exact {20 * math.sqrt(2):.4f})")
    sphere = icosphere(4)
    print(f"🌐 sphere antipodal: {fast_marching_field(sphere, 0)[3]:.4f} (exact {math.pi:.4f})")
    path = geodesic_path(grid, field_, grid.vertices[-1])
    print(f"🧭 path: {len(path.waypoints)} waypoints, length {path.length:.4f}")
