"""
CranioFace - Landmark Templates
Ordered landmark sets with midplane flags, generations and geodesic
connectivity, plus their JSON file formats

Landmark file:  [{"id": "nasion", "position": [x, y, z], "midplane": true}, ...]
Template file:  {"points": [... as above plus "generation"], "triangles": [[id, id, id], ...]}
"""

import json
import os
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from errors import FormatError, LayoutError, MissingFileError

# Trailing side tag on lateral landmark ids: "orbitale_L", "porion_r"
SIDE_TAG = re.compile(r"_(l|r|left|right)$", re.IGNORECASE)


class LandmarkFormatError(FormatError):
    """Landmark or template JSON that does not parse"""
    kind = "landmark_format"

    def __init__(self, message: str, line: Optional[int] = None, **context):
        if line is not None:
            context = {"line": line, **context}
        super().__init__(f"Landmark Format Error: {message}", **context)


@dataclass(frozen=True)
class LandmarkPoint:
    """One landmark: anatomical (generation 0) or geodesic midpoint"""
    id: str
    position: Tuple[float, float, float]
    midplane: bool = False
    generation: int = 0

    def __post_init__(self):
        position = tuple(float(v) for v in np.asarray(self.position, dtype=np.float64).ravel())
        if len(position) != 3 or not all(np.isfinite(position)):
            raise LandmarkFormatError(f"Landmark '{self.id}' needs a finite 3D position")
        if self.generation < 0:
            raise LandmarkFormatError(f"Landmark '{self.id}' has negative generation")
        object.__setattr__(self, "position", position)

    def moved(self, position) -> "LandmarkPoint":
        return replace(self, position=tuple(np.asarray(position, dtype=np.float64).ravel()))


@dataclass
class LandmarkSet:
    """
    Ordered landmark template

    The order of points is the order of coordinates in every data table,
    so it must be identical across individuals sharing a template.
    """
    points: List[LandmarkPoint]
    connectivity: List[Tuple[str, str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.points = list(self.points)
        self.connectivity = [tuple(tri) for tri in self.connectivity]
        seen = set()
        for point in self.points:
            if point.id in seen:
                raise LayoutError(f"Duplicate landmark id '{point.id}'", id=point.id)
            seen.add(point.id)
        for tri in self.connectivity:
            if len(tri) != 3:
                raise LayoutError(f"Connectivity entry {list(tri)} is not a triple")
            for pid in tri:
                if pid not in seen:
                    raise LayoutError(f"Connectivity references unknown id '{pid}'", id=pid)

    # ---------- queries ----------

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ids(self) -> List[str]:
        return [p.id for p in self.points]

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.points], dtype=np.float64).reshape(-1, 3)

    def midplane_mask(self) -> np.ndarray:
        return np.array([p.midplane for p in self.points], dtype=bool)

    def generations(self) -> np.ndarray:
        return np.array([p.generation for p in self.points], dtype=np.int64)

    def index(self) -> Dict[str, int]:
        return {p.id: i for i, p in enumerate(self.points)}

    def get(self, point_id: str) -> LandmarkPoint:
        for point in self.points:
            if point.id == point_id:
                return point
        raise LayoutError(f"Unknown landmark id '{point_id}'", id=point_id)

    def counts(self) -> Tuple[int, int]:
        """(midplane count, lateral count)"""
        mid = int(self.midplane_mask().sum())
        return mid, len(self.points) - mid

    def same_structure(self, other: "LandmarkSet") -> bool:
        return (self.ids == other.ids
                and np.array_equal(self.midplane_mask(), other.midplane_mask())
                and self.connectivity == other.connectivity)

    # ---------- derived sets ----------

    def with_positions(self, positions: np.ndarray) -> "LandmarkSet":
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if len(positions) != len(self.points):
            raise LayoutError(f"Expected {len(self.points)} positions, got {len(positions)}")
        return LandmarkSet([p.moved(x) for p, x in zip(self.points, positions)],
                           list(self.connectivity))

    def subset(self, ids: Iterable[str]) -> "LandmarkSet":
        """Points with the given ids (template order kept), connectivity restricted"""
        wanted = set(ids)
        points = [p for p in self.points if p.id in wanted]
        tris = [t for t in self.connectivity if all(pid in wanted for pid in t)]
        return LandmarkSet(points, tris)


def strip_side_tag(point_id: str) -> str:
    return SIDE_TAG.sub("", point_id)


# ============== JSON formats ==============

def _read_json(path: str):
    if not os.path.exists(path):
        raise MissingFileError(f"File not found: {path}", path=path)
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise LandmarkFormatError(e.msg, e.lineno, path=path)


def _point_from_record(record, index: int, path: str) -> LandmarkPoint:
    if not isinstance(record, dict) or "id" not in record or "position" not in record:
        raise LandmarkFormatError(f"Entry {index} needs 'id' and 'position'", path=path)
    try:
        return LandmarkPoint(
            id=str(record["id"]),
            position=tuple(float(v) for v in record["position"]),
            midplane=bool(record.get("midplane", False)),
            generation=int(record.get("generation", 0)),
        )
    except (TypeError, ValueError):
        raise LandmarkFormatError(f"Entry {index} ('{record.get('id')}') is malformed", path=path)


def _point_to_record(point: LandmarkPoint, with_generation: bool) -> dict:
    record = {"id": point.id, "position": [round(v, 10) for v in point.position],
              "midplane": point.midplane}
    if with_generation:
        record["generation"] = point.generation
    return record


def load_landmarks(path: str) -> LandmarkSet:
    """
    Reads a landmark file (JSON array) or a template file (JSON object)

    Raises:
        MissingFileError, LandmarkFormatError, LayoutError
    """
    data = _read_json(path)
    if isinstance(data, dict):
        return _template_from_data(data, path)
    if not isinstance(data, list):
        raise LandmarkFormatError("Landmark file must hold a JSON array", path=path)
    return LandmarkSet([_point_from_record(r, i, path) for i, r in enumerate(data)])


def load_template(path: str) -> LandmarkSet:
    """Reads a template file with points and id triangles"""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise LandmarkFormatError("Template file must hold a JSON object", path=path)
    return _template_from_data(data, path)


def _template_from_data(data: dict, path: str) -> LandmarkSet:
    if "points" not in data:
        raise LandmarkFormatError("Template needs a 'points' array", path=path)
    points = [_point_from_record(r, i, path) for i, r in enumerate(data["points"])]
    triangles = [tuple(str(pid) for pid in tri) for tri in data.get("triangles", [])]
    return LandmarkSet(points, triangles)


def save_landmarks(landmarks: LandmarkSet, path: str) -> None:
    """Writes the plain landmark array format"""
    _write_json(path, [_point_to_record(p, with_generation=False) for p in landmarks.points])


def save_template(landmarks: LandmarkSet, path: str) -> None:
    """Writes the template format (points with generation, triangles)"""
    _write_json(path, {
        "points": [_point_to_record(p, with_generation=True) for p in landmarks.points],
        "triangles": [list(t) for t in landmarks.connectivity],
    })


def _write_json(path: str, data) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
