"""
CranioFace - Shape Tables
Coordinate layouts and the centred predictor/response tables

A skull entry is flattened landmark by landmark; midplane landmarks lie
on x = 0 in the half frame and contribute only (y, z). Face entries are
deformed reference meshes flattened vertex by vertex.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import FormatError, LayoutError, MissingFileError
from landmarks import LandmarkSet
from mesh_core import TriMesh

log = logging.getLogger(__name__)

# Largest |x| accepted for a midplane landmark (mm)
MIDPLANE_TOLERANCE = 1e-3
AXES = ("x", "y", "z")
LATERAL = ("x", "y", "z")
MIDPLANE = ("y", "z")


@dataclass(frozen=True)
class LayoutEntry:
    point_id: str
    components: Tuple[str, ...]

    @property
    def is_midplane(self) -> bool:
        return self.components == MIDPLANE


@dataclass
class CoordinateLayout:
    """Ordered (point id, components) list fixing the columns of a table"""
    entries: List[LayoutEntry]

    def __post_init__(self):
        self.entries = [e if isinstance(e, LayoutEntry) else LayoutEntry(e[0], tuple(e[1]))
                        for e in self.entries]
        for entry in self.entries:
            if entry.components not in (LATERAL, MIDPLANE):
                raise LayoutError(f"Unsupported components {entry.components}", id=entry.point_id)

    @classmethod
    def from_landmarks(cls, landmarks: LandmarkSet) -> "CoordinateLayout":
        return cls([LayoutEntry(p.id, MIDPLANE if p.midplane else LATERAL) for p in landmarks.points])

    @classmethod
    def for_mesh(cls, n_vertices: int) -> "CoordinateLayout":
        """Face layout: every vertex lateral, ids v0, v1, ..."""
        return cls([LayoutEntry(f"v{i}", LATERAL) for i in range(n_vertices)])

    @property
    def total_dim(self) -> int:
        return sum(len(e.components) for e in self.entries)

    @property
    def ids(self) -> List[str]:
        return [e.point_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def midplane_mask(self) -> np.ndarray:
        return np.array([e.is_midplane for e in self.entries], dtype=bool)

    def column_mask(self) -> np.ndarray:
        """Boolean mask over the (k, 3) position array selecting table columns"""
        mask = np.ones((len(self.entries), 3), dtype=bool)
        mask[self.midplane_mask(), 0] = False
        return mask

    def column_labels(self) -> List[str]:
        return [f"{e.point_id}.{axis}" for e in self.entries for axis in e.components]

    def to_dict(self) -> Dict:
        return {"entries": [{"id": e.point_id, "components": "".join(e.components)}
                            for e in self.entries]}

    @classmethod
    def from_dict(cls, data: Dict) -> "CoordinateLayout":
        try:
            return cls([LayoutEntry(str(e["id"]), tuple(e["components"])) for e in data["entries"]])
        except (KeyError, TypeError) as e:
            raise FormatError(f"Malformed layout record: {e}")


def coordinate_count(midplane: int, lateral: int) -> int:
    """3 * lateral + 2 * midplane"""
    if midplane < 0 or lateral < 0:
        raise LayoutError("Point counts must be non-negative")
    return 3 * lateral + 2 * midplane


def flatten(landmarks: LandmarkSet, layout: CoordinateLayout) -> np.ndarray:
    """
    Coordinate vector of a landmark set in layout order

    Raises:
        LayoutError: ids differ from the layout, or a midplane point is
            farther than MIDPLANE_TOLERANCE from x = 0
    """
    if landmarks.ids != layout.ids:
        mismatch = next((a for a, b in zip(landmarks.ids, layout.ids) if a != b),
                        None if len(landmarks) == len(layout) else "<count>")
        raise LayoutError("Landmark ids do not match the layout", id=mismatch,
                          expected=len(layout), got=len(landmarks))
    return flatten_positions(landmarks.positions(), layout)


def flatten_positions(positions, layout: CoordinateLayout) -> np.ndarray:
    """Coordinate vector of a (k, 3) position array in layout order"""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if len(positions) != len(layout):
        raise LayoutError(f"Expected {len(layout)} points, got {len(positions)}")
    midplane = layout.midplane_mask()
    off_plane = midplane & (np.abs(positions[:, 0]) > MIDPLANE_TOLERANCE)
    if np.any(off_plane):
        index = int(np.flatnonzero(off_plane)[0])
        raise LayoutError("Midplane point is off the symmetry plane",
                          id=layout.entries[index].point_id, x=float(positions[index, 0]))
    return positions[layout.column_mask()]


def unflatten(v, template, layout: CoordinateLayout) -> np.ndarray:
    """
    (k, 3) positions of centred vector v around template

    Midplane points get x = 0.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    template = np.asarray(template, dtype=np.float64).ravel()
    if v.shape != (layout.total_dim,) or template.shape != (layout.total_dim,):
        raise LayoutError(f"Vector dimension {v.size} / template {template.size} "
                          f"does not match layout dimension {layout.total_dim}")
    positions = np.zeros((len(layout), 3))
    positions[layout.column_mask()] = v + template
    return positions


@dataclass
class Prediction:
    """Predicted face: centred vector and 3D positions"""
    positions: np.ndarray
    centered: np.ndarray

    def to_mesh(self, triangles: np.ndarray) -> TriMesh:
        return TriMesh(self.positions, triangles, check_areas=False)


@dataclass
class ShapeTablePair:
    """Centred skull table X (n x p), face table Y (n x q) and their templates"""
    X: np.ndarray
    Y: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    skull_layout: CoordinateLayout
    face_layout: CoordinateLayout
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.X) != len(self.Y):
            raise LayoutError(f"X has {len(self.X)} rows but Y has {len(self.Y)}")
        if self.X.shape[1] != self.skull_layout.total_dim or self.Y.shape[1] != self.face_layout.total_dim:
            raise LayoutError("Table widths do not match their layouts")
        if not self.names:
            self.names = [f"entry{i:03d}" for i in range(len(self.X))]

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    def center_skull(self, landmarks: LandmarkSet) -> np.ndarray:
        return flatten(landmarks, self.skull_layout) - self.x_mean

    def face_prediction(self, centered) -> Prediction:
        centered = np.asarray(centered, dtype=np.float64).ravel()
        return Prediction(unflatten(centered, self.y_mean, self.face_layout), centered)


def assemble(entries: Sequence[Tuple[LandmarkSet, TriMesh]],
             names: Optional[Sequence[str]] = None) -> ShapeTablePair:
    """
    Centred tables from (skull landmarks, deformed reference face) entries

    Raises:
        LayoutError: fewer than 2 entries, or entries that do not share
            the skull template or the face topology
    """
    if len(entries) < 2:
        raise LayoutError(f"Need at least 2 entries, got {len(entries)}")
    first_marks, first_face = entries[0]
    skull_layout = CoordinateLayout.from_landmarks(first_marks)
    face_layout = CoordinateLayout.for_mesh(first_face.n_vertices)

    skulls, faces = [], []
    for index, (marks, face) in enumerate(entries):
        if not np.array_equal(marks.midplane_mask(), first_marks.midplane_mask()):
            raise LayoutError("Midplane flags differ from the first entry", entry=index)
        if face.n_vertices != first_face.n_vertices or not np.array_equal(face.triangles,
                                                                          first_face.triangles):
            raise LayoutError("Face topology differs from the first entry", entry=index)
        try:
            skulls.append(flatten(marks, skull_layout))
        except LayoutError as e:
            raise e.with_context(entry=index)
        faces.append(face.vertices.ravel())

    raw_x, raw_y = np.vstack(skulls), np.vstack(faces)
    x_mean, y_mean = raw_x.mean(axis=0), raw_y.mean(axis=0)
    log.debug("assembled tables", extra={"fields": {"n": len(entries), "p": raw_x.shape[1],
                                                    "q": raw_y.shape[1]}})
    return ShapeTablePair(raw_x - x_mean, raw_y - y_mean, x_mean, y_mean,
                          skull_layout, face_layout, list(names or []))


# ============== archive ==============

def save_tables(tables: ShapeTablePair, directory: str) -> None:
    """Writes layout.json, X.csv, Y.csv and templates.csv"""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "layout.json"), "w", encoding="utf-8") as f:
        json.dump({"skull": tables.skull_layout.to_dict(), "face": tables.face_layout.to_dict(),
                   "names": tables.names}, f, indent=2)
    pd.DataFrame(tables.X, index=tables.names, columns=tables.skull_layout.column_labels()) \
        .to_csv(os.path.join(directory, "X.csv"), float_format="%.17g", index_label="entry")
    pd.DataFrame(tables.Y, index=tables.names, columns=tables.face_layout.column_labels()) \
        .to_csv(os.path.join(directory, "Y.csv"), float_format="%.17g", index_label="entry")
    templates = pd.DataFrame({
        "table": ["skull"] * tables.p + ["face"] * tables.q,
        "label": tables.skull_layout.column_labels() + tables.face_layout.column_labels(),
        "value": np.concatenate([tables.x_mean, tables.y_mean]),
    })
    templates.to_csv(os.path.join(directory, "templates.csv"), float_format="%.17g", index=False)


def load_tables(directory: str) -> ShapeTablePair:
    """Reads a table archive written by save_tables"""
    paths = {name: os.path.join(directory, name)
             for name in ("layout.json", "X.csv", "Y.csv", "templates.csv")}
    for path in paths.values():
        if not os.path.exists(path):
            raise MissingFileError(f"Table archive file not found: {path}", path=path)
    try:
        with open(paths["layout.json"], "r", encoding="utf-8") as f:
            meta = json.load(f)
        skull_layout = CoordinateLayout.from_dict(meta["skull"])
        face_layout = CoordinateLayout.from_dict(meta["face"])
        x = pd.read_csv(paths["X.csv"], index_col="entry", float_precision="round_trip")
        y = pd.read_csv(paths["Y.csv"], index_col="entry", float_precision="round_trip")
        templates = pd.read_csv(paths["templates.csv"], float_precision="round_trip")
    except (ValueError, KeyError) as e:
        raise FormatError(f"Malformed table archive: {e}", path=directory)
    if list(x.columns) != skull_layout.column_labels() or list(y.columns) != face_layout.column_labels():
        raise LayoutError("Table headers do not match layout.json", path=directory)
    x_mean = templates.loc[templates["table"] == "skull", "value"].to_numpy(dtype=np.float64)
    y_mean = templates.loc[templates["table"] == "face", "value"].to_numpy(dtype=np.float64)
    return ShapeTablePair(x.to_numpy(dtype=np.float64), y.to_numpy(dtype=np.float64),
                          x_mean, y_mean, skull_layout, face_layout,
                          [str(name) for name in x.index])


if __name__ == "__main__":
    for mid, lat in ((13, 13), (23, 58), (47, 198)):
        print(f"🧮 {mid} midplane + {lat} lateral -> {coordinate_count(mid, lat)} coordinates")
