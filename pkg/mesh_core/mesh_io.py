"""
Mesh I/O - OBJ and PLY readers and writers
Turns mesh files into record streams and records into TriMesh objects

OBJ: only `v x y z` and `f i j k ...` records are honoured (1-based,
`i/t/n` forms accepted, polygons fan-triangulated); everything else is
skipped. PLY: ASCII or binary little-endian, `vertex` element with
float/double x, y, z and a `face` element with a list property.
"""

import logging
import os
from dataclasses import dataclass
from enum import Enum, auto
from typing import List, Optional, Tuple

import numpy as np

from errors import FormatError, MissingFileError
from mesh_core.surface import TriMesh

log = logging.getLogger(__name__)


class MeshFormat(Enum):
    OBJ = auto()
    PLY = auto()

    @classmethod
    def from_path(cls, path: str) -> "MeshFormat":
        ext = os.path.splitext(path)[1].lower()
        if ext == ".obj":
            return cls.OBJ
        if ext == ".ply":
            return cls.PLY
        raise MeshFormatError(f"Cannot infer mesh format from extension '{ext}'", path=path)


class RecordType(Enum):
    """Record kinds that matter for geometry"""
    VERTEX = auto()
    FACE = auto()


@dataclass
class Record:
    """One geometric record read from a mesh file"""
    type: RecordType
    values: Tuple
    line: int

    def __str__(self):
        return f"{self.type.name}{self.values} at line {self.line}"


class MeshFormatError(FormatError):
    """Mesh file parse failure"""
    kind = "mesh_format"

    def __init__(self, message: str, line: Optional[int] = None, **context):
        self.line = line
        if line is not None:
            context = {"line": line, **context}
        super().__init__(f"Mesh Format Error: {message}", **context)


class MeshIndexError(MeshFormatError):
    """Face record pointing past the vertex list"""
    kind = "mesh_index"


# ============== OBJ ==============

class ObjReader:
    """
    Reader for Wavefront OBJ text

    Produces VERTEX and FACE records, keeping the source line number of
    each so later errors can point at the file.
    """

    def __init__(self, source: str):
        self.source = source
        self.records: List[Record] = []

    def read_records(self) -> List[Record]:
        """
        Scans the text into records

        Returns:
            List[Record]: vertex and face records in file order

        Raises:
            MeshFormatError: On malformed v/f records
        """
        self.records = []
        for number, raw in enumerate(self.source.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, *fields = line.split()
            if head == "v":
                self.records.append(Record(RecordType.VERTEX, self._vertex(fields, number), number))
            elif head == "f":
                self.records.append(Record(RecordType.FACE, self._face(fields, number), number))
        return self.records

    @staticmethod
    def _vertex(fields: List[str], line: int) -> Tuple[float, float, float]:
        if len(fields) < 3:
            raise MeshFormatError(f"Vertex record needs 3 coordinates, got {len(fields)}", line)
        try:
            return float(fields[0]), float(fields[1]), float(fields[2])
        except ValueError:
            raise MeshFormatError(f"Invalid vertex coordinate in '{' '.join(fields[:3])}'", line)

    @staticmethod
    def _face(fields: List[str], line: int) -> Tuple[int, ...]:
        if len(fields) < 3:
            raise MeshFormatError(f"Face record needs at least 3 vertices, got {len(fields)}", line)
        indices = []
        for field in fields:
            try:
                indices.append(int(field.split("/", 1)[0]))
            except ValueError:
                raise MeshFormatError(f"Invalid face index '{field}'", line)
        return tuple(indices)

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Resolves records into vertex and triangle arrays (0-based)"""
        vertices = [r.values for r in self.records if r.type is RecordType.VERTEX]
        count = 0
        triangles = []
        for record in self.records:
            if record.type is RecordType.VERTEX:
                count += 1
                continue
            resolved = []
            for index in record.values:
                # negative indices count back from the last vertex read so far
                zero_based = index - 1 if index > 0 else count + index
                if index == 0 or zero_based < 0 or zero_based >= len(vertices):
                    raise MeshIndexError(
                        f"Face references vertex {index} of {len(vertices)}", record.line
                    )
                resolved.append(zero_based)
            for k in range(1, len(resolved) - 1):
                triangles.append((resolved[0], resolved[k], resolved[k + 1]))
        return (np.array(vertices, dtype=np.float64).reshape(-1, 3),
                np.array(triangles, dtype=np.int64).reshape(-1, 3))


# ============== PLY ==============

_PLY_SCALARS = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass
class PlyProperty:
    name: str
    dtype: str
    count_dtype: Optional[str] = None  # set for list properties


@dataclass
class PlyElement:
    name: str
    count: int
    properties: List[PlyProperty]


class PlyReader:
    """Reader for ASCII and binary little-endian PLY"""

    def __init__(self, data: bytes):
        self.data = data
        self.elements: List[PlyElement] = []
        self.binary = False
        self.body_offset = 0
        self.header_lines = 0

    def read_header(self) -> None:
        end = self.data.find(b"end_header")
        if not self.data.startswith(b"ply") or end < 0:
            raise MeshFormatError("Missing 'ply' magic or 'end_header'", 1)
        newline = self.data.find(b"\n", end)
        self.body_offset = len(self.data) if newline < 0 else newline + 1
        lines = self.data[:end].decode("ascii", errors="replace").splitlines()
        self.header_lines = len(lines) + 1
        for number, raw in enumerate(lines, start=1):
            fields = raw.split()
            if not fields or fields[0] in ("ply", "comment", "obj_info"):
                continue
            if fields[0] == "format":
                if len(fields) < 2 or fields[1] not in ("ascii", "binary_little_endian"):
                    raise MeshFormatError(f"Unsupported PLY format '{' '.join(fields[1:])}'", number)
                self.binary = fields[1] == "binary_little_endian"
            elif fields[0] == "element":
                if len(fields) != 3 or not fields[2].isdigit():
                    raise MeshFormatError(f"Malformed element line '{raw.strip()}'", number)
                self.elements.append(PlyElement(fields[1], int(fields[2]), []))
            elif fields[0] == "property":
                if not self.elements:
                    raise MeshFormatError("Property before any element", number)
                self.elements[-1].properties.append(self._property(fields, number))
            else:
                raise MeshFormatError(f"Unknown header keyword '{fields[0]}'", number)

    @staticmethod
    def _property(fields: List[str], line: int) -> PlyProperty:
        try:
            if fields[1] == "list":
                return PlyProperty(fields[4], _PLY_SCALARS[fields[3]], _PLY_SCALARS[fields[2]])
            return PlyProperty(fields[2], _PLY_SCALARS[fields[1]])
        except (IndexError, KeyError):
            raise MeshFormatError(f"Malformed property line '{' '.join(fields)}'", line)

    def to_arrays(self) -> Tuple[np.ndarray, np.ndarray, dict]:
        """
        Parses the body

        Returns:
            (vertices, triangles, extra per-vertex scalar properties)
        """
        self.read_header()
        vertices = np.zeros((0, 3))
        triangles = np.zeros((0, 3), dtype=np.int64)
        extras: dict = {}
        if self.binary:
            cursor = self.body_offset
            for element in self.elements:
                table, cursor = self._binary_element(element, cursor)
                vertices, triangles = self._collect(element, table, vertices, triangles, extras)
        else:
            text = self.data[self.body_offset:].decode("ascii", errors="replace").splitlines()
            position = 0
            for element in self.elements:
                table, position = self._ascii_element(element, text, position)
                vertices, triangles = self._collect(element, table, vertices, triangles, extras)
        return vertices, triangles, extras

    def _collect(self, element, table, vertices, triangles, extras):
        if element.name == "vertex":
            names = [p.name for p in element.properties]
            for axis in "xyz":
                if axis not in names:
                    raise MeshFormatError(f"Vertex element lacks property '{axis}'")
            vertices = np.column_stack([table[a] for a in "xyz"]).astype(np.float64)
            for p in element.properties:
                if p.count_dtype is None and p.name not in ("x", "y", "z"):
                    extras[p.name] = np.asarray(table[p.name], dtype=np.float64)
        elif element.name == "face":
            lists = [p for p in element.properties if p.count_dtype is not None]
            if not lists:
                raise MeshFormatError("Face element has no list property")
            polys = table[lists[0].name]
            tris = []
            for face_index, poly in enumerate(polys):
                if len(poly) < 3:
                    raise MeshFormatError(f"Face {face_index} has {len(poly)} vertices")
                for k in range(1, len(poly) - 1):
                    tris.append((poly[0], poly[k], poly[k + 1]))
            triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
        return vertices, triangles

    def _ascii_element(self, element: PlyElement, text: List[str], position: int):
        columns = {p.name: [] for p in element.properties}
        for _ in range(element.count):
            while position < len(text) and not text[position].strip():
                position += 1
            line_number = self.header_lines + position + 1
            if position >= len(text):
                raise MeshFormatError(f"Unexpected end of file in element '{element.name}'", line_number)
            fields = text[position].split()
            position += 1
            cursor = 0
            try:
                for prop in element.properties:
                    if prop.count_dtype is None:
                        columns[prop.name].append(float(fields[cursor]))
                        cursor += 1
                    else:
                        n = int(fields[cursor])
                        columns[prop.name].append([int(v) for v in fields[cursor + 1:cursor + 1 + n]])
                        if len(columns[prop.name][-1]) != n:
                            raise IndexError
                        cursor += 1 + n
            except (IndexError, ValueError):
                raise MeshFormatError(f"Malformed '{element.name}' row", line_number)
        return columns, position

    def _binary_element(self, element: PlyElement, cursor: int):
        if all(p.count_dtype is None for p in element.properties):
            dtype = np.dtype([(p.name, "<" + p.dtype) for p in element.properties])
            size = dtype.itemsize * element.count
            if cursor + size > len(self.data):
                raise MeshFormatError(f"Truncated binary element '{element.name}'")
            table = np.frombuffer(self.data, dtype=dtype, count=element.count, offset=cursor)
            return {name: table[name] for name in dtype.names}, cursor + size
        columns = {p.name: [] for p in element.properties}
        try:
            for _ in range(element.count):
                for prop in element.properties:
                    if prop.count_dtype is None:
                        value = np.frombuffer(self.data, "<" + prop.dtype, 1, cursor)[0]
                        cursor += np.dtype(prop.dtype).itemsize
                        columns[prop.name].append(float(value))
                    else:
                        n = int(np.frombuffer(self.data, "<" + prop.count_dtype, 1, cursor)[0])
                        cursor += np.dtype(prop.count_dtype).itemsize
                        values = np.frombuffer(self.data, "<" + prop.dtype, n, cursor)
                        cursor += n * np.dtype(prop.dtype).itemsize
                        columns[prop.name].append(values.astype(np.int64).tolist())
        except ValueError:
            raise MeshFormatError(f"Truncated binary element '{element.name}'")
        return columns, cursor


# ============== public API ==============

def load_mesh(path: str, format: Optional[MeshFormat] = None) -> TriMesh:
    """
    Loads a triangle mesh from OBJ or PLY

    Args:
        path: File path
        format: Explicit format; inferred from the extension when None

    Returns:
        TriMesh: vertex order preserved, degenerate triangles dropped

    Raises:
        MissingFileError: path does not exist
        MeshFormatError: parse failure (with line number where known)
    """
    if not os.path.exists(path):
        raise MissingFileError(f"Mesh file not found: {path}", path=path)
    format = format or MeshFormat.from_path(path)
    if format is MeshFormat.OBJ:
        with open(path, "r", encoding="utf-8", errors="replace") as f:
            reader = ObjReader(f.read())
        reader.read_records()
        vertices, triangles = reader.to_arrays()
    else:
        with open(path, "rb") as f:
            vertices, triangles, _ = PlyReader(f.read()).to_arrays()
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshIndexError(
                f"Face references vertex {int(triangles.max())} of {len(vertices)}", path=path
            )
    log.debug("loaded mesh", extra={"fields": {"path": path, "vertices": len(vertices),
                                               "triangles": len(triangles)}})
    return TriMesh.repaired(vertices, triangles, source=os.path.basename(path))


def read_vertex_quality(path: str) -> np.ndarray:
    """Per-vertex `quality` scalar of a PLY file"""
    with open(path, "rb") as f:
        _, _, extras = PlyReader(f.read()).to_arrays()
    if "quality" not in extras:
        raise MeshFormatError("PLY file has no per-vertex quality property", path=path)
    return extras["quality"]


def save_mesh(mesh: TriMesh, path: str, format: Optional[MeshFormat] = None,
              vertex_quality: Optional[np.ndarray] = None) -> None:
    """
    Writes OBJ or ASCII PLY

    Args:
        mesh: Mesh to write
        path: Output path
        format: Explicit format; inferred from the extension when None
        vertex_quality: Optional per-vertex scalar (PLY only)
    """
    format = format or MeshFormat.from_path(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if format is MeshFormat.OBJ:
            if vertex_quality is not None:
                raise MeshFormatError("OBJ cannot carry per-vertex quality", path=path)
            for x, y, z in mesh.vertices:
                f.write(f"v {x:.10f} {y:.10f} {z:.10f}\n")
            for a, b, c in mesh.triangles + 1:
                f.write(f"f {a} {b} {c}\n")
            return
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {mesh.n_vertices}\n")
        f.write("property double x\nproperty double y\nproperty double z\n")
        if vertex_quality is not None:
            vertex_quality = np.asarray(vertex_quality, dtype=np.float64)
            if vertex_quality.shape != (mesh.n_vertices,):
                raise MeshFormatError("vertex_quality must have one value per vertex", path=path)
            f.write("property double quality\n")
        f.write(f"element face {mesh.n_triangles}\n")
        f.write("property list uchar int vertex_indices\nend_header\n")
        for index, (x, y, z) in enumerate(mesh.vertices):
            row = f"{x:.10f} {y:.10f} {z:.10f}"
            if vertex_quality is not None:
                row += f" {vertex_quality[index]:.10f}"
            f.write(row + "\n")
        for a, b, c in mesh.triangles:
            f.write(f"3 {a} {b} {c}\n")


# Module demonstration
if __name__ == "__main__":
    demo = """# unit right triangle
v 0 0 0
v 1 0 0
v 0 1 0
vn 0 0 1
f 1//1 2//1 3//1
"""
    reader = ObjReader(demo)
    for record in reader.read_records():
        print(record)
    vertices, triangles = reader.to_arrays()
    print(TriMesh(vertices, triangles))
