"""
CranioFace - Error Base
Common root of the exceptions raised by every pipeline stage

Each stage defines its own exception next to the code that raises it
(mesh_io.MeshFormatError, geodesics.GeodesicError, ...). They all derive
from CranioError so main.py can map them to exit codes and print a
machine-readable record.
"""

from typing import Any, Dict


class CranioError(Exception):
    """Base exception for the pipeline"""
    kind = "error"
    exit_code = 1

    def __init__(self, message: str, **context: Any):
        self.message = message
        self.context = context
        super().__init__(self._format())

    def _format(self) -> str:
        if not self.context:
            return self.message
        where = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({where})"

    def with_context(self, **context: Any) -> "CranioError":
        """Attaches more location context (e.g. the landmark edge being processed)"""
        self.context.update(context)
        self.args = (self._format(),)
        return self

    def to_record(self) -> Dict[str, Any]:
        """JSON-serialisable description of the error"""
        return {
            "error": self.kind,
            "message": self.message,
            "exit_code": self.exit_code,
            "context": {key: _plain(value) for key, value in self.context.items()},
        }


class UsageError(CranioError):
    """A flag or setting has an unusable value"""
    kind = "usage"
    exit_code = 2


class MissingFileError(CranioError):
    """An input file named on the command line does not exist"""
    kind = "missing_file"
    exit_code = 3


class FormatError(CranioError):
    """A file exists but does not parse as the expected format"""
    kind = "format"
    exit_code = 4


class LayoutError(CranioError):
    """Coordinate layouts or landmark ids disagree"""
    kind = "layout"
    exit_code = 5


class GeometryError(CranioError):
    """Geometric or numerical failure (empty mesh, rank, geodesics)"""
    kind = "geometry"
    exit_code = 6


class ModelError(CranioError):
    """Statistical model cannot be fitted or used"""
    kind = "model"
    exit_code = 7


class AlignmentError(CranioError):
    """Registration cannot proceed"""
    kind = "alignment"
    exit_code = 8


def _plain(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    try:
        return value.tolist()
    except AttributeError:
        return str(value)


def from_os_error(error: OSError) -> CranioError:
    """An absent path is a missing file; any other I/O failure is a format error"""
    path = error.filename
    if isinstance(error, FileNotFoundError):
        return MissingFileError(f"File not found: {path}", path=path)
    return FormatError(f"Cannot use {path}: {error.strerror or error}", path=path)
