"""
CranioFace - Pipeline Settings
Built-in defaults, the JSON settings file and command-line overrides

Precedence: DEFAULTS < settings file (--config, else
pipeline_settings.json next to this module) < explicit flags.
"""

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from correspondence import RegistrationParams
from errors import FormatError, MissingFileError, UsageError
from geodesics import DensifyParams
from synth import SynthSpec

METHODS = ("pca", "lrr")
ORTHOGONALITY = ("scores", "euclidean")
SETTINGS_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "pipeline_settings.json")

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "jobs": 1,
    "log_level": "INFO",
    "densify": {"iterations": 2, **asdict(DensifyParams())},
    "registration": {key: value for key, value in asdict(RegistrationParams()).items()
                     if key != "initial"},
    "fit": {"method": "lrr", "components": 15, "orthogonality": "scores"},
    "crossval": {"methods": ["pca", "lrr"], "max_components": None, "bin_width": 0.25},
    "synth": {key: value for key, value in asdict(SynthSpec()).items() if key != "seed"},
}


@dataclass
class DensifySettings:
    iterations: int = 2
    params: DensifyParams = field(default_factory=DensifyParams)


@dataclass
class FitSettings:
    method: str = "lrr"
    components: int = 15
    orthogonality: str = "scores"


@dataclass
class CrossvalSettings:
    methods: List[str] = field(default_factory=lambda: ["pca", "lrr"])
    max_components: Optional[int] = None
    bin_width: float = 0.25


@dataclass
class PipelineConfig:
    """Resolved configuration of one run"""
    seed: int = 0
    jobs: int = 1
    log_level: str = "INFO"
    densify: DensifySettings = field(default_factory=DensifySettings)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    fit: FitSettings = field(default_factory=FitSettings)
    crossval: CrossvalSettings = field(default_factory=CrossvalSettings)
    synth: SynthSpec = field(default_factory=SynthSpec)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        merged = merge(DEFAULTS, data)
        try:
            densify = dict(merged["densify"])
            iterations = int(densify.pop("iterations"))
            synth = {**merged["synth"], "seed": int(merged["seed"])}
            return cls(
                seed=int(merged["seed"]),
                jobs=int(merged["jobs"]),
                log_level=str(merged["log_level"]).upper(),
                densify=DensifySettings(iterations, _build(DensifyParams, densify, "densify")),
                registration=_build(RegistrationParams, merged["registration"], "registration"),
                fit=_build(FitSettings, merged["fit"], "fit"),
                crossval=_build(CrossvalSettings, merged["crossval"], "crossval"),
                synth=SynthSpec.from_dict(synth),
            )
        except (TypeError, ValueError, KeyError) as e:
            raise FormatError(f"Invalid settings: {e}")

    def validate(self) -> "PipelineConfig":
        """
        Raises:
            UsageError: a value outside its allowed range
        """
        if self.fit.method not in METHODS:
            raise UsageError(f"Unknown method '{self.fit.method}'", setting="fit.method")
        if self.fit.orthogonality not in ORTHOGONALITY:
            raise UsageError(f"Unknown orthogonality '{self.fit.orthogonality}'",
                             setting="fit.orthogonality")
        if self.fit.components < 1:
            raise UsageError("Component count must be >= 1", setting="fit.components")
        unknown = [m for m in self.crossval.methods if m not in METHODS]
        if unknown or not self.crossval.methods:
            raise UsageError(f"Methods must be chosen from {', '.join(METHODS)}",
                             setting="crossval.methods", got=self.crossval.methods)
        if self.crossval.bin_width <= 0:
            raise UsageError("Bin width must be positive", setting="crossval.bin_width")
        if self.jobs == 0:
            raise UsageError("jobs must be non-zero", setting="jobs")
        if self.densify.iterations < 0:
            raise UsageError("densify.iterations must be >= 0", setting="densify.iterations")
        return self

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["densify"] = {"iterations": self.densify.iterations, **asdict(self.densify.params)}
        record["registration"].pop("initial", None)
        record["synth"].pop("seed", None)
        return record

    def save(self, directory: str) -> None:
        """Writes config.json, the record of the settings a run used"""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "config.json"), "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def _build(cls, values: Dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise FormatError(f"Unknown settings in '{section}': {', '.join(unknown)}", section=section)
    return cls(**values)


def merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict overlay; None values in override are ignored"""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def read_settings(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Loads a settings file

    An explicit path must exist; the default file is optional.
    """
    explicit = path is not None
    path = path or SETTINGS_FILE
    if not os.path.exists(path):
        if explicit:
            raise MissingFileError(f"Settings file not found: {path}", path=path)
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except ValueError as e:
        raise FormatError(f"Settings file is not valid JSON: {e}", path=path)
    if not isinstance(data, dict):
        raise FormatError("Settings file must hold a JSON object", path=path)
    return data


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
                ) -> PipelineConfig:
    return PipelineConfig.from_dict(merge(read_settings(path), overrides or {})).validate()
