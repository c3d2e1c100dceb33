"""
CranioFace - Synthetic Datasets
Paired skull/face datasets with a known linear latent structure

Skull and face coordinates are x = x* + b V* + e and y = y* + b W* + h
with Gaussian latents b whose variances decay geometrically. The
dataset is written in the directory layout the pipeline reads:

    dataset.json          names, groups, generator settings
    skull_template.json   landmark template
    reference.ply         face reference mesh
    skulls/<name>.json    skull landmarks per entry
    faces/<name>.ply      measured face per entry
    ground_truth.npz      latents and loadings (synthetic data only)
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from errors import FormatError, LayoutError, MissingFileError, ModelError, UsageError
from landmarks import LandmarkPoint, LandmarkSet, load_landmarks, load_template, save_landmarks, save_template
from mesh_core import TriMesh, golden_lattice, lattice_patch, load_mesh, save_mesh
from pca_model import write_npz
from shape_table import CoordinateLayout, coordinate_count, flatten, unflatten
from validation import CvEntry

log = logging.getLogger(__name__)

# Skull landmark counts of the three comparison levels (coordinates 65, 220, 688)
LANDMARK_LEVELS = ((13, 13), (23, 58), (47, 198))


class SynthError(ModelError):
    """Generator settings that cannot produce a dataset"""
    kind = "synth"


@dataclass
class SynthSpec:
    """Generator settings; defaults give the desk-scale benchmark"""
    seed: int = 0
    n: int = 50
    latent_dim: int = 8
    noise_sigma: float = 0.5
    decay: float = 0.7
    midplane: int = 47
    lateral: int = 198
    face_vertices: int = 1741
    skull_scale: float = 2.0
    face_scale: float = 2.0
    pairs: bool = False
    pair_spread: float = 0.1

    def validate(self) -> None:
        if self.n < 3:
            raise SynthError(f"Need at least 3 entries, got {self.n}")
        if not 1 <= self.latent_dim < self.n - 1:
            raise SynthError(f"Latent dimension must lie in 1..n-2, got {self.latent_dim}")
        if self.noise_sigma < 0:
            raise SynthError("noise_sigma must be non-negative")
        if not 0 < self.decay <= 1:
            raise SynthError("decay must lie in (0, 1]")
        if self.midplane < 0 or self.lateral < 0 or self.midplane + self.lateral == 0:
            raise SynthError("Skull template needs landmarks")
        if self.latent_dim > coordinate_count(self.midplane, self.lateral):
            raise SynthError("Skull loadings cannot have full row rank")
        if self.face_vertices < 3 or self.latent_dim > 3 * self.face_vertices:
            raise SynthError("Face template is too small")
        if self.pairs and self.n % 2:
            raise SynthError("Pairs mode needs an even entry count")

    @property
    def p(self) -> int:
        return coordinate_count(self.midplane, self.lateral)

    @property
    def q(self) -> int:
        return 3 * self.face_vertices

    @property
    def individuals(self) -> int:
        return self.n // 2 if self.pairs else self.n

    def latent_variances(self) -> np.ndarray:
        return self.decay ** np.arange(self.latent_dim)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "SynthSpec":
        """
        Raises:
            FormatError: unknown setting names
            UsageError: a setting of the wrong type
        """
        known = {f.name: type(f.default) for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise FormatError(f"Unknown synth settings: {', '.join(unknown)}")
        values = {}
        for name, value in data.items():
            kind = known[name]
            if kind is bool:
                ok = isinstance(value, bool)
            elif kind is int:
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if not ok:
                raise UsageError(f"Synth setting '{name}' must be {kind.__name__}, got {value!r}",
                                 setting=name)
            values[name] = kind(value)
        return cls(**values)


@dataclass
class Dataset:
    """Entries of a dataset directory, ground truth when synthetic"""
    names: List[str]
    groups: List[str]
    skulls: List[LandmarkSet]
    faces: List[TriMesh]
    skull_template: LandmarkSet
    reference: TriMesh
    spec: Optional[SynthSpec] = None
    ground_truth: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.names)

    def entries(self) -> List[CvEntry]:
        """Cross-validation entries; the measured face doubles as its deformed reference"""
        return [CvEntry(name, skull, face, face, group)
                for name, group, skull, face in zip(self.names, self.groups, self.skulls, self.faces)]


# ============== templates ==============

def face_template(n_vertices: int) -> TriMesh:
    """Half-face patch: x >= 0 lateral, x = 0 on the midline, bulging towards +z"""
    uv, triangles = lattice_patch(n_vertices)
    u, v = uv[:, 0], uv[:, 1]
    vertices = np.column_stack([
        70.0 * u,
        120.0 * (v - 0.5),
        20.0 * np.exp(-(u ** 2) / 0.4 - (v - 0.5) ** 2 / 0.2),
    ])
    return TriMesh(vertices, triangles)


def skull_template(midplane: int, lateral: int) -> LandmarkSet:
    """Midplane points on x = 0 followed by lateral points behind the face"""
    points = []
    for i, t in enumerate(np.linspace(0.0, 1.0, midplane)):
        points.append(LandmarkPoint(f"M{i:03d}", (0.0, 120.0 * (t - 0.5),
                                                  -15.0 + 10.0 * np.cos(np.pi * (t - 0.5))), True))
    if lateral:
        u, v = golden_lattice(lateral).T
        for i in range(lateral):
            points.append(LandmarkPoint(f"L{i:03d}", (5.0 + 55.0 * u[i], 120.0 * (v[i] - 0.5),
                                                      -15.0 - 10.0 * u[i] ** 2)))
    return LandmarkSet(points)


# ============== generation ==============

def _seeds(spec: SynthSpec) -> Tuple[np.random.SeedSequence, List[Tuple[np.random.SeedSequence, ...]]]:
    """Loadings seed plus (latent, noise) seeds per individual"""
    children = np.random.SeedSequence(spec.seed).spawn(spec.individuals + 1)
    return children[0], [tuple(child.spawn(2)) for child in children[1:]]


def draw_latents(spec: SynthSpec) -> np.ndarray:
    """Per-entry latent vectors (n x k)"""
    _, individuals = _seeds(spec)
    sd = np.sqrt(spec.latent_variances())
    rows = []
    for latent_seed, _ in individuals:
        rng = np.random.default_rng(latent_seed)
        b = rng.standard_normal(spec.latent_dim) * sd
        if spec.pairs:
            for _ in range(2):
                rows.append(b + spec.pair_spread * rng.standard_normal(spec.latent_dim) * sd)
        else:
            rows.append(b)
    return np.vstack(rows)


def generate(spec: SynthSpec) -> Dataset:
    """
    Draws a dataset from the linear latent model

    Raises:
        SynthError: settings violate the generator's preconditions
    """
    spec.validate()
    loadings_seed, individuals = _seeds(spec)
    loadings_rng = np.random.default_rng(loadings_seed)
    template = skull_template(spec.midplane, spec.lateral)
    reference = face_template(spec.face_vertices)
    skull_layout = CoordinateLayout.from_landmarks(template)
    face_layout = CoordinateLayout.for_mesh(reference.n_vertices)
    x_mean = flatten(template, skull_layout)
    y_mean = reference.vertices.ravel()

    skull_loadings = spec.skull_scale * loadings_rng.standard_normal((spec.latent_dim, spec.p))
    face_loadings = spec.face_scale * loadings_rng.standard_normal((spec.latent_dim, spec.q))

    latents = draw_latents(spec)
    # both halves of a pair draw from their individual's noise stream in turn
    noise_streams = [np.random.default_rng(noise_seed) for _, noise_seed in individuals]
    noise_rngs = [rng for rng in noise_streams for _ in range(2 if spec.pairs else 1)]
    skulls, faces, names, groups = [], [], [], []
    for i, (b, rng) in enumerate(zip(latents, noise_rngs)):
        x = b @ skull_loadings + spec.noise_sigma * rng.standard_normal(spec.p)
        y = b @ face_loadings + spec.noise_sigma * rng.standard_normal(spec.q)
        skulls.append(template.with_positions(unflatten(x, x_mean, skull_layout)))
        faces.append(TriMesh(unflatten(y, y_mean, face_layout), reference.triangles,
                             check_areas=False))
        if spec.pairs:
            group = f"ind{i // 2:03d}"
            names.append(f"{group}_{'R' if i % 2 == 0 else 'L'}")
        else:
            group = f"entry{i:03d}"
            names.append(group)
        groups.append(group)

    log.info("generated dataset", extra={"fields": {"seed": spec.seed, "n": spec.n, "k": spec.latent_dim,
                                                    "p": spec.p, "q": spec.q}})
    return Dataset(names, groups, skulls, faces, template, reference, spec, {
        "latents": latents, "skull_loadings": skull_loadings, "face_loadings": face_loadings,
    })


def generate_levels(spec: SynthSpec, levels: Sequence[Tuple[int, int]] = LANDMARK_LEVELS
                    ) -> Dict[int, Dataset]:
    """
    Variants of one dataset at several skull landmark counts

    Generated once at the largest counts; each level keeps the first
    midplane and lateral landmarks, so latents, noise and faces are shared.

    Returns:
        {coordinate count: Dataset}
    """
    mid = max(m for m, _ in levels)
    lat = max(l for _, l in levels)
    full = generate(SynthSpec(**{**spec.to_dict(), "midplane": mid, "lateral": lat}))
    variants = {}
    for m, l in levels:
        keep = [f"M{i:03d}" for i in range(m)] + [f"L{i:03d}" for i in range(l)]
        variants[coordinate_count(m, l)] = Dataset(
            full.names, full.groups, [s.subset(keep) for s in full.skulls], full.faces,
            full.skull_template.subset(keep), full.reference,
            SynthSpec(**{**spec.to_dict(), "midplane": m, "lateral": l}), full.ground_truth)
    return variants


def oracle_regression(x, y) -> np.ndarray:
    """Minimum-norm least-squares B with X B ~ Y"""
    solution, _, _, _ = linalg.lstsq(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return solution


# ============== dataset directories ==============

def write_dataset(dataset: Dataset, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    record = {"names": dataset.names, "groups": dataset.groups,
              "spec": dataset.spec.to_dict() if dataset.spec else None}
    with open(os.path.join(directory, "dataset.json"), "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2)
    save_template(dataset.skull_template, os.path.join(directory, "skull_template.json"))
    save_mesh(dataset.reference, os.path.join(directory, "reference.ply"))
    for name, skull, face in zip(dataset.names, dataset.skulls, dataset.faces):
        save_landmarks(skull, os.path.join(directory, "skulls", f"{name}.json"))
        save_mesh(face, os.path.join(directory, "faces", f"{name}.ply"))
    if dataset.ground_truth:
        write_npz(os.path.join(directory, "ground_truth.npz"), dataset.ground_truth)


def load_dataset(directory: str) -> Dataset:
    """
    Reads a dataset directory

    Raises:
        MissingFileError: dataset.json or a listed entry file is absent
        FormatError: dataset.json does not parse
    """
    path = os.path.join(directory, "dataset.json")
    if not os.path.exists(path):
        raise MissingFileError(f"Dataset description not found: {path}", path=path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
        names = [str(name) for name in record["names"]]
        groups = [str(group) for group in record.get("groups") or names]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"Malformed dataset description: {e}", path=path)
    if len(groups) != len(names):
        raise FormatError("dataset.json lists different numbers of names and groups", path=path)

    template = load_template(os.path.join(directory, "skull_template.json"))
    reference = load_mesh(os.path.join(directory, "reference.ply"))
    skulls, faces = [], []
    for name in names:
        marks = load_landmarks(os.path.join(directory, "skulls", f"{name}.json"))
        if marks.ids != template.ids:
            raise LayoutError("Skull landmark ids differ from the template", entry=name)
        skulls.append(marks)
        faces.append(load_mesh(os.path.join(directory, "faces", f"{name}.ply")))

    truth_path = os.path.join(directory, "ground_truth.npz")
    truth = {}
    if os.path.exists(truth_path):
        with np.load(truth_path) as data:
            truth = {key: data[key] for key in data.files}
    spec = SynthSpec.from_dict(record["spec"]) if record.get("spec") else None
    log.info("loaded dataset", extra={"fields": {"directory": directory, "entries": len(names)}})
    return Dataset(names, groups, skulls, faces, template, reference, spec, truth)


if __name__ == "__main__":
    demo = generate(SynthSpec(n=6, latent_dim=2, midplane=3, lateral=4, face_vertices=60))
    print(f"🧪 {len(demo)} entries, p={demo.spec.p}, q={demo.spec.q}")
    for name, skull in zip(demo.names[:2], demo.skulls):
        print(f"   {name}: {skull.counts()[0]} midplane + {skull.counts()[1]} lateral landmarks")
