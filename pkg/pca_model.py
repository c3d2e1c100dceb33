"""
CranioFace - Joint PCA Shape Model
Principal components of the merged table Z = [X Y] and the sequential
best-fit face predictor

Components are obtained from the n x n Gram matrix Z Z^T, since the
merged dimension p + q is far larger than the number of entries.
"""

import json
import logging
import os
import zipfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from errors import FormatError, LayoutError, MissingFileError, ModelError
from landmarks import LandmarkSet
from shape_table import CoordinateLayout, Prediction, ShapeTablePair, flatten, unflatten

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
# Components with eigenvalue below this fraction of the largest are dropped
EIGEN_CUTOFF = 1e-10
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class PcaModelError(ModelError):
    """Joint PCA cannot be fitted or used"""
    kind = "pca_model"


def sign_convention(vectors: np.ndarray) -> np.ndarray:
    """Flips each row so its largest-magnitude entry is positive"""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    lead = vectors[np.arange(len(vectors)), np.argmax(np.abs(vectors), axis=1)]
    vectors[lead < 0] *= -1.0
    return vectors


@dataclass
class JointPcaModel:
    """
    Eigenpairs of Z^T Z with components split into skull and face parts

    components holds one unit vector a_j = [v_j w_j] per row.
    """
    eigenvalues: np.ndarray
    components: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    skull_layout: CoordinateLayout
    face_layout: CoordinateLayout
    # reference face topology, when known, for writing predictions as meshes
    face_triangles: Optional[np.ndarray] = None

    @property
    def n_components(self) -> int:
        return len(self.eigenvalues)

    @property
    def p(self) -> int:
        return self.skull_layout.total_dim

    @property
    def q(self) -> int:
        return self.face_layout.total_dim

    @property
    def skull_parts(self) -> np.ndarray:
        """v_j rows (m x p)"""
        return self.components[:, :self.p]

    @property
    def face_parts(self) -> np.ndarray:
        """w_j rows (m x q)"""
        return self.components[:, self.p:]


@dataclass
class FitWeights:
    """Greedy component weights for one skull"""
    b: np.ndarray
    residual_norm: float
    skipped: List[int] = field(default_factory=list)


def fit_joint_pca(tables: ShapeTablePair) -> JointPcaModel:
    """
    Joint PCA of the centred tables

    Raises:
        PcaModelError: fewer than 2 entries or no positive eigenvalue
    """
    if tables.n < 2:
        raise PcaModelError(f"Need at least 2 entries, got {tables.n}")
    z = np.hstack([tables.X, tables.Y])
    eigenvalues, eigenvectors = linalg.eigh(z @ z.T)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]
    if eigenvalues[0] <= 0.0:
        raise PcaModelError("Data has zero variance")

    keep = eigenvalues > EIGEN_CUTOFF * eigenvalues[0]
    keep[tables.n - 1:] = False
    eigenvalues, eigenvectors = eigenvalues[keep], eigenvectors[:, keep]
    components = (z.T @ eigenvectors) / np.sqrt(eigenvalues)
    # re-orthonormalise; small eigenvalues amplify rounding in the mapped vectors
    q, r = np.linalg.qr(components)
    components = (q * np.sign(np.diag(r))).T
    components = sign_convention(components)

    log.info("fitted joint PCA", extra={"fields": {"n": tables.n, "components": len(eigenvalues),
                                                   "dimension": z.shape[1]}})
    return JointPcaModel(eigenvalues, components, tables.x_mean.copy(), tables.y_mean.copy(),
                         tables.skull_layout, tables.face_layout)


def best_fit_weights(model: JointPcaModel, x0, m: int) -> FitWeights:
    """
    Sequential weights of a centred skull against the first m skull parts

    For j = 1..m: b_j = <x, v_j> / |v_j|^2, then x -> x - b_j v_j. The skull
    parts are not orthogonal, so the result depends on their order and is
    not the joint least-squares fit.

    Raises:
        PcaModelError: m exceeds the component count
        LayoutError: x0 has the wrong dimension
    """
    if not 0 <= m <= model.n_components:
        raise PcaModelError(f"Asked for {m} components, model has {model.n_components}")
    residual = np.array(x0, dtype=np.float64).ravel()
    if residual.shape != (model.p,):
        raise LayoutError(f"Skull vector has dimension {residual.size}, expected {model.p}")

    b = np.zeros(m)
    skipped = []
    for j in range(m):
        v = model.skull_parts[j]
        norm2 = float(v @ v)
        if norm2 == 0.0:
            skipped.append(j)
            log.warning("skull part with zero norm skipped", extra={"fields": {"component": j}})
            continue
        b[j] = float(residual @ v) / norm2
        residual = residual - b[j] * v
    return FitWeights(b, float(np.linalg.norm(residual)), skipped)


def reconstruct_face(model: JointPcaModel, weights: FitWeights) -> Prediction:
    """Template face plus the weighted face parts"""
    b = np.asarray(weights.b, dtype=np.float64).ravel()
    if len(b) > model.n_components:
        raise LayoutError(f"{len(b)} weights for a model with {model.n_components} components")
    centered = b @ model.face_parts[:len(b)]
    return Prediction(unflatten(centered, model.y_mean, model.face_layout), centered)


def face_curve(model: JointPcaModel, x0, m: int) -> np.ndarray:
    """
    Centred face predictions for 1..m components (rows)

    The greedy weights of a prefix do not depend on later components,
    so one pass gives every count.
    """
    weights = best_fit_weights(model, x0, m)
    return np.cumsum(weights.b[:, None] * model.face_parts[:m], axis=0)


def encode(model: JointPcaModel, z) -> np.ndarray:
    """Exact scores <z, a_j> of a centred merged vector"""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape != (model.p + model.q,):
        raise LayoutError(f"Merged vector has dimension {z.size}, expected {model.p + model.q}")
    return model.components @ z


def decode(model: JointPcaModel, scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    return scores @ model.components[:len(scores)]


def predict(model: JointPcaModel, skull: LandmarkSet, m: int) -> Prediction:
    """Face predicted from a skull with m components"""
    x0 = flatten(skull, model.skull_layout) - model.x_mean
    return reconstruct_face(model, best_fit_weights(model, x0, m))


# ============== model archive ==============

def write_npz(path: str, arrays: Dict[str, np.ndarray]) -> None:
    """
    Compressed npz with fixed member timestamps

    np.savez stamps members with the current time; identical inputs
    must give identical bytes.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name, value in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            with archive.open(info, "w", force_zip64=True) as f:
                np.lib.format.write_array(f, np.asanyarray(value), allow_pickle=False)


def write_archive(path: str, kind: str, arrays: Dict[str, np.ndarray],
                  skull_layout: CoordinateLayout, face_layout: CoordinateLayout) -> None:
    """npz archive shared by every model kind"""
    layouts = json.dumps({"skull": skull_layout.to_dict(), "face": face_layout.to_dict()},
                         sort_keys=True)
    write_npz(path, {"format_version": np.array(FORMAT_VERSION), "kind": np.array(kind),
                     "layouts": np.array(layouts), **arrays})


def read_archive(path: str, kind: Optional[str] = None
                 ) -> Tuple[str, Dict[str, np.ndarray], CoordinateLayout, CoordinateLayout]:
    """
    Reads a model archive

    Returns:
        (kind, arrays, skull layout, face layout)

    Raises:
        MissingFileError, FormatError (unreadable, wrong version), ModelError (wrong kind)
    """
    if not os.path.exists(path):
        raise MissingFileError(f"Model file not found: {path}", path=path)
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {key: data[key] for key in data.files}
    except (ValueError, OSError, zipfile.BadZipFile) as e:
        raise FormatError(f"Cannot read model archive: {e}", path=path)
    for key in ("format_version", "kind", "layouts"):
        if key not in arrays:
            raise FormatError(f"Model archive lacks '{key}'", path=path)
    version = int(arrays.pop("format_version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported model format version {version}", path=path)
    found = str(arrays.pop("kind"))
    if kind is not None and found != kind:
        raise ModelError(f"Model file holds a '{found}' model, expected '{kind}'", path=path)
    layouts = json.loads(str(arrays.pop("layouts")))
    return (found, arrays, CoordinateLayout.from_dict(layouts["skull"]),
            CoordinateLayout.from_dict(layouts["face"]))


def topology_arrays(triangles: Optional[np.ndarray]) -> Dict[str, np.ndarray]:
    return {} if triangles is None else {"face_triangles": np.asarray(triangles, dtype=np.int64)}


def save_pca(model: JointPcaModel, path: str) -> None:
    write_archive(path, "pca", {
        "eigenvalues": model.eigenvalues, "components": model.components,
        "x_mean": model.x_mean, "y_mean": model.y_mean,
        **topology_arrays(model.face_triangles),
    }, model.skull_layout, model.face_layout)


def load_pca(path: str) -> JointPcaModel:
    _, arrays, skull_layout, face_layout = read_archive(path, "pca")
    try:
        return JointPcaModel(arrays["eigenvalues"], arrays["components"], arrays["x_mean"],
                             arrays["y_mean"], skull_layout, face_layout,
                             arrays.get("face_triangles"))
    except KeyError as e:
        raise FormatError(f"PCA archive lacks {e}", path=path)


if __name__ == "__main__":
    rng = np.random.default_rng(0)
    raw = rng.normal(size=(10, 39))
    centred = raw - raw.mean(axis=0)
    demo = ShapeTablePair(centred[:, :9], centred[:, 9:], np.zeros(9), np.zeros(30),
                          CoordinateLayout.for_mesh(3), CoordinateLayout.for_mesh(10))
    model = fit_joint_pca(demo)
    print(f"🧬 {model.n_components} components, leading eigenvalue {model.eigenvalues[0]:.3f}")
    weights = best_fit_weights(model, demo.X[0], model.n_components)
    print(f"   residual of entry 0: {weights.residual_norm:.3e}")
