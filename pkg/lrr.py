"""
CranioFace - Latent Root Regression
Multiresponse regression of the face table on latent skull directions

Latent vectors are extracted one at a time: the skull part of the
dominant eigenvector of the deflated merged table [X_i Y] is
orthogonalised against the earlier vectors and X_i is deflated by the
new score t_i = X v_i. The coefficient matrix is

    B = sum_i v_i v_i^T X^T Y / (t_i^T t_i)

With orthogonality="scores" (default) the orthogonalisation uses the
X^T X inner product, so the training scores are mutually orthogonal and
B is the least-squares regression of Y on the scores. With
orthogonality="euclidean" the vectors are orthonormal in the plain
inner product instead.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from scipy import linalg

from errors import FormatError, LayoutError, ModelError
from landmarks import LandmarkSet
from pca_model import read_archive, sign_convention, topology_arrays, write_archive
from shape_table import CoordinateLayout, Prediction, ShapeTablePair, flatten, unflatten

log = logging.getLogger(__name__)

# Orthogonalised vectors shorter than this end the extraction
RANK_EPSILON = 1e-10


class LrrError(ModelError):
    """Latent root regression cannot be fitted or used"""
    kind = "lrr_model"


class Orthogonality(Enum):
    SCORES = "scores"
    EUCLIDEAN = "euclidean"


@dataclass
class LrrModel:
    """
    Fitted latent root regression

    latent_vectors: r x p, one unit vector per row
    score_norms: t_i^T t_i with t_i = X v_i on the training X
    cross: r x q, rows t_i^T Y
    coefficients: p x q matrix B
    scores: n x r training scores
    """
    latent_vectors: np.ndarray
    score_norms: np.ndarray
    cross: np.ndarray
    coefficients: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    skull_layout: CoordinateLayout
    face_layout: CoordinateLayout
    scores: np.ndarray
    orthogonality: Orthogonality = Orthogonality.SCORES
    warnings: List[str] = field(default_factory=list)
    face_triangles: Optional[np.ndarray] = None

    @property
    def r(self) -> int:
        return len(self.score_norms)

    @property
    def p(self) -> int:
        return self.skull_layout.total_dim

    @property
    def q(self) -> int:
        return self.face_layout.total_dim


def assemble_coefficients(latent_vectors: np.ndarray, score_norms: np.ndarray,
                          cross: np.ndarray) -> np.ndarray:
    """B = V^T diag(1 / score_norms) (T^T Y)"""
    return latent_vectors.T @ (cross / score_norms[:, None])


def fit_lrr(tables: ShapeTablePair, r: int,
            orthogonality: Orthogonality = Orthogonality.SCORES) -> LrrModel:
    """
    Extracts r latent vectors and assembles the coefficient matrix

    Every latent vector has unit length. With Orthogonality.SCORES they
    are orthogonalised in the X^T X inner product: the training scores
    t_i = X v_i are mutually orthogonal, but V V^T is not the identity.
    With Orthogonality.EUCLIDEAN the vectors themselves are orthonormal
    (V V^T = I) and the scores are in general correlated, so the summed
    prediction is then not a least-squares fit on the scores.

    Args:
        tables: Centred skull/face tables
        r: Requested component count (>= 1)
        orthogonality: Inner product used to orthogonalise latent vectors

    Returns:
        LrrModel with at most r components; fewer (with a warning) when
        the rank of X is exhausted first

    Raises:
        LrrError: r < 1, fewer than 2 entries, or X identically zero
    """
    orthogonality = Orthogonality(orthogonality)
    if r < 1:
        raise LrrError(f"Component count must be >= 1, got {r}")
    if tables.n < 2:
        raise LrrError(f"Need at least 2 entries, got {tables.n}")
    x, y = tables.X, tables.Y
    if not np.any(x):
        raise LrrError("Skull table is identically zero")

    n = tables.n
    response_gram = y @ y.T
    deflated = x.copy()
    vectors: List[np.ndarray] = []
    scores: List[np.ndarray] = []
    warnings: List[str] = []

    for i in range(r):
        eigenvalue, eigenvector = linalg.eigh(deflated @ deflated.T + response_gram,
                                              subset_by_index=[n - 1, n - 1])
        if eigenvalue[0] <= 0.0:
            warnings.append(f"joint table exhausted after {i} components")
            break
        candidate = deflated.T @ eigenvector[:, 0] / np.sqrt(eigenvalue[0])

        # two Gram-Schmidt passes against the earlier vectors
        for _ in range(2):
            for v, t in zip(vectors, scores):
                if orthogonality is Orthogonality.SCORES:
                    candidate = candidate - ((x @ candidate) @ t / (t @ t)) * v
                else:
                    candidate = candidate - (v @ candidate) * v
        norm = float(np.linalg.norm(candidate))
        if norm < RANK_EPSILON:
            warnings.append(f"rank of X exhausted after {i} components")
            break
        v = sign_convention((candidate / norm)[None, :])[0]
        t = x @ v
        score_norm = float(t @ t)
        if score_norm <= RANK_EPSILON ** 2 * float(np.sum(x * x)):
            warnings.append(f"score vanished after {i} components")
            break
        vectors.append(v)
        scores.append(t)
        deflated = deflated - np.outer(t, t @ deflated) / score_norm

    if not vectors:
        raise LrrError("No latent vector could be extracted")
    for message in warnings:
        log.warning("LRR truncated", extra={"fields": {"requested": r, "fitted": len(vectors),
                                                       "reason": message}})

    latent = np.vstack(vectors)
    score_matrix = np.column_stack(scores)
    score_norms = np.sum(score_matrix ** 2, axis=0)
    cross = score_matrix.T @ y
    log.info("fitted LRR", extra={"fields": {"n": n, "components": len(vectors),
                                             "orthogonality": orthogonality.value}})
    return LrrModel(latent, score_norms, cross, assemble_coefficients(latent, score_norms, cross),
                    tables.x_mean.copy(), tables.y_mean.copy(), tables.skull_layout,
                    tables.face_layout, score_matrix, orthogonality, warnings)


def truncate(model: LrrModel, r: int) -> LrrModel:
    """The nested model made of the first r latent vectors"""
    if not 1 <= r <= model.r:
        raise LrrError(f"Cannot truncate a {model.r}-component model to {r}")
    latent, norms, cross = model.latent_vectors[:r], model.score_norms[:r], model.cross[:r]
    return LrrModel(latent, norms, cross, assemble_coefficients(latent, norms, cross),
                    model.x_mean, model.y_mean, model.skull_layout, model.face_layout,
                    model.scores[:, :r], model.orthogonality, list(model.warnings),
                    model.face_triangles)


def _check_skull_vector(model: LrrModel, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if x0.shape != (model.p,):
        raise LayoutError(f"Skull vector has dimension {x0.size}, expected {model.p}")
    return x0


def predict_centered(model: LrrModel, x0) -> np.ndarray:
    """y0 = x0 B"""
    return _check_skull_vector(model, x0) @ model.coefficients


def predict_summed(model: LrrModel, x0) -> np.ndarray:
    """y0 = sum_i (x0 . v_i) (t_i^T Y) / (t_i^T t_i), without forming B"""
    x0 = _check_skull_vector(model, x0)
    weights = (model.latent_vectors @ x0) / model.score_norms
    return weights @ model.cross


def prediction_curve(model: LrrModel, x0, r: Optional[int] = None) -> np.ndarray:
    """Centred predictions of the nested 1..r component models (rows)"""
    x0 = _check_skull_vector(model, x0)
    r = model.r if r is None else min(r, model.r)
    weights = (model.latent_vectors[:r] @ x0) / model.score_norms[:r]
    return np.cumsum(weights[:, None] * model.cross[:r], axis=0)


def predict(model: LrrModel, skull: LandmarkSet) -> Prediction:
    """
    Face predicted from a skull

    Raises:
        LayoutError: skull ids or midplane constraint do not fit the model
    """
    x0 = flatten(skull, model.skull_layout) - model.x_mean
    centered = predict_centered(model, x0)
    return Prediction(unflatten(centered, model.y_mean, model.face_layout), centered)


def score_orthogonality(model: LrrModel) -> float:
    """Largest |cosine| between two distinct training scores (0 for r = 1)"""
    if model.r < 2:
        return 0.0
    unit = model.scores / np.linalg.norm(model.scores, axis=0)
    cosines = np.abs(unit.T @ unit)
    np.fill_diagonal(cosines, 0.0)
    return float(cosines.max())


# ============== archive ==============

def save_lrr(model: LrrModel, path: str) -> None:
    write_archive(path, "lrr", {
        "latent_vectors": model.latent_vectors, "score_norms": model.score_norms,
        "cross": model.cross, "coefficients": model.coefficients, "scores": model.scores,
        "x_mean": model.x_mean, "y_mean": model.y_mean,
        "orthogonality": np.array(model.orthogonality.value),
        **topology_arrays(model.face_triangles),
    }, model.skull_layout, model.face_layout)


def load_lrr(path: str, verify: bool = True) -> LrrModel:
    """
    Reads an LRR archive

    With verify, B is recomputed from the stored latent vectors and
    compared with the stored matrix.
    """
    _, arrays, skull_layout, face_layout = read_archive(path, "lrr")
    try:
        model = LrrModel(arrays["latent_vectors"], arrays["score_norms"], arrays["cross"],
                         arrays["coefficients"], arrays["x_mean"], arrays["y_mean"],
                         skull_layout, face_layout, arrays["scores"],
                         Orthogonality(str(arrays["orthogonality"])),
                         face_triangles=arrays.get("face_triangles"))
    except (KeyError, ValueError) as e:
        raise FormatError(f"Malformed LRR archive: {e}", path=path)
    if verify:
        rebuilt = assemble_coefficients(model.latent_vectors, model.score_norms, model.cross)
        scale = max(float(np.abs(rebuilt).max()), 1e-300)
        if (rebuilt.shape != model.coefficients.shape
                or float(np.abs(rebuilt - model.coefficients).max()) > 1e-8 * scale):
            raise LrrError("Stored coefficient matrix does not match the latent vectors", path=path)
    return model


if __name__ == "__main__":
    rng = np.random.default_rng(1)
    x = rng.normal(size=(12, 9))
    x -= x.mean(axis=0)
    y = x @ rng.normal(size=(9, 6))
    tables = ShapeTablePair(x, y, np.zeros(9), np.zeros(6),
                            CoordinateLayout.for_mesh(3), CoordinateLayout.for_mesh(2))
    model = fit_lrr(tables, 9)
    residual = np.linalg.norm(y - x @ model.coefficients) / np.linalg.norm(y)
    print(f"📈 r={model.r}, relative training residual {residual:.2e}, "
          f"score orthogonality {score_orthogonality(model):.1e}")
