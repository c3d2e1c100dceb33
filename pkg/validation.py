"""
CranioFace - Cross-Validation
Leave-one-out evaluation of the face predictors

Each fold holds out every entry of one group (the two mirrored halves of
an individual share a group), fits each method once at the largest
component count on the remaining entries and evaluates the nested
models 1..K from that single fit. The reconstruction error of an entry
is the mean distance from the predicted face vertices to the entry's
true face surface.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.model_selection import LeaveOneGroupOut

from errors import CranioError, FormatError, MissingFileError, ModelError
from landmarks import LandmarkSet
from mesh_core import TriMesh, save_mesh, surface_index
import lrr
import pca_model
from pca_model import write_npz
from shape_table import assemble, flatten, unflatten

log = logging.getLogger(__name__)


class ValidationError(ModelError):
    """Cross-validation cannot be run or summarised"""
    kind = "validation"


class Method(Enum):
    PCA = "pca"
    LRR = "lrr"


@dataclass
class CvEntry:
    """One dataset entry: skull landmarks, measured face, deformed reference face"""
    name: str
    skull: LandmarkSet
    true_face: TriMesh
    reference_face: TriMesh
    group: str = ""

    def __post_init__(self):
        if not self.group:
            self.group = self.name


@dataclass
class FoldFailure:
    group: str
    entries: List[str]
    method: str
    reason: str


@dataclass
class FoldOutcome:
    """Errors of the held-out entries of one fold"""
    group: str
    indices: List[int]
    # method -> (held-out, K) mean errors and (held-out, K, vertices) per-vertex errors
    errors: Dict[str, np.ndarray] = field(default_factory=dict)
    vertex_errors: Dict[str, np.ndarray] = field(default_factory=dict)
    failures: List[FoldFailure] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    models: Dict[str, object] = field(default_factory=dict)


@dataclass
class MethodSummary:
    """Error curve of one method and its optimum"""
    method: str
    mean: np.ndarray
    std: np.ndarray
    optimum: int
    optimum_mean: float
    optimum_std: float
    optimum_min: float
    optimum_max: float
    entries_used: int
    # reverse direction (true vertices -> predicted surface) at the optimum, per entry
    reverse_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reverse_median: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> Dict:
        return {
            "optimum_components": self.optimum,
            "optimum_mean": self.optimum_mean,
            "optimum_std": self.optimum_std,
            "optimum_min": self.optimum_min,
            "optimum_max": self.optimum_max,
            "entries_used": self.entries_used,
            "reverse_mean": float(np.mean(self.reverse_mean)) if self.reverse_mean.size else None,
            "reverse_median": float(np.mean(self.reverse_median)) if self.reverse_median.size else None,
        }


@dataclass
class CvReport:
    """
    Outcome of loo_crossval

    errors[method] is (n, K) with NaN rows for entries of failed folds;
    vertex_errors[method] is (n, K, V) likewise.
    """
    names: List[str]
    groups: List[str]
    max_components: int
    summaries: Dict[str, MethodSummary]
    errors: Dict[str, np.ndarray]
    vertex_errors: Dict[str, np.ndarray]
    failed_folds: List[FoldFailure] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    fold_models: Dict[str, Dict[str, object]] = field(default_factory=dict)

    @property
    def methods(self) -> List[str]:
        return list(self.summaries)

    def successful(self, method: str) -> np.ndarray:
        """Boolean mask of entries evaluated by method"""
        return ~np.isnan(self.errors[method][:, 0])

    def optimum_errors(self, method: str) -> np.ndarray:
        summary = self.summaries[method]
        return self.errors[method][self.successful(method), summary.optimum - 1]

    def optimum_fields(self, method: str) -> np.ndarray:
        """(entries used, V) per-vertex errors at the optimum"""
        summary = self.summaries[method]
        return self.vertex_errors[method][self.successful(method), summary.optimum - 1]

    def best_method(self) -> str:
        return min(self.summaries.values(), key=lambda s: (s.optimum_mean, s.method)).method


def _padded(curve: np.ndarray, k: int) -> np.ndarray:
    """Repeats the last row so a curve with fewer rows covers 1..k"""
    if len(curve) >= k:
        return curve[:k]
    return np.vstack([curve, np.repeat(curve[-1:], k - len(curve), axis=0)])


def _fit_fold(method: Method, tables, k: int, orthogonality: lrr.Orthogonality):
    if method is Method.PCA:
        return pca_model.fit_joint_pca(tables)
    return lrr.fit_lrr(tables, k, orthogonality)


def _fold_curve(method: Method, model, x0: np.ndarray, k: int) -> np.ndarray:
    if method is Method.PCA:
        return pca_model.face_curve(model, x0, min(k, model.n_components))
    return lrr.prediction_curve(model, x0, k)


def run_fold(entries: Sequence[CvEntry], held_out: List[int], methods: Sequence[Method], k: int,
             orthogonality: lrr.Orthogonality = lrr.Orthogonality.SCORES,
             keep_model: bool = False) -> FoldOutcome:
    """
    Fits every method without the held-out entries and scores their predictions

    Fit failures are recorded on the outcome instead of raised.
    """
    group = entries[held_out[0]].group
    outcome = FoldOutcome(group, list(held_out))
    training = [entry for i, entry in enumerate(entries) if i not in set(held_out)]
    tables = assemble([(e.skull, e.reference_face) for e in training], [e.name for e in training])

    for method in methods:
        try:
            model = _fit_fold(method, tables, k, orthogonality)
            errors, fields = [], []
            for index in held_out:
                entry = entries[index]
                x0 = flatten(entry.skull, tables.skull_layout) - tables.x_mean
                curve = _fold_curve(method, model, x0, k)
                if len(curve) < k:
                    outcome.notes.append(f"fold {group}: {method.value} supplies {len(curve)} "
                                         f"components, curve flat beyond")
                faces = np.vstack([unflatten(row, tables.y_mean, tables.face_layout)
                                   for row in _padded(curve, k)])
                per_vertex = surface_index(entry.true_face).distances(faces).reshape(k, -1)
                fields.append(per_vertex)
                errors.append(per_vertex.mean(axis=1))
        except (CranioError, np.linalg.LinAlgError) as e:
            names = [entries[i].name for i in held_out]
            outcome.failures.append(FoldFailure(group, names, method.value, str(e)))
            log.warning("fold failed", extra={"fields": {"group": group, "method": method.value,
                                                         "reason": str(e)}})
            continue
        outcome.errors[method.value] = np.vstack(errors)
        outcome.vertex_errors[method.value] = np.stack(fields)
        if keep_model:
            outcome.models[method.value] = model
    return outcome


def fold_groups(entries: Sequence[CvEntry]) -> List[List[int]]:
    """
    Entry indices of each fold, one fold per group in sorted group order

    Raises:
        ValidationError: fewer than two groups
    """
    groups = [entry.group for entry in entries]
    if len(set(groups)) < 2:
        raise ValidationError("All entries share one group")
    splitter = LeaveOneGroupOut()
    return [held_out.tolist()
            for _, held_out in splitter.split(np.zeros((len(groups), 1)), groups=groups)]


def _summarise(method: str, errors: np.ndarray) -> MethodSummary:
    used = errors[~np.isnan(errors[:, 0])]
    if len(used) == 0:
        raise ValidationError("Every fold failed", method=method)
    mean, std = used.mean(axis=0), used.std(axis=0)
    # argmin keeps the first minimum, i.e. the smallest count on ties
    best = int(np.argmin(mean))
    column = used[:, best]
    return MethodSummary(method, mean, std, best + 1, float(mean[best]), float(std[best]),
                         float(column.min()), float(column.max()), len(used))


def loo_crossval(entries: Sequence[CvEntry], methods: Sequence = (Method.PCA, Method.LRR),
                 max_components: Optional[int] = None, jobs: int = 1,
                 orthogonality: lrr.Orthogonality = lrr.Orthogonality.SCORES,
                 keep_models: bool = False) -> CvReport:
    """
    Leave-one-group-out cross-validation of the face predictors

    Args:
        entries: Dataset entries sharing skull and face layouts
        methods: Predictors to evaluate
        max_components: K, the largest component count (default n - 2)
        jobs: Parallel folds
        orthogonality: LRR latent vector orthogonalisation
        keep_models: Keep each fold's fitted models on the report

    Returns:
        CvReport with curves over 1..K, optima and per-vertex errors

    Raises:
        ValidationError: fewer than 3 entries, K outside 1..n-2, or every
            fold of a method failed
    """
    n = len(entries)
    if n < 3:
        raise ValidationError(f"Cross-validation needs at least 3 entries, got {n}")
    k = n - 2 if max_components is None else int(max_components)
    if not 1 <= k <= n - 2:
        raise ValidationError(f"max_components must lie in 1..{n - 2}, got {k}")
    methods = [Method(m) for m in methods]
    folds = fold_groups(entries)
    log.info("cross-validation", extra={"fields": {"entries": n, "folds": len(folds),
                                                   "methods": ",".join(m.value for m in methods),
                                                   "max_components": k}})

    outcomes = Parallel(n_jobs=jobs)(
        delayed(run_fold)(entries, held_out, methods, k, orthogonality, keep_models)
        for held_out in folds
    )

    n_vertices = entries[0].reference_face.n_vertices
    errors = {m.value: np.full((n, k), np.nan) for m in methods}
    vertex_errors = {m.value: np.full((n, k, n_vertices), np.nan) for m in methods}
    failures, notes, models = [], [], {}
    for outcome in outcomes:
        failures.extend(outcome.failures)
        notes.extend(outcome.notes)
        if keep_models:
            models[outcome.group] = outcome.models
        for method, block in outcome.errors.items():
            for row, index in enumerate(outcome.indices):
                errors[method][index] = block[row]
                vertex_errors[method][index] = outcome.vertex_errors[method][row]

    summaries = {}
    for method in errors:
        summary = _summarise(method, errors[method])
        summary.reverse_mean, summary.reverse_median = _reverse_errors(
            entries, folds, errors[method], Method(method), k, summary.optimum, orthogonality, jobs)
        summaries[method] = summary
        log.info("optimum", extra={"fields": {"method": method, "components": summary.optimum,
                                              "mean": round(summary.optimum_mean, 6),
                                              "std": round(summary.optimum_std, 6)}})
    return CvReport([e.name for e in entries], [e.group for e in entries], k, summaries,
                    errors, vertex_errors, failures, notes, models)


def reverse_fold(entries: Sequence[CvEntry], held_out: List[int], method: Method, k: int,
                 components: int, orthogonality: lrr.Orthogonality = lrr.Orthogonality.SCORES
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean and median distance from the held-out true face vertices to the
    face predicted with the given component count
    """
    held = set(held_out)
    training = [entry for i, entry in enumerate(entries) if i not in held]
    tables = assemble([(e.skull, e.reference_face) for e in training], [e.name for e in training])
    model = _fit_fold(method, tables, k, orthogonality)
    means, medians = [], []
    for index in held_out:
        entry = entries[index]
        x0 = flatten(entry.skull, tables.skull_layout) - tables.x_mean
        row = _padded(_fold_curve(method, model, x0, k), k)[components - 1]
        predicted = TriMesh(unflatten(row, tables.y_mean, tables.face_layout),
                            entry.reference_face.triangles, check_areas=False)
        distances = surface_index(predicted).distances(entry.true_face.vertices)
        means.append(distances.mean())
        medians.append(np.median(distances))
    return np.array(means), np.array(medians)


def _reverse_errors(entries: Sequence[CvEntry], folds: List[List[int]], errors: np.ndarray,
                    method: Method, k: int, optimum: int, orthogonality: lrr.Orthogonality,
                    jobs: int) -> Tuple[np.ndarray, np.ndarray]:
    """Reverse errors at the optimum for every entry of the successful folds"""
    done = [held_out for held_out in folds if not np.isnan(errors[held_out[0], 0])]
    blocks = Parallel(n_jobs=jobs)(
        delayed(reverse_fold)(entries, held_out, method, k, optimum, orthogonality)
        for held_out in done
    )
    order = np.argsort([i for held_out in done for i in held_out], kind="stable")
    means = np.concatenate([b[0] for b in blocks])[order]
    medians = np.concatenate([b[1] for b in blocks])[order]
    return means, medians


def local_error_fields(fields) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-vertex mean and standard deviation of error fields

    Args:
        fields: (entries, V) per-vertex errors, one row per successful fold entry

    Returns:
        (mean field, std field); std uses the population convention

    Raises:
        ValidationError: fewer than 2 rows
    """
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim != 2 or len(fields) < 2:
        raise ValidationError("Standard deviation field needs at least 2 successful entries",
                              entries=len(fields) if fields.ndim else 0)
    return fields.mean(axis=0), fields.std(axis=0)


@dataclass
class Histogram:
    """Counts over [i * width, (i + 1) * width)"""
    width: float
    counts: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.arange(len(self.counts) + 1) * self.width

    def to_frame(self) -> pd.DataFrame:
        edges = self.edges
        return pd.DataFrame({"lower": edges[:-1], "upper": edges[1:], "count": self.counts})


def error_histogram(errors, bin_width: float) -> Histogram:
    """
    Fixed-width histogram of individual errors, bins starting at 0

    Raises:
        ValidationError: no errors, negative or non-finite errors, or a
            non-positive bin width
    """
    if not bin_width > 0:
        raise ValidationError(f"Bin width must be positive, got {bin_width}")
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise ValidationError("No errors to bin")
    if not np.all(np.isfinite(errors)) or np.any(errors < 0):
        raise ValidationError("Errors must be finite and non-negative")
    bins = np.floor(errors / bin_width).astype(np.int64)
    return Histogram(float(bin_width), np.bincount(bins))


def regional_error(error_field, vertex_mask) -> float:
    """Mean of a per-vertex error field over a face region"""
    error_field = np.asarray(error_field, dtype=np.float64).ravel()
    vertex_mask = np.asarray(vertex_mask, dtype=bool).ravel()
    if vertex_mask.shape != error_field.shape:
        raise ValidationError("Region mask and error field differ in length")
    if not vertex_mask.any():
        raise ValidationError("Region is empty")
    return float(error_field[vertex_mask].mean())


def distance_map(predicted: TriMesh, true_face: TriMesh) -> np.ndarray:
    """Per-vertex distance from a predicted face to the measured surface"""
    return surface_index(true_face).distances(predicted.vertices)


# ============== report files ==============

def write_report(report: CvReport, directory: str, reference: TriMesh,
                 bin_width: float = 0.25) -> None:
    """
    Writes summary.json, curves.csv, hist.csv, fields.npz and the local
    mean/std distance maps of the best method
    """
    os.makedirs(directory, exist_ok=True)
    summary = {
        "entries": len(report.names),
        "max_components": report.max_components,
        "best_method": report.best_method(),
        "methods": {name: s.to_dict() for name, s in report.summaries.items()},
        "failed_folds": [vars(f) for f in report.failed_folds],
        "notes": report.notes,
    }
    with open(os.path.join(directory, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    counts = np.arange(1, report.max_components + 1)
    pd.concat([
        pd.DataFrame({"method": name, "components": counts, "mean": s.mean, "std": s.std})
        for name, s in report.summaries.items()
    ]).to_csv(os.path.join(directory, "curves.csv"), index=False, float_format="%.10g")

    pd.concat([
        error_histogram(report.optimum_errors(name), bin_width).to_frame().assign(method=name)
        for name in report.summaries
    ])[["method", "lower", "upper", "count"]].to_csv(
        os.path.join(directory, "hist.csv"), index=False, float_format="%.10g")

    arrays = {}
    for name in report.summaries:
        arrays[f"{name}_errors"] = report.errors[name]
        fields = report.optimum_fields(name)
        if len(fields) < 2:
            log.warning("local fields skipped", extra={"fields": {"method": name,
                                                                  "entries": len(fields)}})
            continue
        arrays[f"{name}_local_mean"], arrays[f"{name}_local_std"] = local_error_fields(fields)
    write_npz(os.path.join(directory, "fields.npz"), arrays)

    best = report.best_method()
    if f"{best}_local_mean" in arrays:
        if len(arrays[f"{best}_local_mean"]) != reference.n_vertices:
            raise ValidationError("Reference mesh does not match the face layout",
                                  vertices=reference.n_vertices)
        save_mesh(reference, os.path.join(directory, "local_mean.ply"),
                  vertex_quality=arrays[f"{best}_local_mean"])
        save_mesh(reference, os.path.join(directory, "local_std.ply"),
                  vertex_quality=arrays[f"{best}_local_std"])
    log.info("report written", extra={"fields": {"directory": directory, "best": best}})


def render_summary(directory: str) -> str:
    """
    Plain-text table of a report directory's summary.json and curves.csv

    Raises:
        MissingFileError: either file is absent
        FormatError: a file does not parse or lacks a field
    """
    path = os.path.join(directory, "summary.json")
    try:
        with open(path, "r", encoding="utf-8") as f:
            summary = json.load(f)
        curves = pd.read_csv(os.path.join(directory, "curves.csv"))
    except FileNotFoundError as e:
        raise MissingFileError(f"Report file not found: {e.filename}", path=e.filename)
    except ValueError as e:
        raise FormatError(f"Malformed report: {e}", path=directory)
    try:
        return _summary_lines(summary, curves)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise FormatError(f"Report field missing or malformed: {e}", path=directory)


def _summary_lines(summary: Dict, curves: pd.DataFrame) -> str:
    lines = [f"entries: {summary['entries']}   max components: {summary['max_components']}   "
             f"best: {summary['best_method']}", ""]
    lines.append(f"{'method':<8}{'optimum':>9}{'mean':>10}{'std':>10}{'min':>10}{'max':>10}")
    for name, record in summary["methods"].items():
        lines.append(f"{name:<8}{record['optimum_components']:>9}{record['optimum_mean']:>10.4f}"
                     f"{record['optimum_std']:>10.4f}{record['optimum_min']:>10.4f}"
                     f"{record['optimum_max']:>10.4f}")
    lines.append("")
    table = curves.pivot(index="components", columns="method", values="mean")
    lines.append("components " + "".join(f"{name:>10}" for name in table.columns))
    for count, row in table.iterrows():
        lines.append(f"{count:>10} " + "".join(f"{value:>10.4f}" for value in row))
    for failure in summary["failed_folds"]:
        lines.append(f"failed fold {failure['group']} ({failure['method']}): {failure['reason']}")
    return "\n".join(lines)


if __name__ == "__main__":
    histogram = error_histogram([1.2, 1.3, 0.4, 2.05], 0.5)
    for lower, upper, count in histogram.to_frame().itertuples(index=False):
        print(f"📊 [{lower:.1f}, {upper:.1f}) {'#' * int(count)}")
