import json
import os

import numpy as np
import pytest

from errors import MissingFileError
from lrr import fit_lrr
from pca_model import fit_joint_pca
from shape_table import assemble
from synth import Dataset, SynthSpec, generate
from validation import (CvEntry, ValidationError, distance_map, error_histogram, local_error_fields,
                        loo_crossval, regional_error, render_summary, write_report)


# ---------- loo_crossval ----------

def test_noiseless_linear_data_is_predicted_exactly(noiseless_dataset):
    report = loo_crossval(noiseless_dataset.entries(), methods=["lrr"])
    summary = report.summaries["lrr"]
    assert report.max_components == 10
    assert summary.entries_used == 12
    assert summary.optimum >= 3
    assert summary.optimum_mean <= 1e-6
    assert not report.failed_folds


def test_curves_cover_every_component_count(small_dataset):
    report = loo_crossval(small_dataset.entries(), max_components=4)
    assert report.methods == ["pca", "lrr"]
    for method in report.methods:
        assert report.errors[method].shape == (10, 4)
        assert report.vertex_errors[method].shape == (10, 4, 60)
        assert report.successful(method).all()
        summary = report.summaries[method]
        assert 1 <= summary.optimum <= 4
        assert summary.optimum_mean == pytest.approx(report.errors[method][:, summary.optimum - 1].mean())
        assert summary.optimum_std == pytest.approx(report.errors[method][:, summary.optimum - 1].std())
        assert len(summary.reverse_mean) == 10
    assert report.best_method() in report.methods


def test_held_out_entry_never_reaches_the_fit(small_dataset):
    entries = small_dataset.entries()
    report = loo_crossval(entries, methods=["lrr"], max_components=3, keep_models=True)
    training = entries[1:]
    reduced = assemble([(e.skull, e.reference_face) for e in training], [e.name for e in training])
    expected = fit_lrr(reduced, 3)
    fold_model = report.fold_models[entries[0].group]["lrr"]
    assert np.array_equal(fold_model.coefficients, expected.coefficients)
    assert np.array_equal(fold_model.x_mean, expected.x_mean)


def test_both_halves_of_a_pair_are_held_out_together():
    dataset = generate(SynthSpec(seed=2, n=10, latent_dim=2, noise_sigma=0.2, midplane=3, lateral=5,
                                 face_vertices=50, pairs=True))
    report = loo_crossval(dataset.entries(), methods=["lrr"], max_components=2, keep_models=True)
    assert sorted(report.fold_models) == [f"ind{i:03d}" for i in range(5)]
    assert report.fold_models["ind000"]["lrr"].scores.shape[0] == 8
    assert report.groups[:2] == ["ind000", "ind000"]


@pytest.mark.parametrize("max_components", [0, 9])
def test_component_range_is_checked(small_dataset, max_components):
    with pytest.raises(ValidationError) as info:
        loo_crossval(small_dataset.entries(), max_components=max_components)
    assert info.value.exit_code == 7


def test_too_few_entries_or_groups(small_dataset):
    entries = small_dataset.entries()
    with pytest.raises(ValidationError):
        loo_crossval(entries[:2])
    same = [CvEntry(e.name, e.skull, e.true_face, e.reference_face, group="one") for e in entries]
    with pytest.raises(ValidationError):
        loo_crossval(same)


def test_parallel_folds_match_serial(small_dataset):
    serial = loo_crossval(small_dataset.entries(), max_components=3, jobs=1)
    parallel = loo_crossval(small_dataset.entries(), max_components=3, jobs=2)
    for method in serial.methods:
        np.testing.assert_allclose(parallel.errors[method], serial.errors[method], rtol=1e-12)
        assert parallel.summaries[method].optimum == serial.summaries[method].optimum


# ---------- error summaries ----------

def test_histogram_bins_start_at_zero():
    histogram = error_histogram([1.2, 1.3, 0.4, 2.05], 0.5)
    assert histogram.counts.tolist() == [1, 0, 2, 0, 1]
    np.testing.assert_allclose(histogram.edges, [0.0, 0.5, 1.0, 1.5, 2.0, 2.5])
    assert error_histogram([1.2], 0.5).counts.tolist() == [0, 0, 1]
    assert histogram.to_frame()["count"].sum() == 4


@pytest.mark.parametrize("errors, width", [([], 0.5), ([1.0, -0.1], 0.5), ([1.0], 0.0),
                                           ([np.nan], 0.5)])
def test_histogram_rejects_bad_input(errors, width):
    with pytest.raises(ValidationError):
        error_histogram(errors, width)


def test_local_fields_use_population_std():
    f, g = np.array([1.0, 2.0, 4.0]), np.array([3.0, 2.0, 0.0])
    mean, std = local_error_fields([f, g])
    np.testing.assert_allclose(mean, [2.0, 2.0, 2.0])
    np.testing.assert_allclose(std, np.abs(f - g) / 2.0)
    _, flat = local_error_fields([f, f, f])
    np.testing.assert_array_equal(flat, 0.0)
    with pytest.raises(ValidationError):
        local_error_fields([f])


def test_regional_error():
    field = [1.0, 2.0, 3.0, 4.0]
    assert regional_error(field, [True, False, True, False]) == 2.0
    with pytest.raises(ValidationError):
        regional_error(field, [False] * 4)
    with pytest.raises(ValidationError):
        regional_error(field, [True] * 3)


def test_distance_map(unit_square):
    lifted = unit_square.with_vertices(unit_square.vertices + (0.0, 0.0, 1.0))
    np.testing.assert_allclose(distance_map(lifted, unit_square), 1.0)


# ---------- report files ----------

def test_report_files_and_rendering(tmp_path, small_dataset):
    report = loo_crossval(small_dataset.entries(), max_components=3)
    out = str(tmp_path / "report")
    write_report(report, out, small_dataset.reference, bin_width=0.25)
    for name in ("summary.json", "curves.csv", "hist.csv", "fields.npz", "local_mean.ply",
                 "local_std.ply"):
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "summary.json")) as f:
        summary = json.load(f)
    assert summary["entries"] == 10
    assert set(summary["methods"]) == {"pca", "lrr"}
    text = render_summary(out)
    assert f"best: {report.best_method()}" in text
    with pytest.raises(MissingFileError):
        render_summary(str(tmp_path / "absent"))


def test_every_fold_model_matches_a_fit_without_its_group(small_dataset):
    entries = small_dataset.entries()
    report = loo_crossval(entries, max_components=3, keep_models=True)
    for index, entry in enumerate(entries):
        training = entries[:index] + entries[index + 1:]
        reduced = assemble([(e.skull, e.reference_face) for e in training], [e.name for e in training])
        models = report.fold_models[entry.group]
        assert np.array_equal(models["lrr"].coefficients, fit_lrr(reduced, 3).coefficients)
        pca = fit_joint_pca(reduced)
        assert np.array_equal(models["pca"].components, pca.components)
        assert np.array_equal(models["pca"].eigenvalues, pca.eigenvalues)


def test_folds_agree_with_physically_reduced_datasets(small_dataset):
    entries = small_dataset.entries()
    report = loo_crossval(entries, methods=["lrr"], max_components=3, keep_models=True)
    for held_out in np.random.default_rng(8).choice(len(entries), size=3, replace=False):
        reduced = Dataset(*[[item for i, item in enumerate(column) if i != held_out]
                            for column in (small_dataset.names, small_dataset.groups,
                                           small_dataset.skulls, small_dataset.faces)],
                          small_dataset.skull_template, small_dataset.reference)
        assert entries[held_out].name not in reduced.names
        training = reduced.entries()
        tables = assemble([(e.skull, e.reference_face) for e in training], reduced.names)
        fold = report.fold_models[entries[held_out].group]["lrr"]
        expected = fit_lrr(tables, 3)
        assert np.array_equal(fold.coefficients, expected.coefficients)
        assert np.array_equal(fold.scores, expected.scores)


def test_noiseless_recovery_at_the_latent_dimension():
    dataset = generate(SynthSpec(seed=11, n=30, latent_dim=6, noise_sigma=0.0, midplane=6,
                                 lateral=10, face_vertices=60))
    report = loo_crossval(dataset.entries(), methods=["lrr"], max_components=6, jobs=2)
    errors = report.errors["lrr"]
    assert report.successful("lrr").all()
    assert errors[:, 5].mean() <= 1e-6
    assert errors[:, 4].mean() > 1e-3
