import numpy as np
import pytest

from errors import LayoutError
from lrr import (LrrError, Orthogonality, fit_lrr, load_lrr, predict_centered, predict_summed,
                 prediction_curve, save_lrr, score_orthogonality, truncate)
from shape_table import CoordinateLayout, ShapeTablePair


def make_tables(x, y):
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    return ShapeTablePair(x, y, np.zeros(x.shape[1]), np.zeros(y.shape[1]),
                          CoordinateLayout.for_mesh(x.shape[1] // 3),
                          CoordinateLayout.for_mesh(y.shape[1] // 3))


@pytest.fixture
def tables(rng):
    return make_tables(rng.normal(size=(12, 9)), rng.normal(size=(12, 6)))


def test_full_rank_model_is_least_squares(tables):
    model = fit_lrr(tables, 9)
    assert model.r == 9 and not model.warnings
    ols, *_ = np.linalg.lstsq(tables.X, tables.Y, rcond=None)
    np.testing.assert_allclose(model.coefficients, ols, rtol=1e-7, atol=1e-9)


def test_assembled_and_summed_predictions_agree(rng):
    for _ in range(20):
        tables = make_tables(rng.normal(size=(12, 9)), rng.normal(size=(12, 6)))
        model = fit_lrr(tables, int(rng.integers(1, 10)))
        x0 = rng.normal(size=9)
        np.testing.assert_allclose(predict_centered(model, x0), predict_summed(model, x0),
                                   rtol=1e-9, atol=1e-10)


def test_truncated_model_regresses_on_its_scores(tables):
    model = fit_lrr(tables, 4)
    coefficients, *_ = np.linalg.lstsq(model.scores, tables.Y, rcond=None)
    np.testing.assert_allclose(tables.X @ model.coefficients, model.scores @ coefficients,
                               rtol=1e-8, atol=1e-8)


def test_scores_are_orthogonal(tables):
    model = fit_lrr(tables, 6)
    assert score_orthogonality(model) < 1e-8
    np.testing.assert_allclose(model.scores, tables.X @ model.latent_vectors.T, atol=1e-12)


def test_euclidean_vectors_are_orthonormal(tables):
    model = fit_lrr(tables, 6, Orthogonality.EUCLIDEAN)
    assert model.orthogonality is Orthogonality.EUCLIDEAN
    np.testing.assert_allclose(model.latent_vectors @ model.latent_vectors.T, np.eye(6), atol=1e-10)


def test_rank_exhaustion_truncates_with_a_warning(rng):
    x = rng.normal(size=(12, 3)) @ rng.normal(size=(3, 9))
    model = fit_lrr(make_tables(x, rng.normal(size=(12, 6))), 9)
    assert model.r == 3
    assert len(model.warnings) == 1
    assert "exhausted after 3" in model.warnings[0]


def test_prediction_curve_is_nested(tables, rng):
    model = fit_lrr(tables, 5)
    x0 = rng.normal(size=9)
    curve = prediction_curve(model, x0)
    assert curve.shape == (5, 6)
    np.testing.assert_allclose(curve[-1], predict_centered(model, x0), rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(curve[1], predict_centered(truncate(model, 2), x0),
                               rtol=1e-9, atol=1e-10)
    with pytest.raises(LrrError):
        truncate(model, 6)


def test_wrong_skull_dimension(tables):
    with pytest.raises(LayoutError):
        predict_centered(fit_lrr(tables, 2), np.zeros(8))


@pytest.mark.parametrize("r", [0, -3])
def test_component_count_must_be_positive(tables, r):
    with pytest.raises(LrrError) as info:
        fit_lrr(tables, r)
    assert info.value.exit_code == 7


def test_zero_skull_table_is_rejected(rng):
    with pytest.raises(LrrError):
        fit_lrr(make_tables(np.zeros((5, 9)), rng.normal(size=(5, 6))), 2)


def test_archive_round_trip_and_tamper_check(tmp_path, tables):
    model = fit_lrr(tables, 3)
    path = str(tmp_path / "model.npz")
    save_lrr(model, path)
    loaded = load_lrr(path)
    np.testing.assert_array_equal(loaded.coefficients, model.coefficients)
    assert loaded.orthogonality is Orthogonality.SCORES

    model.coefficients = model.coefficients + 1.0
    save_lrr(model, path)
    with pytest.raises(LrrError):
        load_lrr(path)
    assert load_lrr(path, verify=False).r == 3


def test_shifting_the_raw_skulls_leaves_the_model_unchanged(rng):
    x, y = rng.normal(size=(12, 9)), rng.normal(size=(12, 6))
    model = fit_lrr(make_tables(x, y), 5)
    shifted = fit_lrr(make_tables(x + rng.normal(size=9) * 50.0, y), 5)
    np.testing.assert_allclose(shifted.coefficients, model.coefficients, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(shifted.latent_vectors, model.latent_vectors, atol=1e-9)


@pytest.mark.parametrize("orthogonality", list(Orthogonality))
def test_smaller_fit_is_the_truncated_larger_fit(tables, orthogonality):
    for r in range(1, 8):
        small, large = fit_lrr(tables, r, orthogonality), fit_lrr(tables, r + 1, orthogonality)
        nested = truncate(large, r)
        np.testing.assert_array_equal(nested.latent_vectors, small.latent_vectors)
        np.testing.assert_allclose(nested.coefficients, small.coefficients, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("orthogonality", list(Orthogonality))
def test_random_instances_against_the_score_regression(rng, orthogonality):
    checked = 0
    for i in range(20):
        tables = make_tables(rng.normal(size=(12, 9)), rng.normal(size=(12, 7)))
        model = fit_lrr(tables, 1 + i % 9, orthogonality)
        x0 = rng.normal(size=9)
        assembled, summed = predict_centered(model, x0), predict_summed(model, x0)
        assert np.linalg.norm(assembled - summed) <= 1e-10 * np.linalg.norm(summed)
        if score_orthogonality(model) <= 1e-8:
            checked += 1
            weights, *_ = np.linalg.lstsq(model.scores, tables.Y, rcond=None)
            np.testing.assert_allclose(assembled, (model.latent_vectors @ x0) @ weights,
                                       rtol=1e-8, atol=1e-8)
    assert checked >= 3
