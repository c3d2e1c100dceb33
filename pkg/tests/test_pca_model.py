import numpy as np
import pytest

from errors import FormatError, LayoutError, ModelError
from pca_model import (FORMAT_VERSION, FitWeights, PcaModelError, best_fit_weights, decode, encode,
                       face_curve, fit_joint_pca, load_pca, reconstruct_face, save_pca,
                       sign_convention, write_archive, write_npz)
from shape_table import CoordinateLayout, ShapeTablePair


def random_tables(rng, n=10, skull_points=3, face_points=10):
    raw = rng.normal(size=(n, 3 * (skull_points + face_points)))
    centred = raw - raw.mean(axis=0)
    p = 3 * skull_points
    return ShapeTablePair(centred[:, :p], centred[:, p:], rng.normal(size=p),
                          rng.normal(size=centred.shape[1] - p),
                          CoordinateLayout.for_mesh(skull_points), CoordinateLayout.for_mesh(face_points))


@pytest.fixture
def tables(rng):
    return random_tables(rng)


@pytest.fixture
def model(tables):
    return fit_joint_pca(tables)


def test_components_are_orthonormal_and_ordered(model):
    assert model.n_components == 9
    assert np.all(np.diff(model.eigenvalues) <= 0)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(9), atol=1e-12)
    assert (model.skull_parts.shape, model.face_parts.shape) == ((9, 9), (9, 30))


def test_matches_dense_eigensolver(tables, model):
    z = np.hstack([tables.X, tables.Y])
    values, vectors = np.linalg.eigh(z.T @ z)
    values, vectors = values[::-1][:9], vectors[:, ::-1][:, :9]
    np.testing.assert_allclose(model.eigenvalues, values, rtol=1e-9)
    np.testing.assert_allclose(model.components, sign_convention(vectors.T), atol=1e-8)


def test_sign_convention_makes_the_largest_entry_positive():
    flipped = sign_convention([[0.1, -0.9, 0.3], [0.5, 0.2, 0.0]])
    np.testing.assert_array_equal(flipped, [[-0.1, 0.9, -0.3], [0.5, 0.2, 0.0]])


def test_encode_decode_reproduces_training_rows(tables, model):
    for row in np.hstack([tables.X, tables.Y]):
        np.testing.assert_allclose(decode(model, encode(model, row)), row, atol=1e-10)
    with pytest.raises(LayoutError):
        encode(model, np.zeros(5))


def test_best_fit_matches_the_recursion(model, rng):
    for _ in range(100):
        x0 = rng.normal(size=model.p)
        m = int(rng.integers(0, model.n_components + 1))
        residual, expected = x0.copy(), []
        for v in model.skull_parts[:m]:
            expected.append(residual @ v / (v @ v))
            residual = residual - expected[-1] * v
        weights = best_fit_weights(model, x0, m)
        np.testing.assert_allclose(weights.b, expected, atol=1e-10)
        assert weights.residual_norm == pytest.approx(np.linalg.norm(residual), abs=1e-10)


def test_best_fit_input_errors(model):
    with pytest.raises(PcaModelError) as info:
        best_fit_weights(model, np.zeros(model.p), model.n_components + 1)
    assert info.value.exit_code == 7
    with pytest.raises(LayoutError):
        best_fit_weights(model, np.zeros(model.p + 1), 1)


def test_face_curve_rows_are_prefix_reconstructions(model, rng):
    x0 = rng.normal(size=model.p)
    curve = face_curve(model, x0, 6)
    full = best_fit_weights(model, x0, 6).b
    for m in range(1, 7):
        prediction = reconstruct_face(model, FitWeights(full[:m], 0.0))
        np.testing.assert_allclose(curve[m - 1], prediction.centered, atol=1e-12)
        np.testing.assert_allclose(prediction.positions.ravel(), prediction.centered + model.y_mean,
                                   atol=1e-12)


def test_zero_variance_is_rejected(rng):
    tables = random_tables(rng)
    tables.X[:] = 0.0
    tables.Y[:] = 0.0
    with pytest.raises(PcaModelError):
        fit_joint_pca(tables)


def test_archive_round_trip_is_deterministic(tmp_path, model):
    model.face_triangles = np.array([[0, 1, 2], [1, 3, 2]])
    first, second = tmp_path / "a.npz", tmp_path / "b.npz"
    save_pca(model, str(first))
    save_pca(model, str(second))
    assert first.read_bytes() == second.read_bytes()
    loaded = load_pca(str(first))
    np.testing.assert_array_equal(loaded.components, model.components)
    np.testing.assert_array_equal(loaded.face_triangles, model.face_triangles)
    assert loaded.skull_layout.ids == model.skull_layout.ids


def test_archive_kind_and_version_are_checked(tmp_path, model):
    other = str(tmp_path / "lrr.npz")
    write_archive(other, "lrr", {}, model.skull_layout, model.face_layout)
    with pytest.raises(ModelError):
        load_pca(other)
    future = str(tmp_path / "future.npz")
    write_npz(future, {"format_version": np.array(FORMAT_VERSION + 1), "kind": np.array("pca"),
                       "layouts": np.array("{}")})
    with pytest.raises(FormatError):
        load_pca(future)


def test_scaling_the_tables_scales_the_eigenvalues(tables, model):
    scaled = ShapeTablePair(3.0 * tables.X, 3.0 * tables.Y, tables.x_mean, tables.y_mean,
                            tables.skull_layout, tables.face_layout)
    stretched = fit_joint_pca(scaled)
    np.testing.assert_allclose(stretched.eigenvalues, 9.0 * model.eigenvalues, rtol=1e-9)
    np.testing.assert_allclose(stretched.components, model.components, atol=1e-8)
