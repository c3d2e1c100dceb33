import numpy as np
import pytest

from errors import FormatError, LayoutError, MissingFileError
from lrr import fit_lrr
from shape_table import CoordinateLayout, assemble, flatten
from synth import (SynthError, SynthSpec, draw_latents, generate, generate_levels, load_dataset,
                   oracle_regression, write_dataset)
from validation import loo_crossval


def skull_table(dataset):
    layout = CoordinateLayout.from_landmarks(dataset.skull_template)
    return np.vstack([flatten(s, layout) for s in dataset.skulls])


def test_noiseless_tables_have_latent_rank(noiseless_dataset):
    x = skull_table(noiseless_dataset)
    y = np.vstack([f.vertices.ravel() for f in noiseless_dataset.faces])
    for table in (x, y):
        centred = table - table.mean(axis=0)
        assert np.linalg.matrix_rank(centred, tol=1e-9 * np.abs(centred).max()) == 3


def test_same_seed_same_dataset(small_spec):
    first, second = generate(small_spec), generate(small_spec)
    np.testing.assert_array_equal(skull_table(first), skull_table(second))
    np.testing.assert_array_equal(first.faces[4].vertices, second.faces[4].vertices)
    other = generate(SynthSpec(**{**small_spec.to_dict(), "seed": 4}))
    assert not np.array_equal(skull_table(first), skull_table(other))


def test_layout_of_generated_entries(small_dataset):
    assert small_dataset.names[:2] == ["entry000", "entry001"]
    assert small_dataset.groups == small_dataset.names
    for skull in small_dataset.skulls:
        assert skull.counts() == (4, 6)
        np.testing.assert_array_equal(skull.positions()[skull.midplane_mask(), 0], 0.0)
    face = small_dataset.faces[0]
    assert face.n_vertices == 60
    np.testing.assert_array_equal(face.triangles, small_dataset.reference.triangles)
    truth = small_dataset.ground_truth
    assert truth["latents"].shape == (10, 3)
    assert truth["skull_loadings"].shape == (3, 26)
    assert truth["face_loadings"].shape == (3, 180)


def test_pairs_mode_names_and_groups():
    dataset = generate(SynthSpec(n=6, latent_dim=2, midplane=3, lateral=4, face_vertices=40,
                                 pairs=True))
    assert dataset.names == ["ind000_R", "ind000_L", "ind001_R", "ind001_L", "ind002_R", "ind002_L"]
    assert dataset.groups == ["ind000", "ind000", "ind001", "ind001", "ind002", "ind002"]


@pytest.mark.parametrize("changes", [
    {"n": 2},
    {"latent_dim": 9},
    {"latent_dim": 0},
    {"noise_sigma": -0.1},
    {"decay": 0.0},
    {"midplane": 0, "lateral": 0},
    {"pairs": True, "n": 9},
])
def test_invalid_settings(small_spec, changes):
    with pytest.raises(SynthError):
        generate(SynthSpec(**{**small_spec.to_dict(), **changes}))


def test_unknown_setting_is_a_format_error(small_spec):
    with pytest.raises(FormatError):
        SynthSpec.from_dict({**small_spec.to_dict(), "colour": "blue"})


def test_latent_covariance_follows_the_decay():
    spec = SynthSpec(n=10000, latent_dim=3, decay=0.5)
    covariance = np.cov(draw_latents(spec), rowvar=False)
    np.testing.assert_allclose(np.diag(covariance), [1.0, 0.5, 0.25], rtol=0.05)
    assert np.max(np.abs(covariance - np.diag(np.diag(covariance)))) < 0.05


def test_levels_share_faces_and_latents(small_spec):
    levels = generate_levels(small_spec, ((2, 3), (4, 6)))
    assert sorted(levels) == [13, 26]
    coarse, fine = levels[13], levels[26]
    assert coarse.faces is fine.faces
    np.testing.assert_array_equal(coarse.ground_truth["latents"], fine.ground_truth["latents"])
    assert coarse.skull_template.ids == ["M000", "M001", "L000", "L001", "L002"]
    assert coarse.skulls[0].get("L002").position == fine.skulls[0].get("L002").position


def test_oracle_matches_full_rank_lrr(small_dataset):
    tables = assemble([(s, f) for s, f in zip(small_dataset.skulls, small_dataset.faces)])
    model = fit_lrr(tables, tables.n - 1)
    oracle = oracle_regression(tables.X, tables.Y)
    np.testing.assert_allclose(tables.X.T @ (tables.X @ oracle), tables.X.T @ tables.Y,
                               rtol=1e-8, atol=1e-6)
    fitted, expected = tables.X @ model.coefficients, tables.X @ oracle
    assert np.linalg.norm(fitted - expected) <= 1e-6 * np.linalg.norm(expected)


def test_dataset_directory_round_trip(tmp_path, small_dataset):
    write_dataset(small_dataset, str(tmp_path))
    loaded = load_dataset(str(tmp_path))
    assert loaded.names == small_dataset.names
    assert loaded.spec == small_dataset.spec
    np.testing.assert_allclose(skull_table(loaded), skull_table(small_dataset), atol=1e-9)
    np.testing.assert_allclose(loaded.faces[3].vertices, small_dataset.faces[3].vertices, atol=1e-9)
    np.testing.assert_array_equal(loaded.ground_truth["latents"], small_dataset.ground_truth["latents"])


def test_dataset_loading_errors(tmp_path, small_dataset):
    with pytest.raises(MissingFileError):
        load_dataset(str(tmp_path / "absent"))
    write_dataset(small_dataset, str(tmp_path))
    (tmp_path / "skulls" / "entry002.json").write_text('[{"id": "X", "position": [0, 0, 0]}]')
    with pytest.raises(LayoutError):
        load_dataset(str(tmp_path))


# ---------- benchmark properties (multi-seed, full size) ----------

BENCHMARK_SEEDS = range(10)


@pytest.fixture(scope="module")
def benchmark_summaries():
    """
    Method summaries per seed and skull coordinate count

    One cross-validation per level; only the full template also runs the
    PCA method. Reports are dropped as soon as they are summarised.
    """
    results = []
    for seed in BENCHMARK_SEEDS:
        levels = generate_levels(SynthSpec(seed=seed))
        finest = max(levels)
        results.append({p: loo_crossval(levels[p].entries(),
                                        methods=["pca", "lrr"] if p == finest else ["lrr"],
                                        jobs=-1).summaries
                        for p in sorted(levels)})
    return results


@pytest.mark.slow
def test_lrr_beats_the_pca_method(benchmark_summaries):
    wins = 0
    for per_level in benchmark_summaries:
        summaries = per_level[max(per_level)]
        wins += summaries["lrr"].optimum_mean <= summaries["pca"].optimum_mean
    assert wins >= 8


@pytest.mark.slow
def test_error_curve_shapes(benchmark_summaries):
    lrr_rises = pca_flat = 0
    for per_level in benchmark_summaries:
        summaries = per_level[max(per_level)]
        lrr_curve, pca_curve = summaries["lrr"].mean, summaries["pca"].mean
        lrr_rises += lrr_curve[-1] >= 1.2 * lrr_curve.min()
        pca_flat += pca_curve[-1] <= 1.15 * pca_curve.min()
    assert lrr_rises >= 8
    assert pca_flat >= 8


@pytest.mark.slow
def test_more_skull_landmarks_help(benchmark_summaries):
    improving = 0
    for per_level in benchmark_summaries:
        errors = [per_level[p]["lrr"].optimum_mean for p in sorted(per_level)]
        improving += all(b <= a for a, b in zip(errors, errors[1:]))
    assert improving >= 8


@pytest.mark.slow
def test_levels_match_the_standard_coordinate_counts():
    assert sorted(generate_levels(SynthSpec(n=10, latent_dim=3, face_vertices=60))) == [65, 220, 688]
