import numpy as np
import pytest

from errors import LayoutError
from landmarks import LandmarkPoint, LandmarkSet
from mesh_core import grid_mesh
from shape_table import (CoordinateLayout, assemble, coordinate_count, flatten, load_tables,
                         save_tables, unflatten)


def skull(offset=0.0, nasion_x=0.0):
    return LandmarkSet([
        LandmarkPoint("nasion", (nasion_x, 10.0 + offset, 5.0), midplane=True),
        LandmarkPoint("orbitale", (20.0 + offset, 5.0, 1.0)),
        LandmarkPoint("gonion", (40.0, -30.0 + 2 * offset, -10.0)),
    ])


@pytest.mark.parametrize("midplane, lateral, expected", [
    (13, 13, 65),
    (23, 58, 220),
    (47, 198, 688),
])
def test_coordinate_count(midplane, lateral, expected):
    assert coordinate_count(midplane, lateral) == expected
    marks = LandmarkSet([LandmarkPoint(f"M{i}", (0.0, i, 0.0), True) for i in range(midplane)]
                        + [LandmarkPoint(f"L{i}", (1.0, i, 0.0)) for i in range(lateral)])
    assert CoordinateLayout.from_landmarks(marks).total_dim == expected


def test_flatten_drops_midplane_x():
    layout = CoordinateLayout.from_landmarks(skull())
    v = flatten(skull(), layout)
    np.testing.assert_array_equal(v, [10.0, 5.0, 20.0, 5.0, 1.0, 40.0, -30.0, -10.0])
    assert layout.column_labels()[:3] == ["nasion.y", "nasion.z", "orbitale.x"]


def test_unflatten_restores_positions():
    marks = skull(nasion_x=0.0005)
    layout = CoordinateLayout.from_landmarks(marks)
    positions = unflatten(flatten(marks, layout), np.zeros(layout.total_dim), layout)
    expected = marks.positions()
    expected[0, 0] = 0.0
    np.testing.assert_array_equal(positions, expected)


def test_off_plane_midplane_point_is_rejected():
    layout = CoordinateLayout.from_landmarks(skull())
    with pytest.raises(LayoutError) as info:
        flatten(skull(nasion_x=0.01), layout)
    assert info.value.context["id"] == "nasion"
    assert info.value.exit_code == 5


def test_flatten_requires_matching_ids():
    layout = CoordinateLayout.from_landmarks(skull())
    with pytest.raises(LayoutError):
        flatten(skull().subset(["nasion", "orbitale"]), layout)


def test_assemble_centres_both_tables():
    face = grid_mesh(3, 3)
    entries = [(skull(k), face.with_vertices(face.vertices * (1.0 + 0.1 * k))) for k in range(4)]
    tables = assemble(entries, names=["a", "b", "c", "d"])
    assert (tables.n, tables.p, tables.q) == (4, 8, 27)
    np.testing.assert_allclose(tables.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(tables.Y.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(tables.X[2] + tables.x_mean, flatten(skull(2), tables.skull_layout))
    prediction = tables.face_prediction(tables.Y[3])
    np.testing.assert_allclose(prediction.positions, face.vertices * 1.3, atol=1e-12)


def test_assemble_rejects_bad_input():
    face = grid_mesh(3, 3)
    with pytest.raises(LayoutError):
        assemble([(skull(), face)])
    with pytest.raises(LayoutError) as info:
        assemble([(skull(), face), (skull(1.0), grid_mesh(3, 4))])
    assert info.value.context["entry"] == 1


def test_tables_survive_save_and_load(tmp_path):
    face = grid_mesh(3, 3)
    rng = np.random.default_rng(7)
    entries = [(skull(rng.normal()), face.with_vertices(face.vertices + rng.normal(size=(9, 3))))
               for _ in range(5)]
    tables = assemble(entries)
    save_tables(tables, str(tmp_path))
    loaded = load_tables(str(tmp_path))
    np.testing.assert_array_equal(loaded.X, tables.X)
    np.testing.assert_array_equal(loaded.Y, tables.Y)
    np.testing.assert_array_equal(loaded.y_mean, tables.y_mean)
    assert loaded.names == tables.names
    assert loaded.skull_layout.midplane_mask().tolist() == [True, False, False]
