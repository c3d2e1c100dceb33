import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import FormatError, MissingFileError
from mesh_core import (DistanceStats, MeshError, MeshFormatError, MeshIndexError, SurfaceIndex,
                       TriMesh, grid_mesh, icosphere, load_mesh, mesh_to_surface_stats,
                       point_to_surface_distance, read_vertex_quality, require_nonempty,
                       save_mesh, surface_index)
from mesh_core.mesh_io import ObjReader, PlyReader


# ---------- TriMesh ----------

def test_constructor_rejects_non_finite_vertices():
    with pytest.raises(MeshError):
        TriMesh([[0, 0, 0], [1, 0, np.nan], [0, 1, 0]], [[0, 1, 2]])


def test_constructor_rejects_out_of_range_index():
    with pytest.raises(MeshError) as info:
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    assert info.value.context["triangle"] == 0


def test_constructor_rejects_degenerate_triangle():
    with pytest.raises(MeshError):
        TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_repaired_drops_degenerate_triangles_with_note():
    vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    mesh = TriMesh.repaired(vertices, [[0, 1, 2], [0, 1, 3]], source="scan.ply")
    assert mesh.n_triangles == 1
    assert mesh.n_vertices == 4
    assert "scan.ply" in mesh.notes[0]


def test_grid_connectivity():
    grid = grid_mesh(3, 3)
    assert grid.n_vertices == 9 and grid.n_triangles == 8
    assert len(grid.edges()) == 16
    assert len(grid.boundary_edges()) == 8
    assert grid.boundary_vertices().sum() == 8
    assert not grid.boundary_vertices()[4]


def test_icosphere_is_closed():
    sphere = icosphere(1)
    assert (sphere.n_vertices, sphere.n_triangles) == (42, 80)
    assert len(sphere.edges()) == 120
    assert len(sphere.boundary_edges()) == 0
    np.testing.assert_allclose(np.linalg.norm(sphere.vertices, axis=1), 1.0)


def test_compacted_drops_unused_vertices():
    mesh = TriMesh([[0, 0, 0], [5, 5, 5], [1, 0, 0], [0, 1, 0]], [[0, 2, 3]])
    compact, kept = mesh.compacted()
    assert compact.n_vertices == 3
    assert kept.tolist() == [0, 2, 3]
    np.testing.assert_array_equal(compact.triangles, [[0, 1, 2]])


def test_require_nonempty():
    with pytest.raises(MeshError):
        require_nonempty(TriMesh(np.zeros((0, 3)), np.zeros((0, 3))))


# ---------- OBJ / PLY ----------

def test_obj_polygons_are_fan_triangulated():
    reader = ObjReader("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n")
    reader.read_records()
    vertices, triangles = reader.to_arrays()
    assert vertices.shape == (4, 3)
    np.testing.assert_array_equal(triangles, [[0, 1, 2], [0, 2, 3]])


def test_obj_negative_indices_count_back():
    reader = ObjReader("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    reader.read_records()
    _, triangles = reader.to_arrays()
    np.testing.assert_array_equal(triangles, [[0, 1, 2]])


def test_obj_index_error_carries_line():
    reader = ObjReader("v 0 0 0\nv 1 0 0\nv 0 1 0\n# comment\nf 1 2 5\n")
    reader.read_records()
    with pytest.raises(MeshIndexError) as info:
        reader.to_arrays()
    assert info.value.context["line"] == 5


def test_obj_bad_coordinate():
    with pytest.raises(MeshFormatError) as info:
        ObjReader("v 0 0 zero\n").read_records()
    assert info.value.exit_code == 4


def test_binary_ply_is_read():
    header = (b"ply\nformat binary_little_endian 1.0\nelement vertex 3\n"
              b"property float x\nproperty float y\nproperty float z\n"
              b"element face 1\nproperty list uchar int vertex_indices\nend_header\n")
    body = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype="<f4").tobytes()
    body += bytes([3]) + np.array([0, 1, 2], dtype="<i4").tobytes()
    vertices, triangles, _ = PlyReader(header + body).to_arrays()
    np.testing.assert_array_equal(vertices[1], [1, 0, 0])
    np.testing.assert_array_equal(triangles, [[0, 1, 2]])


def test_ply_with_quality_survives_save_and_load(tmp_path, sphere):
    quality = np.linspace(0.0, 2.0, sphere.n_vertices)
    path = str(tmp_path / "sphere.ply")
    save_mesh(sphere, path, vertex_quality=quality)
    loaded = load_mesh(path)
    np.testing.assert_allclose(loaded.vertices, sphere.vertices, atol=1e-6)
    np.testing.assert_array_equal(loaded.triangles, sphere.triangles)
    np.testing.assert_allclose(read_vertex_quality(path), quality, atol=1e-9)


def test_obj_cannot_carry_quality(tmp_path, unit_square):
    with pytest.raises(MeshFormatError):
        save_mesh(unit_square, str(tmp_path / "a.obj"), vertex_quality=np.zeros(4))


def test_missing_and_unknown_files(tmp_path):
    with pytest.raises(MissingFileError) as info:
        load_mesh(str(tmp_path / "absent.ply"))
    assert info.value.exit_code == 3
    odd = tmp_path / "mesh.stl"
    odd.write_text("solid\n")
    with pytest.raises(FormatError):
        load_mesh(str(odd))


def test_truncated_ascii_ply(tmp_path):
    path = tmp_path / "short.ply"
    path.write_text("ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\n"
                    "property double y\nproperty double z\nend_header\n0 0 0\n1 0 0\n")
    with pytest.raises(MeshFormatError):
        load_mesh(str(path))


# ---------- distances ----------

@pytest.mark.parametrize("point, expected", [
    ((0.25, 0.5, 3.0), 3.0),
    ((2.0, 0.5, 0.0), 1.0),
    ((2.0, 2.0, 0.0), np.sqrt(2.0)),
    ((0.5, 0.5, 0.0), 0.0),
])
def test_point_to_surface_distance(unit_square, point, expected):
    assert point_to_surface_distance(point, unit_square) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-2.0, 2.0)))
def test_surface_index_matches_brute_force(points):
    mesh = icosphere(2)
    distances, closest, owners = SurfaceIndex(mesh).query(points)
    brute = [point_to_surface_distance(p, mesh) for p in points]
    np.testing.assert_allclose(distances, brute, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(closest - points, axis=1), distances, atol=1e-12)
    assert owners.min() >= 0 and owners.max() < mesh.n_triangles


def test_surface_index_is_cached(sphere):
    assert surface_index(sphere) is surface_index(sphere)


def test_distance_stats_even_count():
    stats = DistanceStats.from_distances([4.0, 1.0, 3.0, 2.0])
    assert stats.median == 2.5
    assert stats.mean == 2.5
    assert stats.std == pytest.approx(np.sqrt(1.25))
    assert (stats.min, stats.max) == (1.0, 4.0)
    assert stats.to_dict()["count"] == 4
    with pytest.raises(MeshError):
        DistanceStats.from_distances([])


def test_surface_stats_are_asymmetric(unit_square):
    big = grid_mesh(3, 3)
    assert mesh_to_surface_stats(unit_square, big).max == pytest.approx(0.0, abs=1e-12)
    outward = mesh_to_surface_stats(big, unit_square)
    assert outward.max == pytest.approx(np.sqrt(2.0))
    assert outward.median == pytest.approx(1.0)


def turn(axis, degrees):
    axis = np.asarray(axis, dtype=np.float64) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    angle = np.radians(degrees)
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


def test_surface_stats_survive_a_rigid_motion():
    source = icosphere(2).transformed(np.eye(3), np.array([0.1, 0.0, -0.05]), 1.08)
    target = icosphere(3)
    rotation, shift = turn((1, -2, 0.5), 37.0), np.array([12.0, -4.0, 7.5])
    before = mesh_to_surface_stats(source, target)
    after = mesh_to_surface_stats(source.transformed(rotation, shift),
                                  target.transformed(rotation, shift))
    for key in ("mean", "median", "std", "max", "min"):
        assert getattr(after, key) == pytest.approx(getattr(before, key), rel=1e-9, abs=1e-12), key


def test_median_ignores_a_single_outlier():
    clean = DistanceStats.from_distances([0.1, 0.2, 0.3, 0.4, 0.5])
    spoiled = DistanceStats.from_distances([0.1, 0.2, 0.3, 0.4, 500.0])
    assert spoiled.median == clean.median == 0.3
    assert spoiled.mean > 100 * clean.mean
