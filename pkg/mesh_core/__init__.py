from .surface import AREA_EPSILON, MeshError, TriMesh, require_nonempty, triangle_areas
from .mesh_io import MeshFormat, MeshFormatError, MeshIndexError, load_mesh, read_vertex_quality, save_mesh
from .distance import (DistanceStats, SurfaceIndex, closest_points_on_triangles, surface_index,
                       mesh_to_surface_stats, point_to_surface_distance)
from .symmetry import (EmptyResultError, HalfFrame, Plane, RankError, Side, fit_symmetry_plane,
                       half_frame, merge_halves, mirror_mesh, split_half)
from .primitives import ellipsoid, golden_lattice, grid_mesh, icosphere, lattice_patch
