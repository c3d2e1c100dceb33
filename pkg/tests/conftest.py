import logging
import os
import sys

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from mesh_core import grid_mesh, icosphere  # noqa: E402
from synth import SynthSpec, generate  # noqa: E402


@pytest.fixture(autouse=True)
def restore_logging():
    """main() installs its own handler on the root logger"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def unit_square():
    """Two triangles covering [0, 1]^2 in z = 0"""
    return grid_mesh(2, 2)


@pytest.fixture
def plane_grid():
    return grid_mesh(21, 21)


@pytest.fixture
def sphere():
    return icosphere(3)


@pytest.fixture
def midline_grid():
    """21 x 21 planar grid lying in the symmetry plane x = 0"""
    grid = grid_mesh(21, 21)
    return grid.with_vertices(grid.vertices[:, [2, 0, 1]])


@pytest.fixture
def small_spec():
    return SynthSpec(seed=3, n=10, latent_dim=3, noise_sigma=0.2, midplane=4, lateral=6,
                     face_vertices=60)


@pytest.fixture
def small_dataset(small_spec):
    return generate(small_spec)


@pytest.fixture
def noiseless_dataset():
    return generate(SynthSpec(seed=5, n=12, latent_dim=3, noise_sigma=0.0, midplane=4,
                              lateral=8, face_vertices=80))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
