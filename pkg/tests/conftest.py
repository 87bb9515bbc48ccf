from __future__ import annotations

import numpy as np
import pytest

from kvrecon import data
from kvrecon import geometry as geo
from kvrecon.mesh import build_annular_mesh


def concentric(n=150, n_layers=10, r=0.5):
    return build_annular_mesh(geo.circle(1.0, n), geo.circle(r, n), n, n_layers)


@pytest.fixture(scope="session")
def ring_mesh():
    """The initial-circle inversion mesh (150 nodes per ring, 10 layers)."""
    return concentric()


@pytest.fixture(scope="session")
def a2b1_pairs():
    """Anti-crime Cauchy data for case A2 x B1."""
    return data.generate_cauchy_data("A2", "B1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
