from functools import lru_cache

import pytest

from polyvem.mesh import generate_mesh


@lru_cache(maxsize=None)
def cached_mesh(family, h, seed=0):
    return generate_mesh(family, h, seed)


@pytest.fixture
def mesh_factory():
    """Session-wide memoized mesh generation (meshes are immutable)."""
    return cached_mesh
