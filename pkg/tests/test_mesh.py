import json

import numpy as np
import pytest

from polyvem.errors import InvalidParameterError, MeshError, MeshFormatError
from polyvem.mesh import (
    build_mesh,
    element_geometry,
    generate_mesh,
    load_mesh,
    save_mesh,
    total_area,
    validate_mesh,
)

FAMILY_LEVELS = {
    "square": [1 / 4, 1 / 8],
    "triangle": [1 / 2, 1 / 4],
    "web": [4 / 10, 2 / 10],
    "voronoi": [1 / 4, 1 / 8],
}


def test_square_mesh_counts(mesh_factory):
    mesh = mesh_factory("square", 1 / 4)
    assert mesh.n_cells == 16
    assert mesh.n_vertices == 25


def test_triangle_mesh_counts(mesh_factory):
    mesh = mesh_factory("triangle", 1 / 2)
    assert mesh.n_cells == 8
    assert all(len(c) == 3 for c in mesh.cells)


def test_web_mesh_hexagons_and_area(mesh_factory):
    mesh = mesh_factory("web", 2 / 10, 1)
    assert all(len(c) == 6 for c in mesh.cells)
    assert abs(total_area(mesh) - 1.0) < 1e-12


def test_web_mesh_nonconvex_allowed(mesh_factory):
    report = validate_mesh(mesh_factory("web", 2 / 10, 1))
    assert report.n_nonconvex > 0
    assert not report.orientation_violations


@pytest.mark.parametrize("family", list(FAMILY_LEVELS))
def test_area_and_euler_formula(mesh_factory, family):
    for h in FAMILY_LEVELS[family]:
        mesh = mesh_factory(family, h, 3)
        assert abs(total_area(mesh) - 1.0) < 1e-12
        # planar subdivision of a simply connected domain
        assert mesh.n_vertices - mesh.n_edges + mesh.n_cells == 1


@pytest.mark.parametrize("family", list(FAMILY_LEVELS))
def test_determinism(family):
    h = FAMILY_LEVELS[family][0]
    a = generate_mesh(family, h, seed=5)
    b = generate_mesh(family, h, seed=5)
    assert a.vertices.tobytes() == b.vertices.tobytes()
    assert all((ca == cb).all() for ca, cb in zip(a.cells, b.cells))


@pytest.mark.parametrize("family", list(FAMILY_LEVELS))
def test_refinement_monotonicity(mesh_factory, family):
    h0, h1 = FAMILY_LEVELS[family]
    def max_diameter(mesh):
        return max(element_geometry(mesh, c).diameter for c in range(mesh.n_cells))
    assert max_diameter(mesh_factory(family, h1, 3)) < max_diameter(mesh_factory(family, h0, 3))


def test_interior_edges_have_two_cells(mesh_factory):
    mesh = mesh_factory("voronoi", 1 / 4, 2)
    interior = ~mesh.boundary_edges
    assert (mesh.edge_cells[interior] >= 0).all()
    assert (mesh.edge_cells[mesh.boundary_edges, 1] == -1).all()


def test_invalid_target_h():
    with pytest.raises(InvalidParameterError):
        generate_mesh("square", 0.0)
    with pytest.raises(InvalidParameterError):
        generate_mesh("hex", 0.25)


def test_element_geometry_square():
    mesh = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    geom = element_geometry(mesh, 0)
    assert geom.diameter == pytest.approx(np.sqrt(2.0), abs=1e-15)
    assert geom.area == pytest.approx(1.0, abs=1e-15)
    assert geom.centroid == pytest.approx([0.5, 0.5], abs=1e-15)
    assert np.allclose(np.linalg.norm(geom.edge_normals, axis=1), 1.0, atol=1e-14)
    # outward normals point away from the centroid
    outward = np.einsum("ij,ij->i", geom.edge_normals, geom.edge_midpoints - geom.centroid)
    assert (outward > 0).all()


def test_element_geometry_triangle():
    mesh = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    geom = element_geometry(mesh, 0)
    assert geom.area == pytest.approx(0.5, abs=1e-15)
    assert geom.diameter == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_element_geometry_regular_hexagon():
    ang = np.arange(6) * np.pi / 3
    verts = np.column_stack([np.cos(ang), np.sin(ang)])
    mesh = build_mesh(verts, [list(range(6))])
    geom = element_geometry(mesh, 0)
    assert geom.area == pytest.approx(3 * np.sqrt(3) / 2, rel=1e-14)
    assert geom.centroid == pytest.approx([0.0, 0.0], abs=1e-14)
    assert geom.diameter == pytest.approx(2.0, abs=1e-14)


def test_quality_report_square(mesh_factory):
    report = validate_mesh(mesh_factory("square", 1 / 4))
    assert report.min_edge_to_diameter == pytest.approx(1 / np.sqrt(2.0), rel=1e-12)
    assert report.n_nonconvex == 0


def test_roundtrip_single_cell(tmp_path):
    mesh = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    path = tmp_path / "m.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.vertices.tobytes() == mesh.vertices.tobytes()
    assert [list(c) for c in back.cells] == [list(c) for c in mesh.cells]


def test_roundtrip_voronoi(tmp_path, mesh_factory):
    mesh = mesh_factory("voronoi", 1 / 4, 11)
    path = tmp_path / "v.json"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.vertices.tobytes() == mesh.vertices.tobytes()
    assert all((a == b).all() for a, b in zip(back.cells, mesh.cells))


def test_clockwise_cell_rejected():
    with pytest.raises(MeshError, match="cell 0"):
        build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 3, 2, 1]])


def test_out_of_range_vertex_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"vertices": [[0, 0], [1, 0], [1, 1]], "cells": [[0, 1, 3]]}))
    with pytest.raises(MeshFormatError, match="out of range"):
        load_mesh(path)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_duplicated_cell_topology_error():
    verts = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]]
    cells = [[0, 1, 2, 3], [1, 4, 5, 2], [1, 4, 5, 2]]
    with pytest.raises(MeshError, match="more than two cells"):
        build_mesh(verts, cells)


def test_self_intersecting_cell_rejected():
    # positive signed area but two crossing sides
    with pytest.raises(MeshError, match="self-intersecting"):
        build_mesh([[0, 0], [2, 1], [2, 0], [0, 2]], [[0, 1, 2, 3]])
