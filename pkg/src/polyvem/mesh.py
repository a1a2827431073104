"""Polygonal meshes of the unit square: generation, I/O, queries, validation.

Meshes are stored as a flat vertex table plus per-cell counterclockwise
vertex cycles.  Edge connectivity and boundary flags are derived once at
construction time; a mesh that survives :func:`build_mesh` satisfies the
topological invariants (simple CCW cells, interior edges shared by exactly
two cells) and is immutable afterwards.

Four generators are provided: structured squares and right triangles,
Lloyd-relaxed clipped Voronoi tessellations, and "web" meshes obtained by
displacing the interior edge midpoints of a triangulation so that every
triangle becomes a (generally non-convex) hexagon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi

from .errors import GeometryError, InvalidParameterError, MeshError, MeshFormatError

MESH_FAMILIES = ("voronoi", "triangle", "square", "web")

_LLOYD_ITERATIONS = 100
_WEB_DISPLACEMENT = 0.2  # fraction of edge length; redrawn if the cell degenerates


@dataclass
class PolyMesh:
    """Immutable polygonal mesh with derived connectivity.

    Attributes
    ----------
    vertices : (n_vertices, 2) float array
    cells : list of int arrays
        Vertex-index cycles, counterclockwise.
    edges : (n_edges, 2) int array
        Unique vertex pairs, stored with the smaller index first.
    edge_cells : (n_edges, 2) int array
        Adjacent cell indices; -1 marks the missing side of a boundary edge.
    cell_edges : list of int arrays
        For cell c, entry i is the edge index of the side (v_i, v_{i+1}).
    cell_edge_forward : list of bool arrays
        True where the cell traverses the edge from its smaller vertex index
        to the larger one.
    boundary_edges : (n_edges,) bool array
    boundary_vertices : (n_vertices,) bool array
    """

    vertices: np.ndarray
    cells: list
    edges: np.ndarray = field(repr=False)
    edge_cells: np.ndarray = field(repr=False)
    cell_edges: list = field(repr=False)
    cell_edge_forward: list = field(repr=False)
    boundary_edges: np.ndarray = field(repr=False)
    boundary_vertices: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def cell_coords(self, c: int) -> np.ndarray:
        """Vertex coordinates of cell ``c`` as an (n, 2) array."""
        return self.vertices[self.cells[c]]


@dataclass
class ElementGeom:
    """Per-cell geometric data anchoring the scaled monomial basis."""

    cell_index: int
    coords: np.ndarray          # (n, 2), CCW
    diameter: float             # max pairwise vertex distance
    area: float
    centroid: np.ndarray        # (2,)
    edge_lengths: np.ndarray    # (n,)
    edge_normals: np.ndarray    # (n, 2), outward unit
    edge_tangents: np.ndarray   # (n, 2), unit, in traversal direction
    edge_midpoints: np.ndarray  # (n, 2)

    @property
    def n_edges(self) -> int:
        return self.coords.shape[0]


@dataclass
class MeshQualityReport:
    """Shape-regularity diagnostics; non-convexity is reported, not rejected."""

    min_edge_to_diameter: float
    min_area_to_diameter_sq: float
    nonconvex_cells: list
    orientation_violations: list

    @property
    def n_nonconvex(self) -> int:
        return len(self.nonconvex_cells)


def _signed_area(coords: np.ndarray) -> float:
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _polygon_centroid(coords: np.ndarray, area: float) -> np.ndarray:
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper intersection test for two open segments."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def polygon_is_simple(coords: np.ndarray) -> bool:
    """Check that no two non-adjacent sides of the polygon cross."""
    n = coords.shape[0]
    for i in range(n):
        a1, a2 = coords[i], coords[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, coords[j], coords[(j + 1) % n]):
                return False
    return True


def build_mesh(vertices, cells) -> PolyMesh:
    """Construct a :class:`PolyMesh`, deriving connectivity and validating it.

    Raises
    ------
    MeshError
        On out-of-range indices, repeated vertices within a cell, clockwise
        or degenerate cells, or an edge shared by more than two cells.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertex table must have shape (n, 2)")
    n_v = vertices.shape[0]
    cell_arrays = []
    for c, cell in enumerate(cells):
        idx = np.asarray(cell, dtype=int)
        if idx.size < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if idx.min() < 0 or idx.max() >= n_v:
            raise MeshError(f"cell {c} references vertex {idx.max()} out of range 0..{n_v - 1}")
        if len(np.unique(idx)) != idx.size:
            raise MeshError(f"cell {c} repeats a vertex")
        area = _signed_area(vertices[idx])
        if area <= 0.0:
            raise MeshError(f"cell {c} is clockwise or degenerate (signed area {area:.3e})")
        if not polygon_is_simple(vertices[idx]):
            raise MeshError(f"cell {c} is self-intersecting")
        cell_arrays.append(idx)

    edge_index: dict = {}
    edges = []
    edge_cells = []
    cell_edges = []
    cell_edge_forward = []
    for c, idx in enumerate(cell_arrays):
        n = idx.size
        eids = np.empty(n, dtype=int)
        fwd = np.empty(n, dtype=bool)
        for i in range(n):
            a, b = int(idx[i]), int(idx[(i + 1) % n])
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edges)
                edge_index[key] = e
                edges.append(key)
                edge_cells.append([c, -1])
            else:
                if edge_cells[e][1] != -1:
                    raise MeshError(
                        f"edge {key} adjacent to more than two cells "
                        f"({edge_cells[e][0]}, {edge_cells[e][1]}, {c})"
                    )
                edge_cells[e][1] = c
            eids[i] = e
            fwd[i] = a < b
        cell_edges.append(eids)
        cell_edge_forward.append(fwd)

    edges = np.array(edges, dtype=int)
    edge_cells = np.array(edge_cells, dtype=int)
    boundary_edges = edge_cells[:, 1] == -1
    boundary_vertices = np.zeros(n_v, dtype=bool)
    for a, b in edges[boundary_edges]:
        boundary_vertices[a] = True
        boundary_vertices[b] = True

    vertices.setflags(write=False)
    edges.setflags(write=False)
    edge_cells.setflags(write=False)
    boundary_edges.setflags(write=False)
    boundary_vertices.setflags(write=False)
    for idx in cell_arrays:
        idx.setflags(write=False)
    return PolyMesh(
        vertices=vertices,
        cells=cell_arrays,
        edges=edges,
        edge_cells=edge_cells,
        cell_edges=cell_edges,
        cell_edge_forward=cell_edge_forward,
        boundary_edges=boundary_edges,
        boundary_vertices=boundary_vertices,
    )


def element_geometry(mesh: PolyMesh, cell_index: int) -> ElementGeom:
    """Geometric data of one cell: diameter, area, centroid, edge frames."""
    coords = mesh.cell_coords(cell_index)
    return _geometry_from_coords(coords, cell_index)


def _geometry_from_coords(coords: np.ndarray, cell_index: int = -1) -> ElementGeom:
    area = _signed_area(coords)
    if area <= 0.0:
        raise GeometryError(f"cell {cell_index}: non-positive area {area:.3e}")
    centroid = _polygon_centroid(coords, area)
    diff = coords[:, None, :] - coords[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(axis=2)).max())
    nxt = np.roll(coords, -1, axis=0)
    tang = nxt - coords
    lengths = np.linalg.norm(tang, axis=1)
    tang = tang / lengths[:, None]
    # outward normal of a CCW polygon: rotate the tangent by -90 degrees
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])
    midpoints = 0.5 * (coords + nxt)
    return ElementGeom(
        cell_index=cell_index,
        coords=coords,
        diameter=diameter,
        area=area,
        centroid=centroid,
        edge_lengths=lengths,
        edge_normals=normals,
        edge_tangents=tang,
        edge_midpoints=midpoints,
    )


def _convexity_flags(coords: np.ndarray) -> bool:
    """True if the CCW polygon is convex (all cross products non-negative)."""
    a = coords
    b = np.roll(coords, -1, axis=0)
    c = np.roll(coords, -2, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - b[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - b[:, 0])
    return bool(np.all(cross > -1e-14 * np.max(np.abs(cross))))


def validate_mesh(mesh: PolyMesh) -> MeshQualityReport:
    """Shape diagnostics for a structurally valid mesh.

    Star-shapedness is not certified; convexity is reported as a sufficient
    proxy and non-convex cells are listed without being rejected.
    """
    min_edge_ratio = np.inf
    min_area_ratio = np.inf
    nonconvex = []
    orientation = []
    for c in range(mesh.n_cells):
        coords = mesh.cell_coords(c)
        area = _signed_area(coords)
        if area <= 0.0:
            orientation.append(c)
            continue
        geom = _geometry_from_coords(coords, c)
        min_edge_ratio = min(min_edge_ratio, float(geom.edge_lengths.min() / geom.diameter))
        min_area_ratio = min(min_area_ratio, float(area / geom.diameter ** 2))
        if not _convexity_flags(coords):
            nonconvex.append(c)
    return MeshQualityReport(
        min_edge_to_diameter=float(min_edge_ratio),
        min_area_to_diameter_sq=float(min_area_ratio),
        nonconvex_cells=nonconvex,
        orientation_violations=orientation,
    )


def total_area(mesh: PolyMesh) -> float:
    return sum(_signed_area(mesh.cell_coords(c)) for c in range(mesh.n_cells))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def generate_mesh(family: str, target_h: float, seed: int = 0) -> PolyMesh:
    """Generate a mesh of the unit square.

    Parameters
    ----------
    family : {"voronoi", "triangle", "square", "web"}
    target_h : float
        Nominal mesh size; fractions such as 1/16 map onto the structured
        grid resolutions.  Must be positive.
    seed : int
        Seed for the stochastic families (voronoi, web).  The result is
        bit-reproducible for a fixed (family, target_h, seed) triple.
    """
    if target_h <= 0.0:
        raise InvalidParameterError(f"target_h must be positive, got {target_h}")
    if family == "square":
        return _square_mesh(max(1, round(1.0 / target_h)))
    if family == "triangle":
        return _triangle_mesh(max(1, round(1.0 / target_h)))
    if family == "web":
        return _web_mesh(max(1, round(2.0 / target_h)), seed)
    if family == "voronoi":
        n_seeds = max(1, round(1.0 / target_h)) ** 2
        return _voronoi_mesh(n_seeds, seed)
    raise InvalidParameterError(f"unknown mesh family {family!r}; expected one of {MESH_FAMILIES}")


def _grid_vertices(n: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _square_mesh(n: int) -> PolyMesh:
    verts = _grid_vertices(n)
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            cells.append([v00, v00 + 1, v00 + n + 2, v00 + n + 1])
    return build_mesh(verts, cells)


def _triangle_cells(n: int):
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            cells.append([v00, v10, v11])
            cells.append([v00, v11, v01])
    return cells


def _triangle_mesh(n: int) -> PolyMesh:
    return build_mesh(_grid_vertices(n), _triangle_cells(n))


def _web_mesh(n: int, seed: int) -> PolyMesh:
    """Hexagonal cells from a triangulation with displaced edge midpoints.

    Every edge midpoint becomes a mesh vertex; midpoints of interior edges
    are shifted by a random vector of length at most 0.2 times the edge
    length, redrawing when a displaced hexagon would self-intersect.
    """
    tri = _triangle_mesh(n)
    rng = np.random.default_rng(seed)
    n_v = tri.n_vertices
    mid = tri.vertices[tri.edges[:, 0]] * 0.5 + tri.vertices[tri.edges[:, 1]] * 0.5
    lengths = np.linalg.norm(tri.vertices[tri.edges[:, 1]] - tri.vertices[tri.edges[:, 0]], axis=1)
    offsets = np.zeros_like(mid)
    interior = ~tri.boundary_edges
    for e in np.flatnonzero(interior):
        r = _WEB_DISPLACEMENT * lengths[e] * np.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * np.pi)
        offsets[e] = (r * np.cos(phi), r * np.sin(phi))

    def hexagons(off):
        verts = np.vstack([tri.vertices, mid + off])
        cells = []
        for c in range(tri.n_cells):
            tri_v = tri.cells[c]
            tri_e = tri.cell_edges[c]
            cell = []
            for i in range(3):
                cell.append(int(tri_v[i]))
                cell.append(int(n_v + tri_e[i]))
            cells.append(cell)
        return verts, cells

    verts, cells = hexagons(offsets)
    # redraw displacements that break simplicity (rare at the 0.2 cap)
    for attempt in range(50):
        bad_edges = set()
        for c, cell in enumerate(cells):
            coords = verts[np.asarray(cell)]
            if _signed_area(coords) <= 0.0 or not polygon_is_simple(coords):
                for e in tri.cell_edges[c]:
                    if interior[e]:
                        bad_edges.add(int(e))
        if not bad_edges:
            break
        for e in bad_edges:
            r = _WEB_DISPLACEMENT * lengths[e] * np.sqrt(rng.uniform()) * 0.5
            phi = rng.uniform(0.0, 2.0 * np.pi)
            offsets[e] = (r * np.cos(phi), r * np.sin(phi))
        verts, cells = hexagons(offsets)
    else:
        raise GeometryError("web mesh displacement failed to produce simple cells")
    return build_mesh(verts, cells)


def _mirror_points(pts: np.ndarray) -> np.ndarray:
    left = pts * [-1.0, 1.0]
    right = pts * [-1.0, 1.0] + [2.0, 0.0]
    bottom = pts * [1.0, -1.0]
    top = pts * [1.0, -1.0] + [0.0, 2.0]
    return np.vstack([pts, left, right, bottom, top])


def _clipped_voronoi_polygons(pts: np.ndarray):
    """Voronoi cells of ``pts`` restricted to the unit square.

    Reflecting the generators across all four sides makes every restricted
    cell a bounded region of the extended diagram, so no explicit clipping
    is required; coordinates within 1e-9 of a side are snapped onto it.
    """
    n = pts.shape[0]
    vor = Voronoi(_mirror_points(pts))
    verts = vor.vertices.copy()
    for axis in (0, 1):
        verts[np.abs(verts[:, axis]) < 1e-9, axis] = 0.0
        verts[np.abs(verts[:, axis] - 1.0) < 1e-9, axis] = 1.0
    polys = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise GeometryError("unbounded Voronoi region despite mirroring")
        poly = np.asarray(region, dtype=int)
        if _signed_area(verts[poly]) < 0.0:
            poly = poly[::-1]
        polys.append(poly)
    return verts, polys


def _voronoi_mesh(n_seeds: int, seed: int) -> PolyMesh:
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.05, 0.95, size=(n_seeds, 2))
    if n_seeds == 1:
        return _square_mesh(1)
    for _ in range(_LLOYD_ITERATIONS):
        verts, polys = _clipped_voronoi_polygons(pts)
        new_pts = np.empty_like(pts)
        for i, poly in enumerate(polys):
            coords = verts[poly]
            new_pts[i] = _polygon_centroid(coords, _signed_area(coords))
        pts = new_pts
    verts, polys = _clipped_voronoi_polygons(pts)

    used = np.unique(np.concatenate(polys))
    remap = -np.ones(verts.shape[0], dtype=int)
    remap[used] = np.arange(used.size)
    vertices = verts[used]
    cells = [remap[poly] for poly in polys]
    # collapse edges below ~0.5% of the typical cell size; keeps DoF points
    # of adjacent edges well separated without visibly moving the mesh
    vertices, cells = _merge_close_vertices(vertices, cells, tol=5e-3 / np.sqrt(n_seeds))
    return build_mesh(vertices, cells)


def _merge_close_vertices(vertices: np.ndarray, cells, tol: float):
    """Collapse vertex pairs closer than ``tol`` (numerical duplicates).

    Interior merges keep the tiling exact because every incident cell sees
    the same replacement; corner vertices of the square are never moved.
    """
    n = vertices.shape[0]
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = np.lexsort((vertices[:, 1], vertices[:, 0]))
    sorted_v = vertices[order]
    for a in range(n - 1):
        b = a + 1
        while b < n and sorted_v[b, 0] - sorted_v[a, 0] < tol:
            if abs(sorted_v[b, 1] - sorted_v[a, 1]) < tol:
                ra, rb = find(order[a]), find(order[b])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            b += 1

    roots = np.array([find(i) for i in range(n)])
    unique_roots, inverse = np.unique(roots, return_inverse=True)
    if unique_roots.size == n:
        return vertices, cells

    merged = np.empty((unique_roots.size, 2))
    for r, root in enumerate(unique_roots):
        group = vertices[roots == root]
        merged[r] = _merged_position(group)
    new_cells = []
    for cell in cells:
        mapped = inverse[roots[cell]]
        dedup = [int(mapped[0])]
        for v in mapped[1:]:
            if int(v) != dedup[-1]:
                dedup.append(int(v))
        if dedup[0] == dedup[-1]:
            dedup.pop()
        if len(dedup) < 3:
            raise GeometryError("vertex merge collapsed a cell below 3 vertices")
        new_cells.append(dedup)
    return merged, new_cells


def _merged_position(group: np.ndarray) -> np.ndarray:
    """Replacement for a merged vertex group, pinned to any unit-square side
    the group touches so the domain boundary is preserved exactly."""
    pos = group.mean(axis=0)
    for axis in (0, 1):
        if np.any(np.abs(group[:, axis]) < 1e-12):
            pos[axis] = 0.0
        elif np.any(np.abs(group[:, axis] - 1.0) < 1e-12):
            pos[axis] = 1.0
    return pos


# ---------------------------------------------------------------------------
# file exchange
# ---------------------------------------------------------------------------


def save_mesh(mesh: PolyMesh, path) -> None:
    """Write the mesh as JSON: vertex list plus 0-based CCW cell cycles."""
    payload = {
        "vertices": [[float(x), float(y)] for x, y in mesh.vertices],
        "cells": [[int(v) for v in cell] for cell in mesh.cells],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_mesh(path) -> PolyMesh:
    """Load a mesh written by :func:`save_mesh`, validating it fully."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict) or "vertices" not in payload or "cells" not in payload:
        raise MeshFormatError(f"{path}: expected an object with 'vertices' and 'cells'")
    try:
        return build_mesh(payload["vertices"], payload["cells"])
    except MeshError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
