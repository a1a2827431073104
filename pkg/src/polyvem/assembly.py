"""Global DoF numbering, boundary conditions, and sparse saddle assembly.

Velocity DoFs are numbered vertex pairs first, then edge-node pairs, then
cell-interior moments; shared point DoFs receive one global index from
every adjacent cell, which is what makes the velocity space conforming.
Pressures are cell-major polynomial coefficients.  The zero-mean pressure
constraint is imposed through a single Lagrange multiplier so the block
system stays symmetric.

Normal-trace boundary conditions rotate each boundary point-DoF pair into
its (normal, tangential) frame with a sparse orthogonal transformation and
then eliminate the normal component; at corners with two independent
normals both components are eliminated.  Dirichlet conditions eliminate
both components everywhere on the boundary, with values interpolated
edgewise at the DoF nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameterError, MeshError, SingularSystemError
from .polybasis import n_poly
from .vem_local import _edge_structure, build_dof_layout

BC_KINDS = ("darcy_normal_trace", "dirichlet")

_CORNER_TOL = 1e-10  # |cross| of two boundary normals above which a vertex is a corner


@dataclass
class GlobalDofMap:
    """Local-to-global velocity numbering plus boundary classification."""

    mesh: object
    k: int
    scheme: str
    bc_kind: str
    n_velocity: int
    n_pressure: int
    pressure_dim: int
    cell_dofs: list
    boundary_point_ids: np.ndarray   # pair-base ids of boundary point DoFs
    boundary_point_coords: np.ndarray
    boundary_point_normals: np.ndarray  # unit normal; NaN rows mark corners
    rotation: sp.csr_matrix | None   # plain = rotation @ rotated frame
    constrained: np.ndarray          # velocity ids in the rotated frame

    @property
    def n_free_velocity(self) -> int:
        return self.n_velocity - self.constrained.size

    def pressure_slice(self, c: int) -> slice:
        return slice(c * self.pressure_dim, (c + 1) * self.pressure_dim)

    def dim_velocity_formula(self) -> int:
        """Reference dimension count of the constrained velocity space:
        interior point DoFs carry two components, boundary point DoFs one
        (the tangential), plus the interior moment blocks."""
        mesh, k = self.mesh, self.k
        layout = build_dof_layout(self.scheme, k, 3)
        moments = layout.n_moment + layout.n_div
        n_vb = int(mesh.boundary_vertices.sum())
        n_eb = int(mesh.boundary_edges.sum())
        n_vi = mesh.n_vertices - n_vb
        n_ei = mesh.n_edges - n_eb
        return (
            mesh.n_cells * moments
            + 2 * (n_vi + (k - 1) * n_ei)
            + (n_vb + (k - 1) * n_eb)
        )

    def dim_pressure_formula(self) -> int:
        return self.mesh.n_cells * self.pressure_dim - 1

    def constrained_values(self, data=None) -> np.ndarray:
        """Values of the constrained DoFs in the rotated frame.

        ``data`` is the Dirichlet trace callable (points -> (n, 2)); the
        normal-trace condition is homogeneous and ignores it.
        """
        if self.bc_kind == "darcy_normal_trace":
            return np.zeros(self.constrained.size)
        if data is None:
            return np.zeros(self.constrained.size)
        vals = np.asarray(data(self.boundary_point_coords), dtype=float)
        out = np.empty(self.constrained.size)
        out[0::2] = vals[:, 0]
        out[1::2] = vals[:, 1]
        return out


def build_dof_map(mesh, k: int, scheme: str, bc_kind: str) -> GlobalDofMap:
    """Number the velocity DoFs and classify the boundary ones."""
    if bc_kind not in BC_KINDS:
        raise InvalidParameterError(f"unknown bc_kind {bc_kind!r}; expected one of {BC_KINDS}")
    n_v, n_e, n_p = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    per_edge = k - 1
    edge_base = 2 * n_v
    cell_base = edge_base + 2 * per_edge * n_e
    layout3 = build_dof_layout(scheme, k, 3)
    n_mom = layout3.n_moment + layout3.n_div
    n_velocity = cell_base + n_p * n_mom
    pressure_dim = 1 if scheme == "reduced" else n_poly(k - 1)

    cell_dofs = []
    for c in range(n_p):
        cell = mesh.cells[c]
        n_k = len(cell)
        ids = np.empty(2 * n_k * k + n_mom, dtype=int)
        for i, v in enumerate(cell):
            ids[2 * i] = 2 * v
            ids[2 * i + 1] = 2 * v + 1
        pos = 2 * n_k
        for i in range(n_k):
            e = mesh.cell_edges[c][i]
            forward = mesh.cell_edge_forward[c][i]
            for m in range(per_edge):
                node = m if forward else per_edge - 1 - m
                base = edge_base + 2 * (per_edge * e + node)
                ids[pos] = base
                ids[pos + 1] = base + 1
                pos += 2
        ids[pos:] = cell_base + c * n_mom + np.arange(n_mom)
        cell_dofs.append(ids)

    point_ids, coords, normals = _boundary_points(mesh, k, per_edge, edge_base)
    rotation, constrained = _boundary_constraints(
        bc_kind, n_velocity, point_ids, normals
    )
    return GlobalDofMap(
        mesh=mesh,
        k=k,
        scheme=scheme,
        bc_kind=bc_kind,
        n_velocity=n_velocity,
        n_pressure=n_p * pressure_dim,
        pressure_dim=pressure_dim,
        cell_dofs=cell_dofs,
        boundary_point_ids=point_ids,
        boundary_point_coords=coords,
        boundary_point_normals=normals,
        rotation=rotation,
        constrained=constrained,
    )


def _outward_edge_normal(mesh, e):
    """Domain-outward unit normal of boundary edge ``e`` (the outward
    normal of its single adjacent CCW cell)."""
    a, b = mesh.edges[e]
    c = mesh.edge_cells[e, 0]
    local = list(mesh.cell_edges[c]).index(e)
    t = mesh.vertices[b] - mesh.vertices[a]
    if not mesh.cell_edge_forward[c][local]:
        t = -t
    t = t / np.linalg.norm(t)
    return np.array([t[1], -t[0]])


def _boundary_points(mesh, k, per_edge, edge_base):
    """Boundary point DoFs: pair-base id, coordinates, outward normal
    (NaN for corner vertices with two independent normals)."""
    vert_normals: dict[int, list] = {}
    edge_normal = {}
    for e in np.flatnonzero(mesh.boundary_edges):
        n = _outward_edge_normal(mesh, e)
        edge_normal[int(e)] = n
        for v in mesh.edges[e]:
            vert_normals.setdefault(int(v), []).append(n)

    ids, coords, normals = [], [], []
    for v, ns in sorted(vert_normals.items()):
        ids.append(2 * v)
        coords.append(mesh.vertices[v])
        n0 = ns[0]
        corner = any(abs(n0[0] * n[1] - n0[1] * n[0]) > _CORNER_TOL for n in ns[1:])
        normals.append(np.full(2, np.nan) if corner else n0)

    lob = _edge_structure(k)[0]
    interior = (lob[1:-1] + 1.0) / 2.0
    for e in np.flatnonzero(mesh.boundary_edges):
        a, b = mesh.edges[e]
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        for m in range(per_edge):
            ids.append(edge_base + 2 * (per_edge * e + m))
            coords.append(pa + interior[m] * (pb - pa))
            normals.append(edge_normal[int(e)])
    return np.array(ids, dtype=int), np.array(coords), np.array(normals)


def _boundary_constraints(bc_kind, n_velocity, point_ids, normals):
    rows, cols, vals = [], [], []
    constrained = []
    rotated = np.zeros(n_velocity, dtype=bool)
    for pid, n in zip(point_ids, normals):
        if bc_kind == "dirichlet" or np.isnan(n[0]):
            constrained.extend([pid, pid + 1])
            continue
        if bc_kind == "darcy_normal_trace":
            # columns of the block: (normal component, tangential component)
            t = np.array([-n[1], n[0]])
            rows.extend([pid, pid, pid + 1, pid + 1])
            cols.extend([pid, pid + 1, pid, pid + 1])
            vals.extend([n[0], t[0], n[1], t[1]])
            rotated[pid] = rotated[pid + 1] = True
            constrained.append(pid)
    if rows:
        remaining = np.flatnonzero(~rotated)
        rows.extend(remaining)
        cols.extend(remaining)
        vals.extend(np.ones(remaining.size))
        rotation = sp.csr_matrix(
            (vals, (rows, cols)), shape=(n_velocity, n_velocity)
        )
    else:
        rotation = None
    return rotation, np.array(sorted(constrained), dtype=int)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def scatter_velocity(dof_map: GlobalDofMap, local_mats) -> sp.csr_matrix:
    """Sum local velocity matrices into the plain-coordinate global matrix."""
    rows, cols, vals = [], [], []
    for c, A in enumerate(local_mats):
        ids = dof_map.cell_dofs[c]
        r, q = np.meshgrid(ids, ids, indexing="ij")
        rows.append(r.ravel())
        cols.append(q.ravel())
        vals.append(np.asarray(A).ravel())
    n = dof_map.n_velocity
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def scatter_mixed(dof_map: GlobalDofMap, elements) -> sp.csr_matrix:
    """Mixed form matrix B with pressure rows and velocity columns."""
    rows, cols, vals = [], [], []
    for c, el in enumerate(elements):
        ids = dof_map.cell_dofs[c]
        b = el.b_form.T  # (pressure_dim, N)
        pr = np.arange(*dof_map.pressure_slice(c).indices(dof_map.n_pressure))
        r, q = np.meshgrid(pr, ids, indexing="ij")
        rows.append(r.ravel())
        cols.append(q.ravel())
        vals.append(b.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dof_map.n_pressure, dof_map.n_velocity),
    )


def pressure_integrals(dof_map: GlobalDofMap, elements) -> np.ndarray:
    """Vector of integrals of each pressure basis function (the zero-mean
    constraint row)."""
    c_vec = np.empty(dof_map.n_pressure)
    for c, el in enumerate(elements):
        c_vec[dof_map.pressure_slice(c)] = el.ctx.integrals[: dof_map.pressure_dim]
    return c_vec


def pressure_mass(dof_map: GlobalDofMap, elements) -> sp.csr_matrix:
    blocks = [el.ctx.mass(dof_map.k - 1, dof_map.k - 1)[: dof_map.pressure_dim, : dof_map.pressure_dim]
              for el in elements]
    return sp.block_diag(blocks, format="csr")


@dataclass
class SaddleSystem:
    """Assembled symmetric block system with constraints eliminated."""

    dof_map: GlobalDofMap
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    constrained_values: np.ndarray
    n_free: int
    n_pressure: int
    mean_vector: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def dump(self, path) -> None:
        from scipy.io import mmwrite

        mmwrite(str(path), self.matrix.tocoo())


def assemble(
    dof_map: GlobalDofMap,
    elements,
    local_mats,
    velocity_rhs=None,
    pressure_rhs=None,
    dirichlet=None,
) -> SaddleSystem:
    """Assemble the constrained saddle system.

    ``local_mats`` are the per-cell velocity forms; ``velocity_rhs`` and
    ``pressure_rhs`` are per-cell load vectors (None for zero).  The
    Dirichlet trace callable supplies values of eliminated DoFs, which are
    moved to the right-hand side.
    """
    A = scatter_velocity(dof_map, local_mats)
    B = scatter_mixed(dof_map, elements)
    c_vec = pressure_integrals(dof_map, elements)

    g = np.zeros(dof_map.n_velocity)
    if velocity_rhs is not None:
        for c, load in enumerate(velocity_rhs):
            if load is not None:
                np.add.at(g, dof_map.cell_dofs[c], load)
    f = np.zeros(dof_map.n_pressure)
    if pressure_rhs is not None:
        for c, load in enumerate(pressure_rhs):
            if load is not None:
                f[dof_map.pressure_slice(c)] += load

    R = dof_map.rotation
    if R is not None:
        A = (R.T @ A @ R).tocsr()
        B = (B @ R).tocsr()
        g = R.T @ g

    values = dof_map.constrained_values(dirichlet)
    free = np.setdiff1d(np.arange(dof_map.n_velocity), dof_map.constrained)
    A_ff = A[free][:, free]
    A_fc = A[free][:, dof_map.constrained]
    B_f = B[:, free]
    B_c = B[:, dof_map.constrained]
    rhs_u = g[free] - A_fc @ values
    rhs_p = f - B_c @ values

    n_f, n_p = free.size, dof_map.n_pressure
    mean_col = sp.csc_matrix(
        (c_vec, (np.arange(n_p), np.zeros(n_p, dtype=int))), shape=(n_p, 1)
    )
    S = sp.bmat(
        [
            [A_ff, B_f.T, None],
            [B_f, None, mean_col],
            [None, mean_col.T, None],
        ],
        format="csc",
    )
    S = 0.5 * (S + S.T)  # remove summation-order noise; exact by IEEE commutativity
    rhs = np.concatenate([rhs_u, rhs_p, [0.0]])
    return SaddleSystem(
        dof_map=dof_map,
        matrix=S,
        rhs=rhs,
        free=free,
        constrained_values=values,
        n_free=n_f,
        n_pressure=n_p,
        mean_vector=c_vec,
    )


@dataclass
class SolveResult:
    velocity: np.ndarray       # plain coordinates, constrained values included
    pressure: np.ndarray       # (n_cells, pressure_dim)
    multiplier: float
    residual: float
    pressure_mean: float


def solve(system: SaddleSystem, residual_tol: float = 1e-10) -> SolveResult:
    """Direct sparse factorization of the assembled saddle system.

    The matrix is symmetrically equilibrated first: the velocity and
    pressure blocks live on very different scales (mass-type entries are
    O(cell area), gradient-type O(1)), and balancing them preserves the
    pressure digits through the factorization.
    """
    S, rhs = system.matrix, system.rhs
    Sa = S.tocsr()
    abs_S = sp.csr_matrix((np.abs(Sa.data), Sa.indices, Sa.indptr), shape=Sa.shape)
    row_max = abs_S.max(axis=1).toarray().ravel()
    row_max[row_max == 0.0] = 1.0
    d = 1.0 / np.sqrt(row_max)
    D = sp.diags(d)
    S_eq = (D @ S @ D).tocsc()
    try:
        lu = spla.splu(S_eq)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"saddle factorization failed: {exc}",
            diagnostics={"n_free": system.n_free, "n_pressure": system.n_pressure},
        ) from exc
    x = d * lu.solve(d * rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solver produced non-finite values")
    rhs_norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(S @ x - rhs) / (rhs_norm if rhs_norm > 0 else 1.0))
    if residual > residual_tol:
        raise SingularSystemError(
            f"solver residual {residual:.3e} exceeds {residual_tol:.1e}",
            diagnostics={"residual": residual},
        )
    dof_map = system.dof_map
    u_rot = np.zeros(dof_map.n_velocity)
    u_rot[system.free] = x[: system.n_free]
    u_rot[dof_map.constrained] = system.constrained_values
    u = dof_map.rotation @ u_rot if dof_map.rotation is not None else u_rot
    p_flat = x[system.n_free : system.n_free + system.n_pressure]
    multiplier = float(x[-1])
    pressure = p_flat.reshape(dof_map.mesh.n_cells, dof_map.pressure_dim)
    p_mean = float(system.mean_vector @ p_flat)
    return SolveResult(
        velocity=u,
        pressure=pressure,
        multiplier=multiplier,
        residual=residual,
        pressure_mean=p_mean,
    )


def cell_velocity(dof_map: GlobalDofMap, velocity: np.ndarray, c: int) -> np.ndarray:
    """Local DoF vector of cell ``c`` extracted from the global solution."""
    return velocity[dof_map.cell_dofs[c]]


def check_edge_conformity(mesh) -> None:
    """Verify that neighbouring cells traverse each shared edge in opposite
    directions (CCW cells on a consistent tiling always do)."""
    for e in range(mesh.n_edges):
        ca, cb = mesh.edge_cells[e]
        if cb == -1:
            continue
        fa = mesh.cell_edge_forward[ca][list(mesh.cell_edges[ca]).index(e)]
        fb = mesh.cell_edge_forward[cb][list(mesh.cell_edges[cb]).index(e)]
        if fa == fb:
            raise MeshError(f"edge {e} traversed in the same direction by cells {ca} and {cb}")
