"""Per-element virtual element machinery for the velocity spaces.

Three local spaces are supported, selected by ``scheme``:

``div_free``
    Velocity functions with edgewise polynomial traces, elementwise
    polynomial divergence of degree k-1, and rotated-field interior
    moments.  The element divergence is reconstructed exactly from the
    DoFs, which is what makes the discrete kernel pointwise
    divergence-free.
``reduced``
    Same boundary DoFs but elementwise constant divergence; used with
    cellwise-constant pressures.  Implemented by lifting DoF vectors into
    the div_free layout, so the two discretizations agree exactly on
    common functions (including the stabilized parts of the forms).
``non_div_free``
    The classical vector-valued local space whose interior moments are
    taken against full vector polynomials of degree k-2; its divergence is
    only available as an L2 projection.

DoF ordering contract (normative, see docs/dof_layout.md): vertex value
pairs (x then y) counterclockwise, then for each edge in counterclockwise
order the k-1 interior Gauss-Lobatto point value pairs in traversal
direction, then the interior moment block, then (div_free only) the
divergence moment block.  Moment DoFs are scaled by 1/area (and the
divergence moments additionally by the diameter) so all DoFs share the
dimension of a velocity value.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConditioningError, InvalidParameterError
from .polybasis import ElementPolynomials, gauss_lobatto, n_poly

SCHEMES = ("div_free", "reduced", "non_div_free")


@dataclass
class DofLayout:
    """Counts and index slices of the local DoF vector."""

    scheme: str
    k: int
    n_edges: int
    n_vertex: int      # vertex value components
    n_edge: int        # edge point value components
    n_moment: int      # interior moment DoFs (rotated fields or full vectors)
    n_div: int         # divergence moment DoFs (div_free only)

    @property
    def n_boundary(self) -> int:
        return self.n_vertex + self.n_edge

    @property
    def size(self) -> int:
        return self.n_boundary + self.n_moment + self.n_div

    @property
    def moment_start(self) -> int:
        return self.n_boundary

    @property
    def div_start(self) -> int:
        return self.n_boundary + self.n_moment


def build_dof_layout(scheme: str, k: int, n_edges: int) -> DofLayout:
    """Local DoF bookkeeping for a cell with ``n_edges`` edges.

    Raises for unsupported degrees (the construction needs k >= 2: the
    edge trace must carry interior collocation points).
    """
    if scheme not in SCHEMES:
        raise InvalidParameterError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if k < 2:
        raise InvalidParameterError(f"polynomial degree k={k} unsupported; k >= 2 required")
    n_vertex = 2 * n_edges
    n_edge = 2 * n_edges * (k - 1)
    if scheme == "non_div_free":
        n_moment, n_div = 2 * n_poly(k - 2), 0
    elif scheme == "reduced":
        n_moment, n_div = n_poly(k - 3), 0
    else:
        n_moment, n_div = n_poly(k - 3), n_poly(k - 1) - 1
    return DofLayout(scheme, k, n_edges, n_vertex, n_edge, n_moment, n_div)


@lru_cache(maxsize=None)
def _edge_structure(k: int):
    """Reference-edge data shared by all elements of one degree:
    Lobatto DoF nodes, a Gauss rule exact to degree 2k+3, and the Lagrange
    transfer from nodal values to Gauss point values."""
    lob_nodes, lob_weights = gauss_lobatto(k + 1)
    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(k + 3)
    transfer = np.empty((gl_nodes.size, k + 1))
    for m in range(k + 1):
        num = np.ones_like(gl_nodes)
        den = 1.0
        for j in range(k + 1):
            if j != m:
                num *= gl_nodes - lob_nodes[j]
                den *= lob_nodes[m] - lob_nodes[j]
        transfer[:, m] = num / den
    return lob_nodes, lob_weights, gl_nodes, gl_weights, transfer


class LocalElement:
    """All computable operators of one cell's velocity space.

    Matrices act on local DoF vectors; polynomial outputs use the
    component-blocked scaled monomial layout of :mod:`polyvem.polybasis`.

    Attributes
    ----------
    dof_eval : (N, 2 n_k)
        DoFs of the vector polynomial basis (the patch-test matrix).
    flux_row : (N,)
        Boundary flux functional, the integral of v.n over the cell boundary.
    div_coeffs : (n_poly(k-1), N) or None
        Exact divergence reconstruction (None for non_div_free).
    div_moments : (n_poly(k), N)
        Moments of div v against the scalar basis up to degree k.
    div_proj : (n_poly(k), N)
        Coefficients of the degree-k L2 projection of div v.
    h1_proj, l2_proj : (2 n_k, N)
        Energy and L2 projections onto vector polynomials of degree k.
    l2_proj_low : (2 n_poly(k-2), N)
        L2 projection onto vector polynomials of degree k-2.
    grad_proj : (2, 2, n_poly(k-1), N)
        Componentwise degree-(k-1) L2 projection of the velocity gradient.
    b_form : (N, pressure_dim)
        Mixed form values b(phi_i, m_gamma) against the cell pressure basis.
    """

    def __init__(self, geom, k: int, scheme: str = "div_free"):
        self.geom = geom
        self.k = k
        self.scheme = scheme
        self.layout = build_dof_layout(scheme, k, geom.n_edges)
        if scheme == "reduced":
            self._build_reduced()
            return
        self.ctx = ElementPolynomials(geom, k)
        self.lift = None
        self._build_boundary()
        self._build_dof_points()
        if scheme == "div_free":
            self._build_div_free()
        else:
            self._build_non_div_free()
        self._build_grad_proj()
        self.dof_eval = self._dof_eval_matrix()
        self.pressure_dim = n_poly(k - 1)
        self.b_form = self.div_moments[: self.pressure_dim].T.copy()

    # -- boundary machinery -------------------------------------------------

    def _build_boundary(self):
        geom, k = self.geom, self.k
        n_e = geom.n_edges
        lob_nodes, _, gl_nodes, gl_weights, transfer = _edge_structure(k)
        self._transfer = transfer
        n_gl = gl_nodes.size
        a = geom.coords
        b = np.roll(geom.coords, -1, axis=0)
        t01 = (gl_nodes + 1.0) / 2.0
        self.edge_gl_points = a[:, None, :] + t01[None, :, None] * (b - a)[None, :, :].transpose(1, 0, 2)
        self.edge_gl_weights = gl_weights[None, :] * (geom.edge_lengths[:, None] / 2.0)
        # local DoF indices of the k+1 nodal value pairs on each edge
        ix = np.empty((n_e, k + 1), dtype=int)
        iy = np.empty((n_e, k + 1), dtype=int)
        for e in range(n_e):
            ix[e, 0], iy[e, 0] = 2 * e, 2 * e + 1
            nxt = (e + 1) % n_e
            ix[e, k], iy[e, k] = 2 * nxt, 2 * nxt + 1
            base = self.layout.n_vertex + 2 * (k - 1) * e
            for m in range(1, k):
                ix[e, m] = base + 2 * (m - 1)
                iy[e, m] = base + 2 * (m - 1) + 1
        self._edge_dof_x, self._edge_dof_y = ix, iy
        self._scalar_gl = self.ctx.scalar.eval(self.edge_gl_points.reshape(-1, 2)).reshape(
            n_e, n_gl, -1
        )
        grads = self.ctx.scalar.grad(self.edge_gl_points.reshape(-1, 2)).reshape(
            n_e, n_gl, -1, 2
        )
        self._scalar_grad_n_gl = np.einsum("eqjd,ed->eqj", grads, geom.edge_normals)

    def _build_dof_points(self):
        geom, k = self.geom, self.k
        lob_nodes, _, _, _, _ = _edge_structure(k)
        pts = [geom.coords]
        a = geom.coords
        b = np.roll(geom.coords, -1, axis=0)
        interior = (lob_nodes[1:-1] + 1.0) / 2.0
        edge_pts = a[:, None, :] + interior[None, :, None] * (b - a)[:, None, :]
        pts.append(edge_pts.reshape(-1, 2))
        self.point_dof_coords = np.vstack(pts)

    def boundary_functional(self, weights: np.ndarray) -> np.ndarray:
        """Row of the functional v -> sum_e int_e w . v for a weight field
        given by its values at the edge Gauss points, shape (n_edges, n_gl, 2)."""
        row = np.zeros(self.layout.size)
        contrib = self.edge_gl_weights[:, :, None] * weights  # (n_e, n_gl, 2)
        nodal = np.einsum("qm,eqd->emd", self._transfer, contrib)
        np.add.at(row, self._edge_dof_x, nodal[:, :, 0])
        np.add.at(row, self._edge_dof_y, nodal[:, :, 1])
        return row

    def _bnd_scalar_normal(self, scalar_index: int) -> np.ndarray:
        """Row of v -> int over the boundary of m_j (v . n)."""
        vals = self._scalar_gl[:, :, scalar_index]
        W = vals[:, :, None] * self.geom.edge_normals[:, None, :]
        return self.boundary_functional(W)

    def _bnd_component(self, scalar_index: int, comp: int, normal_comp: int) -> np.ndarray:
        """Row of v -> int over the boundary of m_j v_comp n_{normal_comp}."""
        vals = self._scalar_gl[:, :, scalar_index] * self.geom.edge_normals[:, None, normal_comp]
        W = np.zeros(vals.shape + (2,))
        W[:, :, comp] = vals
        return self.boundary_functional(W)

    # -- div_free construction ----------------------------------------------

    def _build_div_free(self):
        ctx, k, geom = self.ctx, self.k, self.geom
        layout = self.layout
        N = layout.size
        area, h = geom.area, geom.diameter
        n_km1 = n_poly(k - 1)

        normals = geom.edge_normals[:, None, :] * np.ones_like(self.edge_gl_weights)[:, :, None]
        self.flux_row = self.boundary_functional(normals)

        # divergence reconstruction: mean from the boundary flux, higher
        # moments read from the divergence DoFs
        rhs = np.zeros((n_km1, N))
        rhs[0] = self.flux_row
        for g in range(1, n_km1):
            rhs[g, layout.div_start + g - 1] = area / h
        self.div_coeffs = np.linalg.solve(ctx.mass(k - 1, k - 1), rhs)
        self.div_moments = ctx.H[:, :n_km1] @ self.div_coeffs  # all degrees up to k+1

        # rows of v -> int_K v . grad(m_beta) for beta >= 1, via parts
        n_pot = n_poly(k + 1) - 1
        self._pot_rows = np.empty((n_pot, N))
        for b in range(1, n_pot + 1):
            self._pot_rows[b - 1] = -self.div_moments[b] + self._bnd_scalar_normal(b)

        self._build_h1_proj_div_free()
        self._build_l2_proj_div_free()
        self.div_proj = np.zeros((n_poly(k), N))
        self.div_proj[:n_km1] = self.div_coeffs

    def _perp_moment_rows(self, coeffs: np.ndarray) -> np.ndarray:
        """Rows of v -> int_K v . g for g in the span of the moment-DoF
        rotated fields, given coefficient columns over that monomial basis."""
        rows = np.zeros((coeffs.shape[1], self.layout.size))
        start = self.layout.moment_start
        rows[:, start : start + coeffs.shape[0]] = self.geom.area * coeffs.T
        return rows

    def _build_h1_proj_div_free(self):
        ctx, k = self.ctx, self.k
        N = self.layout.size
        n_k = n_poly(k)
        lap = ctx.laplacian(k)  # (2 n_{k-2}, 2 n_k)
        if lap.shape[0]:
            split = np.hstack([ctx.grad_basis(k - 2), ctx.perp_basis(k - 2)])
            z = np.linalg.solve(split, lap)
            n_g = ctx.grad_basis(k - 2).shape[1]
            zg, zp = z[:n_g], z[n_g:]
            # -int Lap(phi) . v = +int p div v - bnd(p v.n) - int gperp . v
            grad_part = -(zg.T @ self._pot_rows[:n_g])
            perp_part = -(zp.T @ self._perp_moment_rows(np.eye(zp.shape[0]))) if zp.shape[0] else 0.0
            rhs = grad_part + (perp_part if zp.shape[0] else 0.0)
        else:
            rhs = np.zeros((2 * n_k, N))
        # boundary term int (grad phi_i . n) . v
        for j in range(n_k):
            W = np.zeros((self.geom.n_edges, self._scalar_gl.shape[1], 2))
            W[:, :, 0] = self._scalar_grad_n_gl[:, :, j]
            rhs[j] += self.boundary_functional(W)
            W[:, :, 0] = 0.0
            W[:, :, 1] = self._scalar_grad_n_gl[:, :, j]
            rhs[n_k + j] += self.boundary_functional(W)
        self.h1_rhs = rhs
        self.h1_mean_rows = self._mean_rows()
        self.h1_proj = self._solve_h1(rhs, self.h1_mean_rows)

    def _mean_rows(self) -> np.ndarray:
        """Rows of v -> int_K v (per component), from the DoFs."""
        h = self.geom.diameter
        rows = np.empty((2, self.layout.size))
        rows[0] = h * self._pot_rows[0]  # potential m_(1,0): grad = e_x / h
        rows[1] = h * self._pot_rows[1]
        return rows

    def _solve_h1(self, rhs: np.ndarray, mean_rows: np.ndarray) -> np.ndarray:
        """Solve the energy-projection system with mean-value anchoring."""
        ctx, k = self.ctx, self.k
        n_k = n_poly(k)
        G = ctx.grad_gram(k)
        anchor = np.zeros((2, 2 * n_k))
        anchor[0, :n_k] = ctx.integrals[:n_k]
        anchor[1, n_k:] = ctx.integrals[:n_k]
        system = np.zeros((2 * n_k + 2, 2 * n_k + 2))
        system[: 2 * n_k, : 2 * n_k] = G
        system[: 2 * n_k, 2 * n_k :] = anchor.T
        system[2 * n_k :, : 2 * n_k] = anchor
        stacked = np.vstack([rhs, mean_rows])
        try:
            sol = np.linalg.solve(system, stacked)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"energy projection system singular: {exc}") from exc
        return sol[: 2 * n_k]

    def _build_l2_proj_div_free(self):
        ctx, k = self.ctx, self.k
        n_k = n_poly(k)
        n_low = n_poly(k - 3)
        grad_cols = ctx.grad_basis(k)          # potentials m_1 .. m_{n_{k+1}-1}
        perp_low = ctx.perp_basis(k)[:, :n_low]
        comp = ctx.perp_complement()
        X = np.hstack([grad_cols, perp_low, comp])
        Z = np.linalg.inv(X)
        n_g = grad_cols.shape[1]
        zg, zp, zc = Z[:n_g], Z[n_g : n_g + n_low], Z[n_g + n_low :]
        M = ctx.vector_mass(k)
        comp_rows = comp.T @ M @ self.h1_proj  # enhancement: moments from h1 projection
        self.moment_matrix = (
            zg.T @ self._pot_rows[:n_g]
            + (zp.T @ self._perp_moment_rows(np.eye(n_low)) if n_low else 0.0)
            + zc.T @ comp_rows
        )
        self.l2_proj = np.linalg.solve(M, self.moment_matrix)
        self._set_low_proj()

    def _set_low_proj(self):
        k = self.k
        n_k, n_low = n_poly(k), n_poly(k - 2)
        rows = np.concatenate([np.arange(n_low), n_k + np.arange(n_low)])
        low_moments = self.moment_matrix[rows]
        M_low = self.ctx.vector_mass(k - 2)
        self.l2_proj_low = np.linalg.solve(M_low, low_moments)

    # -- non_div_free construction -------------------------------------------

    def _build_non_div_free(self):
        ctx, k, geom = self.ctx, self.k, self.geom
        layout = self.layout
        N = layout.size
        area = geom.area
        n_k, n_low = n_poly(k), n_poly(k - 2)

        normals = geom.edge_normals[:, None, :] * np.ones_like(self.edge_gl_weights)[:, :, None]
        self.flux_row = self.boundary_functional(normals)
        self.div_coeffs = None

        # interior moments against full vector polynomials are plain DoFs
        def vector_moment_rows(coeffs):
            # coeffs over the [P_{k-2}]^2 monomial layout (2 n_low, m)
            rows = np.zeros((coeffs.shape[1], N))
            rows[:, layout.moment_start : layout.moment_start + 2 * n_low] = area * coeffs.T
            return rows

        # energy projection: -int Lap(phi) . v is a direct moment combination
        lap = ctx.laplacian(k)
        rhs = -vector_moment_rows(lap) if lap.shape[0] else np.zeros((2 * n_k, N))
        for j in range(n_k):
            W = np.zeros((geom.n_edges, self._scalar_gl.shape[1], 2))
            W[:, :, 0] = self._scalar_grad_n_gl[:, :, j]
            rhs[j] += self.boundary_functional(W)
            W[:, :, 0] = 0.0
            W[:, :, 1] = self._scalar_grad_n_gl[:, :, j]
            rhs[n_k + j] += self.boundary_functional(W)
        self.h1_rhs = rhs
        self.h1_mean_rows = vector_moment_rows(np.eye(2 * n_low)[:, [0, n_low]])
        self.h1_proj = self._solve_h1(rhs, self.h1_mean_rows)

        # moments up to degree k: low part direct, high part via enhancement
        comp = ctx.scalar_complement()  # (n_k, 2k+1) over the scalar basis
        Xs = np.hstack([np.eye(n_k)[:, :n_low], comp])
        Zs = np.linalg.inv(Xs)
        M = ctx.vector_mass(k)
        self.moment_matrix = np.empty((2 * n_k, N))
        for block in (0, 1):
            comp_vec = np.zeros((2 * n_k, comp.shape[1]))
            comp_vec[block * n_k : block * n_k + n_k] = comp
            comp_rows = comp_vec.T @ M @ self.h1_proj
            low_rows = vector_moment_rows(
                np.eye(2 * n_low)[:, block * n_low : (block + 1) * n_low]
            )
            self.moment_matrix[block * n_k : (block + 1) * n_k] = Zs.T @ np.vstack(
                [low_rows, comp_rows]
            )
        self.l2_proj = np.linalg.solve(M, self.moment_matrix)
        self._set_low_proj()

        # projected divergence: int div v m = -int v . grad m + bnd(m v.n)
        self.div_moments = np.empty((n_poly(k + 1), N))
        for g in range(n_poly(k + 1)):
            grad_g = np.concatenate([ctx.Dx[:n_k, g], ctx.Dy[:n_k, g]])
            self.div_moments[g] = -(grad_g @ self.moment_matrix) + self._bnd_scalar_normal(g)
        self.div_proj = np.linalg.solve(ctx.mass(k, k), self.div_moments[:n_k])

    # -- shared post-construction --------------------------------------------

    def _build_grad_proj(self):
        ctx, k = self.ctx, self.k
        n_k, n_g = n_poly(k), n_poly(k - 1)
        Hg = ctx.mass(k - 1, k - 1)
        self.grad_proj = np.empty((2, 2, n_g, self.layout.size))
        D = (ctx.Dx, ctx.Dy)
        for comp in (0, 1):
            for der in (0, 1):
                rows = np.empty((n_g, self.layout.size))
                for g in range(n_g):
                    w = np.zeros(2 * n_k)
                    w[comp * n_k : comp * n_k + n_k] = D[der][:n_k, g]
                    rows[g] = -(w @ self.moment_matrix) + self._bnd_component(g, comp, der)
                self.grad_proj[comp, der] = np.linalg.solve(Hg, rows)

    def _dof_eval_matrix(self) -> np.ndarray:
        """DoFs of each vector polynomial basis function (columns)."""
        ctx, k, geom = self.ctx, self.k, self.geom
        layout = self.layout
        n_k = n_poly(k)
        D = np.zeros((layout.size, 2 * n_k))
        vals = ctx.scalar.eval(self.point_dof_coords)[:, :n_k]
        n_pts = self.point_dof_coords.shape[0]
        for p in range(n_pts):
            D[2 * p, :n_k] = vals[p]
            D[2 * p + 1, n_k:] = vals[p]
        M = ctx.vector_mass(k)
        if self.scheme == "div_free":
            n_low = n_poly(k - 3)
            if n_low:
                perp = ctx.perp_basis(k)[:, :n_low]
                D[layout.moment_start : layout.div_start] = (perp.T @ M) / geom.area
            div = ctx.divergence(k)
            mom = ctx.mass(k - 1, k - 1) @ div  # moments of div(phi)
            D[layout.div_start :] = (geom.diameter / geom.area) * mom[1:]
        else:
            n_low = n_poly(k - 2)
            rows = np.concatenate([np.arange(n_low), n_k + np.arange(n_low)])
            D[layout.moment_start : layout.moment_start + 2 * n_low] = M[rows] / geom.area
        return D

    # -- reduced scheme (lift into the div_free layout) ----------------------

    def _build_reduced(self):
        geom, k = self.geom, self.k
        full = LocalElement(geom, k, "div_free")
        self.full = full
        self.ctx = full.ctx
        layout = self.layout
        N, N_full = layout.size, full.layout.size
        lift = np.zeros((N_full, N))
        lift[:N, :N] = np.eye(N)
        # divergence moments of a constant-divergence function follow from
        # the boundary flux: dof = (h / area^2) int_K m_g  * flux
        h, area = geom.diameter, geom.area
        for g in range(1, n_poly(k - 1)):
            lift[full.layout.div_start + g - 1] = (
                h * self.ctx.integrals[g] / area**2
            ) * full.flux_row[:N]
        self.lift = lift
        self.point_dof_coords = full.point_dof_coords
        self._edge_dof_x = full._edge_dof_x
        self._edge_dof_y = full._edge_dof_y
        self._transfer = full._transfer
        self.h1_rhs = full.h1_rhs @ lift
        self.h1_mean_rows = full.h1_mean_rows @ lift
        self.flux_row = full.flux_row @ lift
        self.div_coeffs = full.div_coeffs @ lift
        self.div_moments = full.div_moments @ lift
        self.div_proj = full.div_proj @ lift
        self.h1_proj = full.h1_proj @ lift
        self.l2_proj = full.l2_proj @ lift
        self.l2_proj_low = full.l2_proj_low @ lift
        self.moment_matrix = full.moment_matrix @ lift
        self.grad_proj = full.grad_proj @ lift
        self.dof_eval = full.dof_eval[:N]
        self.pressure_dim = 1
        self.b_form = (full.b_form[:, :1].T @ lift).T

    # -- bilinear forms -------------------------------------------------------

    def _stabilized(self, consistency: np.ndarray, proj: np.ndarray, alpha: float) -> np.ndarray:
        if self.lift is not None:
            gap = np.eye(self.full.layout.size) - self.full.dof_eval @ proj
            A = consistency + alpha * gap.T @ gap
            A = self.lift.T @ A @ self.lift
        else:
            gap = np.eye(self.layout.size) - self.dof_eval @ proj
            A = consistency + alpha * gap.T @ gap
        return 0.5 * (A + A.T)

    def _weighted_mass(self, kinv: np.ndarray) -> np.ndarray:
        n_k = n_poly(self.k)
        H = self.ctx.mass(self.k, self.k)
        M = np.empty((2 * n_k, 2 * n_k))
        M[:n_k, :n_k] = kinv[0, 0] * H
        M[:n_k, n_k:] = kinv[0, 1] * H
        M[n_k:, :n_k] = kinv[1, 0] * H
        M[n_k:, n_k:] = kinv[1, 1] * H
        return M

    def darcy_form(self, kinv) -> tuple[np.ndarray, float]:
        """Stabilized weighted velocity mass form; returns (matrix, alpha).

        ``kinv`` is the constant inverse permeability tensor on the cell.
        The stabilizer is the DoF-vector inner product scaled by the mean
        eigenvalue of the consistency part.
        """
        kinv = np.asarray(kinv, dtype=float)
        if kinv.shape != (2, 2) or not np.allclose(kinv, kinv.T):
            raise InvalidParameterError("inverse permeability must be a symmetric 2x2 tensor")
        if np.linalg.eigvalsh(kinv).min() <= 0.0:
            raise InvalidParameterError("inverse permeability must be positive definite")
        proj = self.full.l2_proj if self.lift is not None else self.l2_proj
        size = proj.shape[1]
        C = proj.T @ self._weighted_mass(kinv) @ proj
        alpha = float(np.trace(C)) / size
        return self._stabilized(C, proj, alpha), alpha

    def viscous_form(self, mu: float) -> np.ndarray:
        """Stabilized velocity gradient form scaled by the viscosity."""
        if mu <= 0.0:
            raise InvalidParameterError(f"viscosity must be positive, got {mu}")
        proj = self.full.h1_proj if self.lift is not None else self.h1_proj
        G = self.ctx.grad_gram(self.k)
        C = proj.T @ G @ proj
        return mu * self._stabilized(C, proj, 1.0)

    def brinkman_form(self, mu: float, kinv) -> np.ndarray:
        A, _ = self.darcy_form(kinv)
        return A + self.viscous_form(mu)

    # -- data handling ---------------------------------------------------------

    def load_vector(self, f) -> np.ndarray:
        """Load entries int_K f . (L2-projected basis functions)."""
        rule = self.ctx.quad
        fv = np.asarray(f(rule.points), dtype=float)
        n_k = n_poly(self.k)
        vals = self.ctx.scalar.eval(rule.points)[:, :n_k]
        F = np.empty(2 * n_k)
        F[:n_k] = vals.T @ (rule.weights * fv[:, 0])
        F[n_k:] = vals.T @ (rule.weights * fv[:, 1])
        return self.l2_proj.T @ F

    def scalar_moments(self, f, degree: int | None = None) -> np.ndarray:
        """Moments of a scalar field against the cell scalar basis."""
        d = self.k - 1 if degree is None else degree
        rule = self.ctx.quad
        fv = np.asarray(f(rule.points), dtype=float)
        vals = self.ctx.scalar.eval(rule.points)[:, : n_poly(d)]
        return vals.T @ (rule.weights * fv)

    def interpolate(self, u, div_u=None) -> np.ndarray:
        """DoF vector of an analytic velocity field.

        ``div_u`` is required for the div_free divergence moments; reduced
        and non_div_free layouts ignore it.
        """
        layout = self.layout
        dofs = np.zeros(layout.size)
        vals = np.asarray(u(self.point_dof_coords), dtype=float)
        dofs[0 : layout.n_boundary : 2] = vals[:, 0]
        dofs[1 : layout.n_boundary : 2] = vals[:, 1]
        rule = self.ctx.quad
        uq = np.asarray(u(rule.points), dtype=float)
        area = self.geom.area
        if self.scheme == "non_div_free":
            n_low = n_poly(self.k - 2)
            svals = self.ctx.scalar.eval(rule.points)[:, :n_low]
            dofs[layout.moment_start : layout.moment_start + n_low] = (
                svals.T @ (rule.weights * uq[:, 0]) / area
            )
            dofs[layout.moment_start + n_low :] = svals.T @ (rule.weights * uq[:, 1]) / area
            return dofs
        n_low = n_poly(self.k - 3)
        if n_low:
            perp = self.ctx.perp_basis(self.k)[:, :n_low]
            n_k = n_poly(self.k)
            svals = self.ctx.scalar.eval(rule.points)[:, :n_k]
            px = svals @ perp[:n_k]
            py = svals @ perp[n_k:]
            mom = (px * (rule.weights * uq[:, 0])[:, None]).sum(axis=0)
            mom += (py * (rule.weights * uq[:, 1])[:, None]).sum(axis=0)
            dofs[layout.moment_start : layout.moment_start + n_low] = mom / area
        if self.scheme == "div_free" and layout.n_div:
            if div_u is None:
                raise InvalidParameterError(
                    "div_free interpolation needs the analytic divergence"
                )
            dv = np.asarray(div_u(rule.points), dtype=float)
            svals = self.ctx.scalar.eval(rule.points)[:, 1 : n_poly(self.k - 1)]
            dofs[layout.div_start :] = (
                self.geom.diameter / area * (svals.T @ (rule.weights * dv))
            )
        return dofs

    def polynomial_dofs(self, coeffs: np.ndarray) -> np.ndarray:
        """DoF vector of the vector polynomial with the given coefficients."""
        return self.dof_eval @ coeffs

    def edge_trace_values(self, dofs: np.ndarray, edge: int) -> np.ndarray:
        """Nodal values (k+1, 2) of the edgewise trace polynomial on local
        edge ``edge``, in traversal order; the Lobatto nodal values are the
        canonical representation of the degree-k trace."""
        return np.column_stack([dofs[self._edge_dof_x[edge]], dofs[self._edge_dof_y[edge]]])
