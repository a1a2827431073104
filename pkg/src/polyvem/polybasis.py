"""Scaled polynomial bases and exact quadrature on polygonal cells.

Everything downstream works with monomials ((x - x_c)/h)^a anchored at the
cell centroid and scaled by the cell diameter, ordered by total degree and
then by decreasing x-power.  The ordering is graded, so the basis of degree
d is a prefix of the basis of any higher degree and coefficient vectors can
be sliced freely.

Vector polynomials of degree k are stored component-blocked: the first
n_k coefficients belong to the x-component, the last n_k to the y-component.
The module provides the gradient/rotated decomposition of that space
(gradients of scalar polynomials of degree k+1, plus the rotated fields
x_perp * P_{k-1}) together with L2-orthogonalized complement bases, and
quadrature rules that integrate polynomials exactly on simple polygons.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np

from .errors import ConditioningError, GeometryError, InvalidParameterError

_RANK_TOL = 1e-10  # relative drop in norm that flags rank deficiency


def n_poly(degree: int) -> int:
    """Dimension of the scalar polynomials of total degree <= degree."""
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent table (n_poly(degree), 2), graded, x-power descending."""
    exps = [(d - ay, ay) for d in range(degree + 1) for ay in range(d + 1)]
    out = np.array(exps, dtype=int).reshape(-1, 2)
    out.setflags(write=False)
    return out


class ScaledMonomialBasis:
    """Monomials ((x - anchor)/scale)^a, |a| <= degree, on one element."""

    def __init__(self, degree: int, anchor, scale: float):
        if degree < 0:
            raise InvalidParameterError("degree must be non-negative")
        self.degree = degree
        self.anchor = np.asarray(anchor, dtype=float)
        self.scale = float(scale)
        self.exponents = monomial_exponents(degree)

    @property
    def n(self) -> int:
        return self.exponents.shape[0]

    def index(self, ax: int, ay: int) -> int:
        d = ax + ay
        return d * (d + 1) // 2 + ay

    def _scaled(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.anchor) / self.scale

    def eval(self, pts) -> np.ndarray:
        """Values at ``pts``; shape (n_points, n)."""
        xi = self._scaled(pts)
        powx = np.vander(xi[:, 0], self.degree + 1, increasing=True)
        powy = np.vander(xi[:, 1], self.degree + 1, increasing=True)
        ax, ay = self.exponents[:, 0], self.exponents[:, 1]
        return powx[:, ax] * powy[:, ay]

    def grad(self, pts) -> np.ndarray:
        """Gradients at ``pts``; shape (n_points, n, 2)."""
        xi = self._scaled(pts)
        powx = np.vander(xi[:, 0], self.degree + 1, increasing=True)
        powy = np.vander(xi[:, 1], self.degree + 1, increasing=True)
        ax, ay = self.exponents[:, 0], self.exponents[:, 1]
        out = np.zeros((xi.shape[0], self.n, 2))
        nz = ax > 0
        out[:, nz, 0] = ax[nz] / self.scale * powx[:, ax[nz] - 1] * powy[:, ay[nz]]
        nz = ay > 0
        out[:, nz, 1] = ay[nz] / self.scale * powx[:, ax[nz]] * powy[:, ay[nz] - 1]
        return out

    def derivative_matrices(self):
        """Matrices Dx, Dy with (Dx c) = coefficients of d/dx of the
        polynomial with coefficients c, in this same basis."""
        n = self.n
        Dx = np.zeros((n, n))
        Dy = np.zeros((n, n))
        for j, (ax, ay) in enumerate(self.exponents):
            if ax > 0:
                Dx[self.index(ax - 1, ay), j] = ax / self.scale
            if ay > 0:
                Dy[self.index(ax, ay - 1), j] = ay / self.scale
        return Dx, Dy

    def shift_matrices(self):
        """Matrices Sx, Sy multiplying a polynomial by the scaled coordinate
        xi or eta; degrees above ``degree`` are truncated away, so callers
        must slice inputs to degree-1."""
        n = self.n
        Sx = np.zeros((n, n))
        Sy = np.zeros((n, n))
        for j, (ax, ay) in enumerate(self.exponents):
            if ax + ay + 1 <= self.degree:
                Sx[self.index(ax + 1, ay), j] = 1.0
                Sy[self.index(ax, ay + 1), j] = 1.0
        return Sx, Sy


class VectorPolyBasis:
    """A set of vector polynomials given by coefficient columns over a
    component-blocked scaled monomial basis."""

    def __init__(self, scalar: ScaledMonomialBasis, coeffs: np.ndarray):
        self.scalar = scalar
        self.coeffs = np.asarray(coeffs, dtype=float)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def eval(self, pts) -> np.ndarray:
        """Values at ``pts``; shape (n_points, n, 2)."""
        vals = self.scalar.eval(pts)
        ns = self.scalar.n
        out = np.empty((vals.shape[0], self.n, 2))
        out[:, :, 0] = vals @ self.coeffs[:ns]
        out[:, :, 1] = vals @ self.coeffs[ns:]
        return out


@dataclass
class QuadratureRule:
    """Points/weights pair with a declared polynomial exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


# ---------------------------------------------------------------------------
# quadrature construction
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _collapsed_triangle_rule(degree: int):
    """Rule on the reference triangle (0,0),(1,0),(0,1), exact to ``degree``.

    Built by collapsing a tensor Gauss-Legendre rule; exactness follows from
    the polynomial degrees of the collapsed integrand, so it holds for any
    requested degree.
    """
    na = ceil((degree + 2) / 2)
    nb = max(1, ceil((degree + 1) / 2))
    xa, wa = np.polynomial.legendre.leggauss(na)
    xb, wb = np.polynomial.legendre.leggauss(nb)
    a, ua = (xa + 1) / 2, wa / 2
    b, ub = (xb + 1) / 2, wb / 2
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(ua, ub, indexing="ij")
    x = A.ravel()
    y = (B * (1.0 - A)).ravel()
    w = (WA * WB * (1.0 - A)).ravel()
    pts = np.column_stack([x, y])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def triangle_quadrature(tri: np.ndarray, degree: int) -> QuadratureRule:
    """Exact rule on the triangle with vertex rows ``tri``."""
    ref_pts, ref_w = _collapsed_triangle_rule(degree)
    p0, p1, p2 = tri
    jac = np.array([p1 - p0, p2 - p0])
    area2 = abs(float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]))
    pts = p0 + ref_pts @ jac
    return QuadratureRule(points=pts, weights=ref_w * area2, degree=degree)


def ear_clip(coords: np.ndarray):
    """Triangulate a simple CCW polygon into index triples by ear clipping."""
    n = coords.shape[0]
    if n < 3:
        raise GeometryError("polygon needs at least 3 vertices")
    scale = np.max(np.abs(coords - coords.mean(axis=0))) or 1.0
    eps = 1e-14 * scale * scale

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    idx = list(range(n))
    tris = []
    guard = 0
    while len(idx) > 3:
        clipped = False
        m = len(idx)
        for i in range(m):
            ia, ib, ic = idx[(i - 1) % m], idx[i], idx[(i + 1) % m]
            a, b, c = coords[ia], coords[ib], coords[ic]
            if orient(a, b, c) <= eps:
                continue  # reflex or flat corner, not an ear
            blocked = False
            for jj in idx:
                if jj in (ia, ib, ic):
                    continue
                p = coords[jj]
                if (
                    orient(a, b, p) >= -eps
                    and orient(b, c, p) >= -eps
                    and orient(c, a, p) >= -eps
                ):
                    blocked = True
                    break
            if not blocked:
                tris.append((ia, ib, ic))
                idx.pop(i)
                clipped = True
                break
        guard += 1
        if not clipped or guard > 4 * n * n:
            raise GeometryError("ear clipping failed; polygon may self-intersect")
    tris.append(tuple(idx))
    return tris


def polygon_quadrature(geom, degree: int) -> QuadratureRule:
    """Exact rule on a simple polygon, via ear clipping into triangles.

    ``geom`` is an ElementGeom or an (n, 2) coordinate array, CCW.
    """
    if degree < 0:
        raise InvalidParameterError("quadrature degree must be non-negative")
    coords = geom.coords if hasattr(geom, "coords") else np.asarray(geom, dtype=float)
    pts_list, w_list = [], []
    for tri in ear_clip(coords):
        rule = triangle_quadrature(coords[list(tri)], degree)
        pts_list.append(rule.points)
        w_list.append(rule.weights)
    return QuadratureRule(
        points=np.vstack(pts_list), weights=np.concatenate(w_list), degree=degree
    )


@lru_cache(maxsize=None)
def gauss_lobatto(n: int):
    """n-point Gauss-Lobatto rule on [-1, 1]; exact for degree 2n - 3."""
    if n < 2:
        raise InvalidParameterError("Gauss-Lobatto needs at least 2 nodes")
    if n == 2:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    leg = np.polynomial.legendre.Legendre.basis(n - 1)
    interior = np.sort(leg.deriv().roots())
    nodes = np.concatenate([[-1.0], interior, [1.0]])
    weights = 2.0 / (n * (n - 1) * leg(nodes) ** 2)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def edge_gauss_lobatto(k: int):
    """(k+1)-node Lobatto rule on the reference edge [-1, 1].

    The k-1 interior nodes are the edge collocation points of the velocity
    spaces, so the rule doubles as the edge DoF layout.
    """
    if k < 2:
        raise InvalidParameterError("edge rule requires k >= 2")
    return gauss_lobatto(k + 1)


def poly_mass_matrix(geom, basis_a, basis_b) -> np.ndarray:
    """Matrix of integrals of products of two bases on the same element.

    Works for scalar bases (eval -> (npts, n)) and vector bases
    (eval -> (npts, n, 2)); mixed scalar/vector input is rejected.
    """
    degree = _basis_degree(basis_a) + _basis_degree(basis_b)
    rule = polygon_quadrature(geom, degree)
    va = basis_a.eval(rule.points)
    vb = basis_b.eval(rule.points)
    if va.ndim != vb.ndim:
        raise InvalidParameterError("cannot pair a scalar basis with a vector basis")
    if va.ndim == 2:
        return va.T @ (rule.weights[:, None] * vb)
    return np.einsum("qid,q,qjd->ij", va, rule.weights, vb)


def _basis_degree(basis) -> int:
    if isinstance(basis, ScaledMonomialBasis):
        return basis.degree
    if isinstance(basis, VectorPolyBasis):
        return basis.scalar.degree
    raise InvalidParameterError(f"unsupported basis type {type(basis).__name__}")


# ---------------------------------------------------------------------------
# per-element polynomial calculus
# ---------------------------------------------------------------------------


class ElementPolynomials:
    """Monomial calculus on one cell: mass matrices, derivative and shift
    operators, and the gradient/rotated splitting of vector polynomials.

    Scalar coefficients live in the degree-(k+1) monomial basis of the cell
    (anchored at the centroid, scaled by the diameter); vector polynomials
    of degree d use the component-blocked layout of size 2*n_poly(d).
    """

    def __init__(self, geom, k: int, quad_degree: int | None = None):
        self.geom = geom
        self.k = k
        self.max_degree = k + 1
        self.scalar = ScaledMonomialBasis(self.max_degree, geom.centroid, geom.diameter)
        self.quad = polygon_quadrature(geom, quad_degree or (2 * k + 4))
        vals = self.scalar.eval(self.quad.points)
        self.H = vals.T @ (self.quad.weights[:, None] * vals)
        self.integrals = self.H[0].copy()  # first monomial is identically 1
        self.Dx, self.Dy = self.scalar.derivative_matrices()
        self.Sx, self.Sy = self.scalar.shift_matrices()

    def basis(self, degree: int) -> ScaledMonomialBasis:
        return ScaledMonomialBasis(degree, self.geom.centroid, self.geom.diameter)

    def mass(self, d_row: int, d_col: int) -> np.ndarray:
        return self.H[: n_poly(d_row), : n_poly(d_col)]

    def vector_mass(self, degree: int) -> np.ndarray:
        n = n_poly(degree)
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.H[:n, :n]
        out[n:, n:] = self.H[:n, :n]
        return out

    def grad_gram(self, degree: int) -> np.ndarray:
        """Gram matrix of componentwise gradients of the vector basis."""
        Gs = self.Dx.T @ self.H @ self.Dx + self.Dy.T @ self.H @ self.Dy
        n = n_poly(degree)
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = Gs[:n, :n]
        out[n:, n:] = Gs[:n, :n]
        return out

    def laplacian(self, degree: int) -> np.ndarray:
        """Coefficients of the componentwise Laplacian of the degree-``degree``
        vector basis, expressed in the degree-(degree-2) vector layout."""
        n, nm = n_poly(degree), n_poly(degree - 2)
        Ls = (self.Dx @ self.Dx + self.Dy @ self.Dy)[:nm, :n]
        out = np.zeros((2 * nm, 2 * n))
        out[:nm, :n] = Ls
        out[nm:, n:] = Ls
        return out

    def divergence(self, degree: int) -> np.ndarray:
        """Coefficient map from the degree-``degree`` vector layout to the
        divergence in the scalar basis of degree ``degree - 1``."""
        n, nd = n_poly(degree), n_poly(degree - 1)
        out = np.zeros((nd, 2 * n))
        out[:, :n] = self.Dx[:nd, :n]
        out[:, n:] = self.Dy[:nd, :n]
        return out

    def rot(self, degree: int) -> np.ndarray:
        """Scalar rotation d(v_y)/dx - d(v_x)/dy of the vector basis."""
        n, nd = n_poly(degree), n_poly(degree - 1)
        out = np.zeros((nd, 2 * n))
        out[:, :n] = -self.Dy[:nd, :n]
        out[:, n:] = self.Dx[:nd, :n]
        return out

    def grad_basis(self, degree: int) -> np.ndarray:
        """Columns: gradients of the scalar monomials of degree 1..degree+1,
        as vector polynomials of degree ``degree``; spans the gradient part
        of the vector-polynomial splitting."""
        n = n_poly(degree)
        cols = n_poly(degree + 1) - 1
        out = np.zeros((2 * n, cols))
        out[:n] = self.Dx[:n, 1 : cols + 1]
        out[n:] = self.Dy[:n, 1 : cols + 1]
        return out

    def perp_basis(self, degree: int) -> np.ndarray:
        """Columns: (eta, -xi) * m for m of degree <= degree-1, the rotated
        complement fields, as vector polynomials of degree ``degree``."""
        n = n_poly(degree)
        cols = n_poly(degree - 1)
        out = np.zeros((2 * n, cols))
        out[:n] = self.Sy[:n, :cols]
        out[n:] = -self.Sx[:n, :cols]
        return out

    def perp_complement(self, degree: int | None = None) -> np.ndarray:
        """Basis of the rotated fields of degree k that are L2-orthogonal to
        those of degree k-2; 2k-1 columns, orthogonalized on this cell."""
        k = self.k if degree is None else degree
        full = self.perp_basis(k)
        n_low = n_poly(k - 3)
        low, cand = full[:, :n_low], full[:, n_low:]
        return _m_orthogonalize(self.vector_mass(k), low, cand)

    def scalar_complement(self, degree: int | None = None) -> np.ndarray:
        """Basis of scalar polynomials of degree k orthogonal to all of
        degree k-2; 2k+1 columns over the scalar basis."""
        k = self.k if degree is None else degree
        n_k, n_low = n_poly(k), n_poly(k - 2)
        eye = np.eye(n_k)
        return _m_orthogonalize(self.mass(k, k), eye[:, :n_low], eye[:, n_low:])


def _m_orthogonalize(M: np.ndarray, fixed: np.ndarray, cand: np.ndarray) -> np.ndarray:
    """Orthogonalize ``cand`` columns against ``fixed`` (and each other) in
    the inner product M, by modified Gram-Schmidt with re-orthogonalization.

    Raises ConditioningError when a candidate collapses numerically.
    """
    out = cand.astype(float).copy()
    basis = [fixed[:, j] for j in range(fixed.shape[1])]
    norms = [float(b @ M @ b) for b in basis]
    result = []
    for j in range(out.shape[1]):
        v = out[:, j]
        v0 = np.sqrt(float(v @ M @ v))
        for _ in range(2):  # re-orthogonalization pass
            for b, nb in zip(basis, norms):
                v = v - (float(b @ M @ v) / nb) * b
        nv = np.sqrt(float(v @ M @ v))
        if nv < _RANK_TOL * v0:
            raise ConditioningError("complement basis is numerically rank deficient")
        basis.append(v)
        norms.append(nv * nv)
        result.append(v / nv)
    return np.column_stack(result)


def complement_basis(geom, k: int) -> VectorPolyBasis:
    """Orthogonalized basis of the degree-k rotated fields modulo the
    degree-(k-2) ones, as a :class:`VectorPolyBasis` on the element."""
    if k < 2:
        raise InvalidParameterError("complement basis requires k >= 2")
    ctx = ElementPolynomials(geom, k)
    coeffs = ctx.perp_complement()
    ns, n_full = n_poly(k), ctx.scalar.n
    full = np.zeros((2 * n_full, coeffs.shape[1]))
    full[:ns] = coeffs[:ns]
    full[n_full : n_full + ns] = coeffs[ns:]
    return VectorPolyBasis(ctx.scalar, full)
