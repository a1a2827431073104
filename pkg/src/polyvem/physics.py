"""Problem drivers: Darcy, Brinkman, and the reduced Brinkman variant.

Strong forms solved (matching the assembled variational system):

    Darcy:      Kinv u + grad p = g,   div u = f,   u.n = 0 on the boundary
    Brinkman:   -mu Lap u + Kinv u + grad p = f,   div u = 0,   u = u_D

Internally the saddle system is assembled in the symmetric convention
with the transposed divergence block in the first row, which flips the
sign of the multiplier block; drivers negate it so the returned pressure
satisfies the strong forms above.

All evaluation of the discrete velocity goes through its polynomial
projections; virtual functions are never evaluated pointwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .errors import DataError, DomainError, InvalidParameterError
from .mesh import element_geometry
from .polybasis import n_poly, polygon_quadrature
from .vem_local import SCHEMES, LocalElement

EQUATIONS = ("darcy", "brinkman")

MIN_VISCOSITY = 1e-14  # smaller values are indistinguishable from the Darcy limit


@dataclass
class ProblemSpec:
    """Data of one solve: equation, scheme, degree, coefficients, sources.

    ``permeability`` is a constant SPD 2x2 tensor or a per-cell list of
    them.  ``mass_source`` is the scalar divergence datum (Darcy only);
    ``momentum_source`` the vector load; ``dirichlet`` the boundary
    velocity trace (Brinkman only).
    """

    equation: str
    scheme: str = "div_free"
    k: int = 2
    permeability: object = None
    mu: float = 0.0
    mass_source: object = None
    momentum_source: object = None
    dirichlet: object = None

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise InvalidParameterError(f"unknown equation {self.equation!r}")
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")
        if self.equation == "darcy" and self.scheme == "reduced":
            raise InvalidParameterError("the reduced scheme is a Brinkman discretization")
        if self.equation == "brinkman":
            if self.mu == 0.0:
                raise InvalidParameterError(
                    "mu = 0 is the Darcy limit; use the darcy equation instead"
                )
            if self.mu < MIN_VISCOSITY:
                raise InvalidParameterError(f"mu must be >= {MIN_VISCOSITY:g}, got {self.mu:g}")

    def inverse_permeability(self, cell: int) -> np.ndarray:
        K = self.permeability
        if K is None:
            return np.eye(2)
        if isinstance(K, (list, tuple)):
            K = K[cell]
        K = np.asarray(K, dtype=float)
        if K.shape != (2, 2) or not np.allclose(K, K.T):
            raise InvalidParameterError("permeability must be a symmetric 2x2 tensor")
        if np.linalg.eigvalsh(K).min() <= 0.0:
            raise InvalidParameterError("permeability must be positive definite")
        return np.linalg.inv(K)


@dataclass
class DiscreteSolution:
    """Velocity DoF vector, cellwise pressure, and cached projections."""

    mesh: object
    spec: ProblemSpec
    dof_map: assembly.GlobalDofMap
    elements: list
    velocity: np.ndarray
    pressure: np.ndarray  # (n_cells, pressure_dim), strong-form sign
    diagnostics: dict = field(default_factory=dict)

    @property
    def scheme(self) -> str:
        return self.spec.scheme

    @property
    def k(self) -> int:
        return self.spec.k

    def cell_dofs(self, c: int) -> np.ndarray:
        return assembly.cell_velocity(self.dof_map, self.velocity, c)

    def velocity_coeffs(self, c: int) -> np.ndarray:
        """Degree-k L2 projection of the velocity on cell ``c``."""
        return self.elements[c].l2_proj @ self.cell_dofs(c)

    def gradient_coeffs(self, c: int) -> np.ndarray:
        """(2, 2, n) coefficients of the projected velocity gradient."""
        return self.elements[c].grad_proj @ self.cell_dofs(c)

    def divergence_coeffs(self, c: int) -> np.ndarray:
        """Scheme's divergence representation: the exact elementwise
        polynomial where available, otherwise its degree-k L2 projection."""
        el = self.elements[c]
        dofs = self.cell_dofs(c)
        if el.div_coeffs is not None:
            out = np.zeros(n_poly(self.k))
            out[: el.div_coeffs.shape[0]] = el.div_coeffs @ dofs
            return out
        return el.div_proj @ dofs

    def pressure_coeffs(self, c: int) -> np.ndarray:
        return self.pressure[c]

    def velocity_l2_norm(self) -> float:
        total = 0.0
        for c, el in enumerate(self.elements):
            coeffs = self.velocity_coeffs(c)
            total += coeffs @ el.ctx.vector_mass(self.k) @ coeffs
        return float(np.sqrt(total))


def evaluate_solution(solution: DiscreteSolution, cell: int, points) -> dict:
    """Projected velocity, gradient, divergence, and pressure at points
    inside ``cell``; raises DomainError for points outside it."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    el = solution.elements[cell]
    coords = solution.mesh.cell_coords(cell)
    for p in pts:
        if not _point_in_polygon(p, coords, tol=1e-12 * el.geom.diameter):
            raise DomainError(f"point {p} lies outside cell {cell}")
    k = solution.k
    n_k = n_poly(k)
    vals = el.ctx.scalar.eval(pts)
    u_c = solution.velocity_coeffs(cell)
    g_c = solution.gradient_coeffs(cell)
    velocity = np.column_stack([vals[:, :n_k] @ u_c[:n_k], vals[:, :n_k] @ u_c[n_k:]])
    gradient = np.einsum("qn,ijn->qij", vals[:, : n_poly(k - 1)], g_c)
    divergence = vals[:, :n_k] @ solution.divergence_coeffs(cell)
    pressure = vals[:, : solution.dof_map.pressure_dim] @ solution.pressure_coeffs(cell)
    return {
        "velocity": velocity,
        "gradient": gradient,
        "divergence": divergence,
        "pressure": pressure,
    }


def _point_in_polygon(p, coords, tol=0.0) -> bool:
    n = coords.shape[0]
    inside = False
    for i in range(n):
        a, b = coords[i], coords[(i + 1) % n]
        # on-edge counts as inside
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if abs(cross) <= max(tol, 1e-14) and min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol \
                and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol:
            return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            x_int = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
            if x_int > p[0]:
                inside = not inside
    return inside


def project_load(geom, f, k: int, scheme: str = "div_free") -> np.ndarray:
    """Local load vector of a vector field: moments against the L2-projected
    DoF basis functions."""
    return LocalElement(geom, k, scheme).load_vector(f)


def build_elements(mesh, k: int, scheme: str) -> list:
    return [LocalElement(element_geometry(mesh, c), k, scheme) for c in range(mesh.n_cells)]


def _source_mean(mesh, f) -> tuple[float, float]:
    total, norm = 0.0, 0.0
    for c in range(mesh.n_cells):
        geom = element_geometry(mesh, c)
        rule = polygon_quadrature(geom, 8)
        fv = np.asarray(f(rule.points), dtype=float)
        total += float(rule.weights @ fv)
        norm += float(rule.weights @ fv**2)
    return total, np.sqrt(norm)


def solve_darcy(mesh, spec: ProblemSpec, elements=None) -> DiscreteSolution:
    """Mixed Darcy solve with zero normal trace on the boundary."""
    if spec.equation != "darcy":
        raise InvalidParameterError("spec.equation must be 'darcy'")
    if spec.mass_source is None:
        raise InvalidParameterError("darcy requires the mass source (divergence datum)")
    total, norm = _source_mean(mesh, spec.mass_source)
    if abs(total) > 1e-8 * max(norm, 1.0):
        raise DataError(
            f"mass source integrates to {total:.3e}; no-flux boundary needs zero mean"
        )
    t0 = time.perf_counter()
    if elements is None:
        elements = build_elements(mesh, spec.k, spec.scheme)
    dof_map = assembly.build_dof_map(mesh, spec.k, spec.scheme, "darcy_normal_trace")
    mats, alphas = [], []
    for c, el in enumerate(elements):
        A, alpha = el.darcy_form(spec.inverse_permeability(c))
        mats.append(A)
        alphas.append(alpha)
    loads = None
    if spec.momentum_source is not None:
        loads = [el.load_vector(spec.momentum_source) for el in elements]
    prhs = [el.scalar_moments(spec.mass_source) for el in elements]
    system = assembly.assemble(dof_map, elements, mats, loads, prhs)
    result = assembly.solve(system)
    solution = DiscreteSolution(
        mesh=mesh,
        spec=spec,
        dof_map=dof_map,
        elements=elements,
        velocity=result.velocity,
        pressure=-result.pressure,
        diagnostics={
            "residual": result.residual,
            "pressure_mean": -result.pressure_mean,
            "stabilizer_mean": float(np.mean(alphas)),
            "solve_seconds": time.perf_counter() - t0,
            "n_unknowns": system.matrix.shape[0],
        },
    )
    solution.diagnostics.update(divergence_report(solution))
    return solution


def _solve_brinkman_impl(mesh, spec: ProblemSpec, elements) -> DiscreteSolution:
    if spec.equation != "brinkman":
        raise InvalidParameterError("spec.equation must be 'brinkman'")
    if spec.momentum_source is None:
        raise InvalidParameterError("brinkman requires the momentum source")
    t0 = time.perf_counter()
    if elements is None:
        elements = build_elements(mesh, spec.k, spec.scheme)
    dof_map = assembly.build_dof_map(mesh, spec.k, spec.scheme, "dirichlet")
    mats = [el.brinkman_form(spec.mu, spec.inverse_permeability(c)) for c, el in enumerate(elements)]
    loads = [el.load_vector(spec.momentum_source) for el in elements]
    system = assembly.assemble(dof_map, elements, mats, loads, None, dirichlet=spec.dirichlet)
    result = assembly.solve(system)
    solution = DiscreteSolution(
        mesh=mesh,
        spec=spec,
        dof_map=dof_map,
        elements=elements,
        velocity=result.velocity,
        pressure=-result.pressure,
        diagnostics={
            "residual": result.residual,
            "pressure_mean": -result.pressure_mean,
            "solve_seconds": time.perf_counter() - t0,
            "n_unknowns": system.matrix.shape[0],
        },
    )
    solution.diagnostics.update(divergence_report(solution))
    return solution


def solve_brinkman(mesh, spec: ProblemSpec, elements=None) -> DiscreteSolution:
    """Brinkman solve on the full velocity/pressure pair."""
    if spec.scheme == "reduced":
        raise InvalidParameterError("use solve_brinkman_reduced for the reduced scheme")
    return _solve_brinkman_impl(mesh, spec, elements)


def solve_brinkman_reduced(mesh, spec: ProblemSpec, elements=None) -> DiscreteSolution:
    """Brinkman solve on the reduced pair (constant divergence, cellwise
    constant pressure); the velocity coincides with the full solve."""
    if spec.scheme != "reduced":
        spec = ProblemSpec(
            equation=spec.equation,
            scheme="reduced",
            k=spec.k,
            permeability=spec.permeability,
            mu=spec.mu,
            mass_source=spec.mass_source,
            momentum_source=spec.momentum_source,
            dirichlet=spec.dirichlet,
        )
    return _solve_brinkman_impl(mesh, spec, elements)


def divergence_report(solution: DiscreteSolution) -> dict:
    """Computable divergence diagnostics.

    ``div_rel``: largest elementwise L2 norm of the divergence
    representation relative to the velocity norm (the pointwise
    divergence-free check, meaningful when the mass source vanishes).

    ``div_vs_source_rel``: distance of the divergence representation from
    the cellwise L2 projection of the mass source, relative to the source
    norm.  The exactly divergence-reconstructing schemes drive this to the
    solver tolerance; the classical space cannot, because its divergence
    representation carries degree-k moments the projected mass balance
    does not control.
    """
    k = solution.k
    n_k = n_poly(k)
    u_norm = solution.velocity_l2_norm()
    div_max = 0.0
    defect_sq = 0.0
    source_sq = 0.0
    f = solution.spec.mass_source
    for c, el in enumerate(solution.elements):
        d = solution.divergence_coeffs(c)
        H = el.ctx.mass(k, k)
        div_max = max(div_max, float(np.sqrt(d @ H @ d)))
        if f is not None:
            proj = np.zeros(n_k)
            proj[: n_poly(k - 1)] = np.linalg.solve(
                el.ctx.mass(k - 1, k - 1), el.scalar_moments(f)
            )
            diff = d - proj
            defect_sq += float(diff @ H @ diff)
            source_sq += float(proj @ H @ proj)
    report = {"div_max": div_max, "div_rel": div_max / max(u_norm, 1e-300)}
    if f is not None:
        report["div_vs_source_rel"] = float(np.sqrt(defect_sq / max(source_sq, 1e-300)))
    return report
