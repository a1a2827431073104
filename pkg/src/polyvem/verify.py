"""Manufactured solutions, error quantities, and convergence studies.

The error quantities are the computable ones: the discrete velocity enters
only through its polynomial projections (L2 projection of the velocity and
of its gradient, and the scheme's divergence representation), never through
pointwise values of virtual functions.

Built-in cases:

``test1_darcy``
    Trigonometric Darcy flow with unit permeability, no-flux boundary and
    zero momentum source: u = pi (sin px cos py, cos px sin py),
    p = cos px cos py.  The velocity sign is the one compatible with the
    momentum balance Kinv u + grad p = 0.
``test1_darcy_as_printed``
    The mirrored reading u = -grad p; the momentum balance then needs the
    source g = 2u, supplied by the case.
``test2_brinkman``
    Divergence-free trigonometric Brinkman flow with inhomogeneous
    Dirichlet data: u = (sin px cos py, -cos px sin py), p = x^2 y^2 - 1/9.
``poly_patch_darcy(k)`` / ``poly_patch_brinkman(k)``
    Random polynomial pairs of exactly reproducible degree for patch tests.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .errors import InvalidParameterError
from .mesh import generate_mesh
from .physics import (
    DiscreteSolution,
    ProblemSpec,
    build_elements,
    solve_brinkman,
    solve_brinkman_reduced,
    solve_darcy,
)
from .polybasis import n_poly

CSV_COLUMNS = (
    "scheme,family,k,mu,h,ndof_u,ndof_p,err_u_H1,err_u_Hdiv,err_u_L2,err_p_L2,"
    "rate_u_H1,rate_u_Hdiv,rate_u_L2,rate_p_L2,solve_seconds"
).split(",")

_ERROR_KEYS = ("err_u_H1", "err_u_Hdiv", "err_u_L2", "err_p_L2")


# ---------------------------------------------------------------------------
# small symbolic 2D polynomials for the patch cases
# ---------------------------------------------------------------------------


class Poly2D:
    """Bivariate polynomial as an exponent->coefficient map."""

    def __init__(self, coeffs=None):
        self.coeffs = {key: float(v) for key, v in (coeffs or {}).items() if v != 0.0}

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros(pts.shape[0])
        for (ax, ay), c in self.coeffs.items():
            out += c * pts[:, 0] ** ax * pts[:, 1] ** ay
        return out

    def dx(self):
        return Poly2D({(ax - 1, ay): c * ax for (ax, ay), c in self.coeffs.items() if ax})

    def dy(self):
        return Poly2D({(ax, ay - 1): c * ay for (ax, ay), c in self.coeffs.items() if ay})

    def __add__(self, other):
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            out[key] = out.get(key, 0.0) + c
        return Poly2D(out)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, other):
        if isinstance(other, Poly2D):
            out = {}
            for (a1, b1), c1 in self.coeffs.items():
                for (a2, b2), c2 in other.coeffs.items():
                    key = (a1 + a2, b1 + b2)
                    out[key] = out.get(key, 0.0) + c1 * c2
            return Poly2D(out)
        return Poly2D({key: c * other for key, c in self.coeffs.items()})

    def mean_unit_square(self) -> float:
        return sum(c / ((ax + 1) * (ay + 1)) for (ax, ay), c in self.coeffs.items())

    @staticmethod
    def random(degree, rng, scale=1.0):
        coeffs = {}
        for ax in range(degree + 1):
            for ay in range(degree + 1 - ax):
                coeffs[(ax, ay)] = scale * rng.uniform(-1.0, 1.0)
        return Poly2D(coeffs)


# ---------------------------------------------------------------------------
# manufactured cases
# ---------------------------------------------------------------------------


@dataclass
class ManufacturedCase:
    """Exact fields plus the data they induce for each driver."""

    name: str
    velocity: object                 # pts -> (n, 2)
    pressure: object                 # pts -> (n,)
    velocity_grad: object            # pts -> (n, 2, 2)
    divergence: object               # pts -> (n,)
    permeability: np.ndarray = None  # constant SPD tensor (identity if None)
    mass_source: object = None       # Darcy divergence datum
    darcy_momentum: object = None    # Darcy momentum source g (may be None)
    brinkman_momentum: object = None # mu -> (pts -> (n, 2))
    equations: tuple = ("darcy",)

    def darcy_spec(self, k=2, scheme="div_free") -> ProblemSpec:
        if "darcy" not in self.equations:
            raise InvalidParameterError(f"case {self.name} has no darcy data")
        return ProblemSpec(
            equation="darcy",
            scheme=scheme,
            k=k,
            permeability=self.permeability,
            mass_source=self.mass_source or self.divergence,
            momentum_source=self.darcy_momentum,
        )

    def brinkman_spec(self, mu, k=2, scheme="div_free") -> ProblemSpec:
        if "brinkman" not in self.equations:
            raise InvalidParameterError(f"case {self.name} has no brinkman data")
        return ProblemSpec(
            equation="brinkman",
            scheme=scheme,
            k=k,
            permeability=self.permeability,
            mu=mu,
            momentum_source=self.brinkman_momentum(mu),
            dirichlet=self.velocity,
        )

    def self_check(self, n_points=100, seed=0, tol=1e-12) -> None:
        """Internal consistency: the divergence field matches the trace of
        the gradient field at random points."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.05, 0.95, size=(n_points, 2))
        grad = np.asarray(self.velocity_grad(pts))
        div = np.asarray(self.divergence(pts))
        trace = grad[:, 0, 0] + grad[:, 1, 1]
        if np.abs(trace - div).max() > tol * max(1.0, np.abs(div).max()):
            raise InvalidParameterError(f"case {self.name}: divergence field inconsistent")


def _test1_fields(sign):
    pi = np.pi

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return sign * pi * np.column_stack(
            [np.sin(pi * x) * np.cos(pi * y), np.cos(pi * x) * np.sin(pi * y)]
        )

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        cc = np.cos(pi * x) * np.cos(pi * y)
        ss = np.sin(pi * x) * np.sin(pi * y)
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = sign * pi**2 * cc
        out[:, 0, 1] = -sign * pi**2 * ss
        out[:, 1, 0] = -sign * pi**2 * ss
        out[:, 1, 1] = sign * pi**2 * cc
        return out

    def div_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return sign * 2 * pi**2 * np.cos(pi * x) * np.cos(pi * y)

    def p(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.cos(pi * x) * np.cos(pi * y)

    return u, grad_u, div_u, p


def make_test1(as_printed: bool = False) -> ManufacturedCase:
    sign = -1.0 if as_printed else 1.0
    u, grad_u, div_u, p = _test1_fields(sign)
    momentum = None
    if as_printed:
        # with u = grad p the momentum balance needs the source g = 2u
        momentum = lambda pts: 2.0 * u(pts)
    return ManufacturedCase(
        name="test1_darcy_as_printed" if as_printed else "test1_darcy",
        velocity=u,
        pressure=p,
        velocity_grad=grad_u,
        divergence=div_u,
        mass_source=div_u,
        darcy_momentum=momentum,
        equations=("darcy",),
    )


def make_test2() -> ManufacturedCase:
    pi = np.pi

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack(
            [np.sin(pi * x) * np.cos(pi * y), -np.cos(pi * x) * np.sin(pi * y)]
        )

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        cc = np.cos(pi * x) * np.cos(pi * y)
        ss = np.sin(pi * x) * np.sin(pi * y)
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = pi * cc
        out[:, 0, 1] = -pi * ss
        out[:, 1, 0] = pi * ss
        out[:, 1, 1] = -pi * cc
        return out

    def p(pts):
        x, y = pts[:, 0], pts[:, 1]
        return x**2 * y**2 - 1.0 / 9.0

    def brinkman_momentum(mu):
        def f(pts):
            x, y = pts[:, 0], pts[:, 1]
            grad_p = np.column_stack([2 * x * y**2, 2 * x**2 * y])
            return (2 * mu * pi**2 + 1.0) * u(pts) + grad_p

        return f

    return ManufacturedCase(
        name="test2_brinkman",
        velocity=u,
        pressure=p,
        velocity_grad=grad_u,
        divergence=lambda pts: np.zeros(pts.shape[0]),
        brinkman_momentum=brinkman_momentum,
        equations=("brinkman",),
    )


def _poly_case_fields(u1, u2, p):
    ux, uy = (u1.dx(), u1.dy()), (u2.dx(), u2.dy())

    def velocity(pts):
        return np.column_stack([u1(pts), u2(pts)])

    def grad(pts):
        out = np.empty((np.asarray(pts).shape[0], 2, 2))
        out[:, 0, 0] = ux[0](pts)
        out[:, 0, 1] = ux[1](pts)
        out[:, 1, 0] = uy[0](pts)
        out[:, 1, 1] = uy[1](pts)
        return out

    divergence = u1.dx() + u2.dy()
    return velocity, grad, divergence, p


def poly_patch_darcy(k: int, seed: int = 0, permeability=None) -> ManufacturedCase:
    """Degree-k velocity with vanishing normal trace on the unit square,
    degree-(k-1) zero-mean pressure; the momentum source closes the balance."""
    rng = np.random.default_rng(seed)
    x, y, one = Poly2D({(1, 0): 1.0}), Poly2D({(0, 1): 1.0}), Poly2D({(0, 0): 1.0})
    bubble_x = x * (one - x)
    bubble_y = y * (one - y)
    u1 = bubble_x * Poly2D.random(k - 2, rng)
    u2 = bubble_y * Poly2D.random(k - 2, rng)
    p = Poly2D.random(k - 1, rng)
    p = p - Poly2D({(0, 0): p.mean_unit_square()})
    K = np.eye(2) if permeability is None else np.asarray(permeability, dtype=float)
    kinv = np.linalg.inv(K)
    velocity, grad, divergence, _ = _poly_case_fields(u1, u2, p)
    px, py = p.dx(), p.dy()

    def momentum(pts):
        uv = velocity(pts)
        return uv @ kinv.T + np.column_stack([px(pts), py(pts)])

    return ManufacturedCase(
        name=f"poly_patch_darcy_k{k}",
        velocity=velocity,
        pressure=lambda pts: p(pts),
        velocity_grad=grad,
        divergence=lambda pts: divergence(pts),
        permeability=K,
        mass_source=lambda pts: divergence(pts),
        darcy_momentum=momentum,
        equations=("darcy",),
    )


def poly_patch_brinkman(k: int, seed: int = 0, permeability=None) -> ManufacturedCase:
    """Divergence-free degree-k velocity (a curl of a random potential) and
    degree-(k-1) zero-mean pressure, with inhomogeneous Dirichlet data."""
    rng = np.random.default_rng(seed)
    psi = Poly2D.random(k + 1, rng)
    u1, u2 = psi.dy(), psi.dx() * (-1.0)
    p = Poly2D.random(k - 1, rng)
    p = p - Poly2D({(0, 0): p.mean_unit_square()})
    K = np.eye(2) if permeability is None else np.asarray(permeability, dtype=float)
    kinv = np.linalg.inv(K)
    velocity, grad, divergence, _ = _poly_case_fields(u1, u2, p)
    lap1 = u1.dx().dx() + u1.dy().dy()
    lap2 = u2.dx().dx() + u2.dy().dy()
    px, py = p.dx(), p.dy()

    def brinkman_momentum(mu):
        def f(pts):
            uv = velocity(pts)
            lap = np.column_stack([lap1(pts), lap2(pts)])
            return -mu * lap + uv @ kinv.T + np.column_stack([px(pts), py(pts)])

        return f

    return ManufacturedCase(
        name=f"poly_patch_brinkman_k{k}",
        velocity=velocity,
        pressure=lambda pts: p(pts),
        velocity_grad=grad,
        divergence=lambda pts: divergence(pts),
        permeability=K,
        brinkman_momentum=brinkman_momentum,
        equations=("brinkman",),
    )


def builtin_cases() -> dict:
    return {
        "test1_darcy": make_test1(),
        "test1_darcy_as_printed": make_test1(as_printed=True),
        "test2_brinkman": make_test2(),
        "poly_patch_darcy": poly_patch_darcy,
        "poly_patch_brinkman": poly_patch_brinkman,
    }


# ---------------------------------------------------------------------------
# error quantities
# ---------------------------------------------------------------------------


@dataclass
class ErrorReport:
    err_u_H1: float
    err_u_Hdiv: float
    err_u_L2: float
    err_p_L2: float
    h_max: float
    ndof_u: int
    ndof_p: int
    solve_seconds: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "err_u_H1": self.err_u_H1,
            "err_u_Hdiv": self.err_u_Hdiv,
            "err_u_L2": self.err_u_L2,
            "err_p_L2": self.err_p_L2,
        }


def compute_errors(solution: DiscreteSolution, case: ManufacturedCase) -> ErrorReport:
    """The four computable error quantities against the exact fields."""
    k = solution.k
    n_k, n_g = n_poly(k), n_poly(k - 1)
    l2_sq = h1_sq = div_sq = p_sq = 0.0
    h_max = 0.0
    for c, el in enumerate(solution.elements):
        rule = el.ctx.quad
        vals = el.ctx.scalar.eval(rule.points)
        h_max = max(h_max, el.geom.diameter)

        u_c = solution.velocity_coeffs(c)
        uh = np.column_stack([vals[:, :n_k] @ u_c[:n_k], vals[:, :n_k] @ u_c[n_k:]])
        du = np.asarray(case.velocity(rule.points)) - uh
        l2_sq += float(rule.weights @ (du**2).sum(axis=1))

        g_c = solution.gradient_coeffs(c)
        gh = np.einsum("qn,ijn->qij", vals[:, :n_g], g_c)
        dg = np.asarray(case.velocity_grad(rule.points)) - gh
        h1_sq += float(rule.weights @ (dg**2).sum(axis=(1, 2)))

        dh = vals[:, :n_k] @ solution.divergence_coeffs(c)
        dd = np.asarray(case.divergence(rule.points)) - dh
        div_sq += float(rule.weights @ dd**2)

        ph = vals[:, : solution.dof_map.pressure_dim] @ solution.pressure_coeffs(c)
        dp = np.asarray(case.pressure(rule.points)) - ph
        p_sq += float(rule.weights @ dp**2)
    return ErrorReport(
        err_u_H1=np.sqrt(h1_sq),
        err_u_Hdiv=np.sqrt(div_sq + l2_sq),
        err_u_L2=np.sqrt(l2_sq),
        err_p_L2=np.sqrt(p_sq),
        h_max=h_max,
        ndof_u=solution.dof_map.n_free_velocity,
        ndof_p=solution.dof_map.n_pressure,
        solve_seconds=solution.diagnostics.get("solve_seconds", float("nan")),
    )


def interpolant_solution(mesh, case: ManufacturedCase, k=2, scheme="div_free") -> DiscreteSolution:
    """Pseudo-solution carrying the DoF interpolant of the exact fields;
    useful as an exactness oracle for the error quantities."""
    elements = build_elements(mesh, k, scheme)
    bc = "darcy_normal_trace" if "darcy" in case.equations else "dirichlet"
    dof_map = assembly.build_dof_map(mesh, k, scheme, bc)
    velocity = np.zeros(dof_map.n_velocity)
    pressure = np.zeros((mesh.n_cells, dof_map.pressure_dim))
    for c, el in enumerate(elements):
        velocity[dof_map.cell_dofs[c]] = el.interpolate(case.velocity, div_u=case.divergence)
        moments = el.scalar_moments(case.pressure, degree=k - 1)[: dof_map.pressure_dim]
        mass = el.ctx.mass(k - 1, k - 1)[: dof_map.pressure_dim, : dof_map.pressure_dim]
        pressure[c] = np.linalg.solve(mass, moments)
    spec = ProblemSpec(
        equation="darcy" if "darcy" in case.equations else "brinkman",
        scheme=scheme,
        k=k,
        permeability=case.permeability,
        mu=0.0 if "darcy" in case.equations else 1.0,
        mass_source=case.mass_source or case.divergence,
        momentum_source=lambda pts: np.zeros((np.asarray(pts).shape[0], 2)),
        dirichlet=case.velocity,
    )
    return DiscreteSolution(
        mesh=mesh,
        spec=spec,
        dof_map=dof_map,
        elements=elements,
        velocity=velocity,
        pressure=pressure,
    )


def zero_solution(mesh, case: ManufacturedCase, k=2, scheme="div_free") -> DiscreteSolution:
    sol = interpolant_solution(mesh, case, k, scheme)
    sol.velocity = np.zeros_like(sol.velocity)
    sol.pressure = np.zeros_like(sol.pressure)
    return sol


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceTable:
    case: str
    scheme: str
    family: str
    k: int
    mu: float | None
    rows: list = field(default_factory=list)  # dicts with h, errors, rates

    def add_row(self, h: float, report: ErrorReport) -> None:
        row = {"h": h, **report.as_dict()}
        row["ndof_u"] = report.ndof_u
        row["ndof_p"] = report.ndof_p
        row["solve_seconds"] = report.solve_seconds
        self.rows.append(row)
        self._update_rates()

    def _update_rates(self) -> None:
        for i, row in enumerate(self.rows):
            for key in _ERROR_KEYS:
                rate_key = "rate_" + key[4:]
                if i == 0:
                    row[rate_key] = None
                    continue
                prev = self.rows[i - 1]
                halved = abs(prev["h"] / row["h"] - 2.0) < 1e-9
                if halved and row[key] > 0.0 and prev[key] > 0.0:
                    row[rate_key] = float(np.log2(prev[key] / row[key]))
                else:
                    row[rate_key] = None

    def rate(self, key: str, pair: int = -1):
        """Observed order for one error column, by default on the last pair."""
        rates = [row["rate_" + key[4:]] for row in self.rows[1:]]
        rates = [r for r in rates if r is not None]
        return rates[pair] if rates else None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def tables_to_csv(tables, stream=None) -> str:
    """Write convergence tables in the documented CSV schema."""
    out = stream or io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in tables:
        for row in t.rows:
            writer.writerow(
                [
                    t.scheme,
                    t.family,
                    str(t.k),
                    "" if t.mu is None else _fmt(t.mu),
                    _fmt(row["h"]),
                    str(row["ndof_u"]),
                    str(row["ndof_p"]),
                    _fmt(row["err_u_H1"]),
                    _fmt(row["err_u_Hdiv"]),
                    _fmt(row["err_u_L2"]),
                    _fmt(row["err_p_L2"]),
                    _fmt(row.get("rate_u_H1")),
                    _fmt(row.get("rate_u_Hdiv")),
                    _fmt(row.get("rate_u_L2")),
                    _fmt(row.get("rate_p_L2")),
                    _fmt(row["solve_seconds"]),
                ]
            )
    return out.getvalue() if stream is None else ""


def solve_case(mesh, case: ManufacturedCase, k=2, scheme="div_free", mu=None,
               elements=None) -> DiscreteSolution:
    """Dispatch a case to the right driver."""
    if "darcy" in case.equations:
        return solve_darcy(mesh, case.darcy_spec(k=k, scheme=scheme), elements=elements)
    spec = case.brinkman_spec(mu, k=k, scheme=scheme)
    if scheme == "reduced":
        return solve_brinkman_reduced(mesh, spec, elements=elements)
    return solve_brinkman(mesh, spec, elements=elements)


def run_convergence(
    case: ManufacturedCase,
    family: str,
    k: int,
    schemes,
    h_values,
    mu_values=None,
    seed: int = 0,
    threads: int = 1,
) -> list:
    """One convergence table per (scheme, mu) combination.

    Solver failures are recorded in the affected row (errors set to NaN)
    and the study continues.
    """
    if isinstance(schemes, str):
        schemes = [schemes]
    mus = [None] if "darcy" in case.equations else list(mu_values or [1.0])
    jobs = []
    for scheme in schemes:
        for mu in mus:
            for h in h_values:
                jobs.append((scheme, mu, h))

    def run_one(job):
        scheme, mu, h = job
        mesh = generate_mesh(family, h, seed)
        t0 = time.perf_counter()
        try:
            sol = solve_case(mesh, case, k=k, scheme=scheme, mu=mu)
            report = compute_errors(sol, case)
        except Exception as exc:  # recorded per-row, study continues
            report = ErrorReport(
                err_u_H1=float("nan"),
                err_u_Hdiv=float("nan"),
                err_u_L2=float("nan"),
                err_p_L2=float("nan"),
                h_max=h,
                ndof_u=0,
                ndof_p=0,
                solve_seconds=time.perf_counter() - t0,
            )
            report.failure = str(exc)
        return job, report

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(run_one, jobs))
    else:
        results = dict(run_one(j) for j in jobs)

    tables = []
    for scheme in schemes:
        for mu in mus:
            table = ConvergenceTable(case=case.name, scheme=scheme, family=family, k=k, mu=mu)
            for h in h_values:
                table.add_row(h, results[(scheme, mu, h)])
            tables.append(table)
    return tables


def plot_tables(tables, path) -> None:
    """Optional log-log error plots (one panel per error column)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for ax, key in zip(axes.ravel(), _ERROR_KEYS):
        for t in tables:
            hs = [row["h"] for row in t.rows]
            es = [row[key] for row in t.rows]
            label = t.scheme if t.mu is None else f"{t.scheme}, mu={t.mu:g}"
            ax.loglog(hs, es, "o-", label=label)
        ax.set_xlabel("h")
        ax.set_title(key)
        ax.grid(True, which="both", alpha=0.3)
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# structural probes
# ---------------------------------------------------------------------------


def infsup_constant(mesh, k: int = 2, scheme: str = "div_free") -> float:
    """Smallest nonzero generalized singular value of the mixed form
    against the discrete velocity norm (stabilized mass plus divergence
    Gram) and the pressure mass; a dense desk-scale eigensolve."""
    import scipy.linalg

    elements = build_elements(mesh, k, scheme)
    dof_map = assembly.build_dof_map(mesh, k, scheme, "darcy_normal_trace")
    mats = [el.darcy_form(np.eye(2))[0] for el in elements]
    div_grams = []
    for el in elements:
        if el.div_coeffs is not None:
            H = el.ctx.mass(k - 1, k - 1)
            div_grams.append(el.div_coeffs.T @ H @ el.div_coeffs)
        else:
            H = el.ctx.mass(k, k)
            div_grams.append(el.div_proj.T @ H @ el.div_proj)
    A = assembly.scatter_velocity(dof_map, mats)
    Dg = assembly.scatter_velocity(dof_map, div_grams)
    B = assembly.scatter_mixed(dof_map, elements)
    R = dof_map.rotation
    if R is not None:
        A = (R.T @ A @ R).tocsr()
        Dg = (R.T @ Dg @ R).tocsr()
        B = (B @ R).tocsr()
    free = np.setdiff1d(np.arange(dof_map.n_velocity), dof_map.constrained)
    S = (A + Dg)[free][:, free].toarray()
    Bf = B[:, free].toarray()
    MQ = assembly.pressure_mass(dof_map, elements).toarray()
    T = Bf @ np.linalg.solve(S, Bf.T)
    eigs = scipy.linalg.eigh(T, MQ, eigvals_only=True)
    eigs = np.sort(eigs)
    # the constant-pressure mode is the single zero eigenvalue
    return float(np.sqrt(max(eigs[1], 0.0)))
