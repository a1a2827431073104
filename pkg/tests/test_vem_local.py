import numpy as np
import pytest

from polyvem.errors import InvalidParameterError
from polyvem.mesh import build_mesh, element_geometry
from polyvem.polybasis import n_poly, polygon_quadrature
from polyvem.vem_local import SCHEMES, LocalElement, build_dof_layout


def unit_square_geom():
    return element_geometry(build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]]), 0)


def scaled_square_geom(side, origin=(0.0, 0.0)):
    x0, y0 = origin
    verts = [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]
    return element_geometry(build_mesh(verts, [[0, 1, 2, 3]]), 0)


@pytest.fixture(scope="module")
def sample_geoms(request):
    from polyvem.mesh import generate_mesh

    web = generate_mesh("web", 2 / 10, 1)
    vor = generate_mesh("voronoi", 1 / 8, 3)
    return [
        unit_square_geom(),
        element_geometry(web, 5),
        element_geometry(web, 17),
        element_geometry(vor, 30),
    ]


def random_poly(ctx, k, rng):
    return rng.standard_normal(2 * n_poly(k))


def constant_div_poly(ctx, k, rng):
    """curl of a random potential plus a linear swelling: div is constant."""
    n_k = n_poly(k)
    psi = rng.standard_normal(n_poly(k + 1))
    q = np.concatenate([ctx.Dy[:n_k] @ psi, -(ctx.Dx[:n_k] @ psi)])
    q[1] += 0.5
    q[n_k + 2] += 0.25
    return q


# ---------------------------------------------------------------------------
# DoF layout counts
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "scheme,k,n_edges,expected",
    [
        ("div_free", 2, 4, 18),
        ("reduced", 2, 4, 16),
        ("non_div_free", 2, 4, 18),
        ("div_free", 3, 6, 42),
        ("reduced", 3, 6, 37),
        ("non_div_free", 3, 6, 42),
    ],
)
def test_layout_counts(scheme, k, n_edges, expected):
    assert build_dof_layout(scheme, k, n_edges).size == expected


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("n_edges", [3, 4, 5, 6, 8])
def test_layout_count_formulas(k, n_edges):
    df = build_dof_layout("div_free", k, n_edges)
    rd = build_dof_layout("reduced", k, n_edges)
    ndf = build_dof_layout("non_div_free", k, n_edges)
    assert df.size == 2 * n_edges * k + (k - 1) * (k - 2) // 2 + (k + 1) * k // 2 - 1
    assert rd.size == 2 * n_edges * k + (k - 1) * (k - 2) // 2
    assert ndf.size == 2 * n_edges * k + (k - 1) * k
    # the classical space has exactly as many DoFs as the div_free one
    assert ndf.size == df.size


def test_layout_rejects_low_degree():
    with pytest.raises(InvalidParameterError, match="k >= 2"):
        build_dof_layout("div_free", 1, 4)
    with pytest.raises(InvalidParameterError, match="scheme"):
        build_dof_layout("divfree", 2, 4)


# ---------------------------------------------------------------------------
# projectors
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
@pytest.mark.parametrize("k", [2, 3])
def test_projectors_reproduce_polynomials(sample_geoms, scheme, k):
    for geom in sample_geoms:
        el = LocalElement(geom, k, scheme)
        eye = np.eye(2 * n_poly(k))
        assert np.abs(el.h1_proj @ el.dof_eval - eye).max() < 1e-11
        assert np.abs(el.l2_proj @ el.dof_eval - eye).max() < 1e-11


@pytest.mark.parametrize("k", [2, 3])
def test_projectors_reduced_space_polynomials(sample_geoms, k):
    rng = np.random.default_rng(7)
    for geom in sample_geoms:
        el = LocalElement(geom, k, "reduced")
        q = constant_div_poly(el.ctx, k, rng)
        dofs = el.dof_eval @ q
        assert np.abs(el.l2_proj @ dofs - q).max() < 1e-11 * max(1, np.abs(q).max())
        assert np.abs(el.h1_proj @ dofs - q).max() < 1e-11 * max(1, np.abs(q).max())


def test_constant_field_reproduced():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    coeffs = np.zeros(12)
    coeffs[0] = 1.0  # the field (1, 0)
    dofs = el.dof_eval @ coeffs
    assert np.abs(el.h1_proj @ dofs - coeffs).max() < 1e-13
    assert np.abs(el.l2_proj @ dofs - coeffs).max() < 1e-13
    coeffs2 = np.zeros(12)
    coeffs2[6] = 1.0  # the field (0, 1)
    assert np.abs(el.l2_proj @ (el.dof_eval @ coeffs2) - coeffs2).max() < 1e-13


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
def test_h1_orthogonality_on_virtual_function(sample_geoms, scheme):
    # a pure edge-DoF vector is no polynomial; the projection must still
    # satisfy the defining normal equations
    for geom in sample_geoms:
        el = LocalElement(geom, 2, scheme)
        G = el.ctx.grad_gram(2)
        v = np.zeros(el.layout.size)
        v[el.layout.n_vertex + 1] = 1.0
        resid = G @ (el.h1_proj @ v) - el.h1_rhs @ v
        assert np.abs(resid).max() < 1e-11
        # mean anchoring: the projection preserves the cell average
        n_k = n_poly(2)
        anchor = np.zeros((2, 2 * n_k))
        anchor[0, :n_k] = el.ctx.integrals[:n_k]
        anchor[1, n_k:] = el.ctx.integrals[:n_k]
        assert np.abs(anchor @ (el.h1_proj @ v) - el.h1_mean_rows @ v).max() < 1e-12


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
@pytest.mark.parametrize("k", [2, 3])
def test_projector_idempotence(sample_geoms, scheme, k):
    for geom in sample_geoms:
        el = LocalElement(geom, k, scheme)
        for proj in (el.h1_proj, el.l2_proj):
            gap = proj @ el.dof_eval @ proj - proj
            assert np.abs(gap).max() < 1e-11 * max(1.0, np.abs(proj).max())


@pytest.mark.parametrize("k", [2, 3])
def test_projector_idempotence_reduced_subspace(sample_geoms, k):
    # the reduced space only contains constant-divergence polynomials, so
    # idempotence is stated through the lift into the full layout
    rng = np.random.default_rng(43)
    for geom in sample_geoms:
        red = LocalElement(geom, k, "reduced")
        v = rng.standard_normal(red.layout.size)
        full_proj = red.full.l2_proj @ (red.lift @ v)
        assert np.abs(full_proj - red.l2_proj @ v).max() < 1e-11 * max(
            1.0, np.abs(full_proj).max()
        )


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
def test_low_degree_projection_consistent(sample_geoms, scheme):
    # nested projections agree: projecting the degree-k projection onto
    # degree k-2 matches the directly assembled low-degree projection
    k = 3
    for geom in sample_geoms:
        el = LocalElement(geom, k, scheme)
        n_k, n_low = n_poly(k), n_poly(k - 2)
        rows = np.concatenate([np.arange(n_low), n_k + np.arange(n_low)])
        M = el.ctx.vector_mass(k)
        nested = np.linalg.solve(el.ctx.vector_mass(k - 2), (M @ el.l2_proj)[rows])
        assert np.abs(nested - el.l2_proj_low).max() < 1e-11 * max(1.0, np.abs(nested).max())


def test_unisolvence(sample_geoms):
    for geom in sample_geoms:
        for scheme in SCHEMES:
            el = LocalElement(geom, 2, scheme)
            D = el.dof_eval
            scaled = D / np.linalg.norm(D, axis=0)
            assert np.linalg.svd(scaled, compute_uv=False).min() > 1e-10


# ---------------------------------------------------------------------------
# divergence
# ---------------------------------------------------------------------------


def test_divergence_of_linear_field():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    dofs = el.interpolate(lambda p: p, div_u=lambda p: np.full(p.shape[0], 2.0))
    dv = el.div_coeffs @ dofs
    # constant part equals 2, all other coefficients vanish
    vals = el.ctx.scalar.eval(el.ctx.quad.points)[:, : n_poly(1)] @ dv
    assert np.abs(vals - 2.0).max() < 1e-12


def test_divergence_of_rigid_rotation():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    rot = lambda p: np.column_stack([-p[:, 1], p[:, 0]])
    dofs = el.interpolate(rot, div_u=lambda p: np.zeros(p.shape[0]))
    assert np.abs(el.div_coeffs @ dofs).max() < 1e-13


@pytest.mark.parametrize("k", [2, 3])
def test_divergence_matches_symbolic(sample_geoms, k):
    rng = np.random.default_rng(3)
    for geom in sample_geoms:
        el = LocalElement(geom, k, "div_free")
        q = random_poly(el.ctx, k, rng)
        got = el.div_coeffs @ (el.dof_eval @ q)
        expected = el.ctx.divergence(k) @ q
        assert np.abs(got - expected).max() < 1e-12 * max(1.0, np.abs(expected).max())


def test_divergence_unavailable_for_classical_space():
    el = LocalElement(unit_square_geom(), 2, "non_div_free")
    assert el.div_coeffs is None
    # but the projected divergence still reproduces polynomial divergences
    rng = np.random.default_rng(5)
    q = random_poly(el.ctx, 2, rng)
    got = el.div_proj @ (el.dof_eval @ q)
    expected = np.zeros(n_poly(2))
    expected[: n_poly(1)] = el.ctx.divergence(2) @ q
    assert np.abs(got - expected).max() < 1e-11


# ---------------------------------------------------------------------------
# local forms
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
@pytest.mark.parametrize("k", [2, 3])
def test_darcy_form_consistency(sample_geoms, scheme, k):
    # the form agrees with the exact weighted mass pairing whenever one
    # argument is a polynomial (tested against every DoF basis function)
    kinv = np.array([[2.0, 0.5], [0.5, 1.0]])
    rng = np.random.default_rng(11)
    for geom in sample_geoms:
        el = LocalElement(geom, k, scheme)
        A, alpha = el.darcy_form(kinv)
        assert alpha > 0
        q = random_poly(el.ctx, k, rng)
        n_k = n_poly(k)
        w = np.concatenate(
            [kinv[0, 0] * q[:n_k] + kinv[0, 1] * q[n_k:], kinv[1, 0] * q[:n_k] + kinv[1, 1] * q[n_k:]]
        )
        exact = el.moment_matrix.T @ w
        got = A @ (el.dof_eval @ q)
        assert np.abs(got - exact).max() < 1e-10 * np.abs(exact).max()


@pytest.mark.parametrize("scheme", ["div_free", "non_div_free"])
def test_brinkman_form_consistency_and_symmetry(sample_geoms, scheme):
    mu = 0.37
    rng = np.random.default_rng(13)
    for geom in sample_geoms:
        el = LocalElement(geom, 2, scheme)
        A = el.brinkman_form(mu, np.eye(2))
        assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
        q = random_poly(el.ctx, 2, rng)
        exact = el.moment_matrix.T @ q + mu * (el.h1_rhs.T @ q)
        got = A @ (el.dof_eval @ q)
        assert np.abs(got - exact).max() < 1e-10 * np.abs(exact).max()


def test_brinkman_reduces_to_darcy_when_mu_vanishes():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    A0, _ = el.darcy_form(np.eye(2))
    mu = 1e-9
    A = el.brinkman_form(mu, np.eye(2))
    assert np.abs(A - A0).max() <= mu * 1e3


def test_darcy_form_constant_field_energy():
    # v = (1, 0) on the unit square with unit permeability: a(v, v) = 1
    el = LocalElement(unit_square_geom(), 2, "div_free")
    A, _ = el.darcy_form(np.eye(2))
    coeffs = np.zeros(12)
    coeffs[0] = 1.0
    dofs = el.dof_eval @ coeffs
    assert dofs @ A @ dofs == pytest.approx(1.0, rel=1e-12)


def test_stabilizer_scales_with_area():
    _, a1 = LocalElement(scaled_square_geom(1.0), 2, "div_free").darcy_form(np.eye(2))
    _, a2 = LocalElement(scaled_square_geom(0.5), 2, "div_free").darcy_form(np.eye(2))
    assert a2 / a1 == pytest.approx(0.25, rel=0.05)


def test_stability_sandwich(sample_geoms):
    rng = np.random.default_rng(17)
    for geom in sample_geoms[:2]:
        el = LocalElement(geom, 2, "div_free")
        A, _ = el.darcy_form(np.eye(2))
        M = el.ctx.vector_mass(2)
        for _ in range(200):
            v = rng.standard_normal(el.layout.size)
            energy = v @ A @ v
            proj = el.l2_proj @ v
            consistency = proj @ M @ proj
            assert energy > 0.0
            assert energy >= consistency - 1e-12 * abs(energy)


def test_form_rejects_bad_parameters():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    with pytest.raises(InvalidParameterError):
        el.darcy_form(np.array([[1.0, 0.2], [0.0, 1.0]]))
    with pytest.raises(InvalidParameterError):
        el.darcy_form(-np.eye(2))
    with pytest.raises(InvalidParameterError):
        el.viscous_form(0.0)


# ---------------------------------------------------------------------------
# mixed form b
# ---------------------------------------------------------------------------


def test_b_form_linear_field():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    dofs = el.interpolate(lambda p: p, div_u=lambda p: np.full(p.shape[0], 2.0))
    # constant pressure basis function: b = 2 |K|
    assert el.b_form.T[0] @ dofs == pytest.approx(2.0, rel=1e-13)


def test_b_form_rigid_rotation_column_zero():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    rot = lambda p: np.column_stack([-p[:, 1], p[:, 0]])
    dofs = el.interpolate(rot, div_u=lambda p: np.zeros(p.shape[0]))
    assert np.abs(el.b_form.T @ dofs).max() < 1e-13


def test_b_form_two_routes_agree(sample_geoms):
    # the divergence-reconstruction route and the integration-by-parts
    # route are independent implementations; they coincide on polynomials
    rng = np.random.default_rng(23)
    for geom in sample_geoms:
        el_df = LocalElement(geom, 2, "div_free")
        el_ndf = LocalElement(geom, 2, "non_div_free")
        q = random_poly(el_df.ctx, 2, rng)
        b_df = el_df.b_form.T @ (el_df.dof_eval @ q)
        b_ndf = el_ndf.b_form.T @ (el_ndf.dof_eval @ q)
        assert np.abs(b_df - b_ndf).max() < 1e-12 * max(1.0, np.abs(b_df).max())


# ---------------------------------------------------------------------------
# interpolation and loads
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("k", [2, 3])
def test_interpolation_roundtrip(sample_geoms, scheme, k):
    rng = np.random.default_rng(29)
    for geom in sample_geoms:
        el = LocalElement(geom, k, scheme)
        coeffs = (
            constant_div_poly(el.ctx, k, rng) if scheme == "reduced" else random_poly(el.ctx, k, rng)
        )
        basis = el.ctx.scalar
        n_k = n_poly(k)

        def u(p, c=coeffs):
            vals = basis.eval(p)[:, :n_k]
            return np.column_stack([vals @ c[:n_k], vals @ c[n_k:]])

        div_c = el.ctx.divergence(k) @ coeffs

        def du(p, d=div_c):
            return basis.eval(p)[:, : n_poly(k - 1)] @ d

        dofs = el.interpolate(u, div_u=du)
        assert np.abs(el.l2_proj @ dofs - coeffs).max() < 1e-11 * max(1.0, np.abs(coeffs).max())


def test_constant_load_vector():
    el = LocalElement(unit_square_geom(), 2, "div_free")
    load = el.load_vector(lambda p: np.column_stack([np.ones(p.shape[0]), np.zeros(p.shape[0])]))
    # pairing the load with the DoFs of (1, 0) gives the cell area
    coeffs = np.zeros(12)
    coeffs[0] = 1.0
    assert load @ (el.dof_eval @ coeffs) == pytest.approx(el.geom.area, rel=1e-12)


def test_polynomial_load_is_exact(sample_geoms):
    rng = np.random.default_rng(31)
    geom = sample_geoms[1]
    el = LocalElement(geom, 2, "div_free")
    c = random_poly(el.ctx, 2, rng)
    basis = el.ctx.scalar
    f = lambda p: np.column_stack([basis.eval(p)[:, :6] @ c[:6], basis.eval(p)[:, :6] @ c[6:]])
    load = el.load_vector(f)
    exact = el.moment_matrix.T @ c
    assert np.abs(load - exact).max() < 1e-11 * np.abs(exact).max()


def test_load_moment_against_quadrature_oracle():
    # smooth data on a fine cell: the fixed-degree rule must agree with a
    # much higher-degree oracle to well below the solver tolerances
    geom = scaled_square_geom(1 / 16, origin=(0.25, 0.5))
    el = LocalElement(geom, 2, "div_free")
    f = lambda p: np.column_stack([np.sin(3 * p[:, 0]), np.cos(2 * p[:, 1])])
    rule = polygon_quadrature(geom, 30)
    vals = el.ctx.scalar.eval(rule.points)[:, :6]
    fv = f(rule.points)
    F = np.concatenate([vals.T @ (rule.weights * fv[:, 0]), vals.T @ (rule.weights * fv[:, 1])])
    expected = el.l2_proj.T @ F
    assert np.abs(el.load_vector(f) - expected).max() < 1e-11 * np.abs(expected).max()


def test_interpolation_divergence_moments_against_oracle():
    # the divergence-moment DoFs of a smooth field on a fine cell match an
    # independent high-degree quadrature of div(u) against the basis
    geom = scaled_square_geom(1 / 16, origin=(0.5, 0.25))
    el = LocalElement(geom, 2, "div_free")
    u = lambda p: np.column_stack(
        [np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
         np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])]
    )
    du = lambda p: 2 * np.pi**2 * np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])
    dofs = el.interpolate(u, div_u=du)
    rule = polygon_quadrature(geom, 30)
    vals = el.ctx.scalar.eval(rule.points)[:, 1:3]
    oracle = geom.diameter / geom.area * (vals.T @ (rule.weights * du(rule.points)))
    assert np.abs(dofs[el.layout.div_start :] - oracle).max() < 1e-12


# ---------------------------------------------------------------------------
# reduced / div_free coupling
# ---------------------------------------------------------------------------


def test_reduced_lift_consistency(sample_geoms):
    # lifting reduced DoFs of a constant-divergence polynomial reproduces
    # its full div_free DoF vector
    rng = np.random.default_rng(37)
    for geom in sample_geoms:
        red = LocalElement(geom, 2, "reduced")
        full = red.full
        q = constant_div_poly(red.ctx, 2, rng)
        lifted = red.lift @ (red.dof_eval @ q)
        assert np.abs(lifted - full.dof_eval @ q).max() < 1e-12 * max(1.0, np.abs(q).max())


def test_reduced_forms_match_full_on_common_functions(sample_geoms):
    rng = np.random.default_rng(41)
    for geom in sample_geoms[:2]:
        red = LocalElement(geom, 2, "reduced")
        full = red.full
        A_red = red.brinkman_form(0.01, np.eye(2))
        A_full = full.brinkman_form(0.01, np.eye(2))
        qa = constant_div_poly(red.ctx, 2, rng)
        qb = constant_div_poly(red.ctx, 2, rng)
        lhs = (red.dof_eval @ qa) @ A_red @ (red.dof_eval @ qb)
        rhs = (full.dof_eval @ qa) @ A_full @ (full.dof_eval @ qb)
        assert lhs == pytest.approx(rhs, rel=1e-12)
