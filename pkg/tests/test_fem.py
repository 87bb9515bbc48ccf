import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from kvrecon import fem
from kvrecon import geometry as geo
from kvrecon import validation
from kvrecon.mesh import AnnularMesh, deform_mesh

from conftest import concentric

A = 1.0 / (2.0 + math.log(2.0))


def test_radial_constant_oracle():
    # u = A ln r + 1: Laplace-harmonic, u = 1 on r = 1, and on r = 1/2
    # -du/dr + u = -2A + A ln(1/2) + 1 = 0  <=>  A = 1 / (2 + ln 2)
    a = 1 / (2 + 0.6931471805599453)
    assert a == pytest.approx(0.3713128, abs=1e-7)
    # the commonly quoted rounded values 0.371335 / 0.742605 agree to 3e-5
    assert a == pytest.approx(0.371335, abs=3e-5)
    assert a * math.log(0.5) + 1 == pytest.approx(0.742605, abs=3e-5)


# -- assembly ------------------------------------------------------------------

def test_reference_triangle_rows_sum_to_zero():
    m = AnnularMesh(np.array([[0, 0], [1, 0], [0, 1]], float), np.array([[0, 1, 2]]),
                    np.array([0]), np.array([1]), 1.0, 1)
    k = fem.stiffness_matrix(m).toarray()
    np.testing.assert_allclose(k.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(k, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])


def test_gamma_mass_total_is_perimeter(ring_mesh):
    total = fem.ring_mass_matrix(ring_mesh, "gamma", np.ones(150)).sum()
    assert total == pytest.approx(geo.perimeter(ring_mesh.gamma_nodes), rel=1e-14)
    assert abs(total - math.pi) < 10 * (2 * math.pi * 0.5 / 150) ** 2


def test_operator_on_constants(ring_mesh, rng):
    alpha = 1 + rng.random(150)
    op = fem.assemble_bilinear(ring_mesh, alpha)
    ones = np.ones(ring_mesh.n_nodes)
    np.testing.assert_allclose(op @ ones, fem.ring_mass_matrix(ring_mesh, "gamma", alpha) @ ones, atol=1e-13)


def test_robin_edge_term_exact_for_linear_weight():
    # weight 0 -> 1 -> 3 -> 0 on nodes 7, 0, 1, 2 of a regular octagon (edge length L);
    # hand integrals on [0, 1]: int x^3 = 1/4, int (1+2x)(1-x)^2 = 1/2,
    # int (1+2x) x^2 = 5/6, int 3 (1-x)^3 = 3/4, int (1+2x) x (1-x) = 1/3
    m = concentric(8, 1)
    w = np.zeros(8)
    w[0], w[1] = 1.0, 3.0
    loc = fem.ring_mass_matrix(m, "gamma", w, size="ring").toarray()
    length = np.linalg.norm(m.gamma_nodes[1] - m.gamma_nodes[0])
    assert loc[0, 0] == pytest.approx(length * (1 / 4 + 1 / 2), rel=1e-14)
    assert loc[1, 1] == pytest.approx(length * (5 / 6 + 3 / 4), rel=1e-14)
    assert loc[0, 1] == pytest.approx(length / 3, rel=1e-14)


def test_operator_exactly_symmetric_and_deterministic(ring_mesh, rng):
    alpha = 0.5 + rng.random(150)
    op = fem.assemble_bilinear(ring_mesh, alpha)
    assert (op != op.T).nnz == 0
    again = fem.assemble_bilinear(ring_mesh, alpha.copy())
    np.testing.assert_array_equal(op.data, again.data)
    np.testing.assert_array_equal(op.indices, again.indices)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quadratic_form_positive(seed):
    m = concentric(16, 2)
    r = np.random.default_rng(seed)
    op = fem.assemble_bilinear(m, 0.01 + r.random(16))
    k = fem.stiffness_matrix(m)
    v = r.normal(size=m.n_nodes)
    assert v @ (k @ v) >= -1e-12 * (v @ v)
    assert v @ (op @ v) > 0


def test_inverted_triangle_rejected(ring_mesh):
    theta = np.zeros_like(ring_mesh.nodes)
    theta[ring_mesh.gamma_ring] = ring_mesh.gamma_nodes * 4
    bad = deform_mesh(ring_mesh, theta, 1.0)
    with pytest.raises(fem.AssemblyError):
        fem.assemble_bilinear(bad, np.ones(150))


def test_alpha_length_mismatch(ring_mesh):
    with pytest.raises(fem.AssemblyError):
        fem.assemble_bilinear(ring_mesh, np.ones(10))


# -- linear solver -------------------------------------------------------------

def test_solve_diagonal():
    import scipy.sparse as sp
    rhs = np.array([1.0, -2.0, 3.5])
    np.testing.assert_allclose(fem.solve_spd(sp.identity(3, format="csr"), rhs), rhs, rtol=1e-12)
    np.testing.assert_allclose(fem.solve_spd(sp.diags([2.0, 4.0, 8.0]), rhs), rhs / [2, 4, 8], rtol=1e-12)


def test_solve_two_by_two():
    np.testing.assert_allclose(fem.solve_spd(np.array([[2.0, 1.0], [1.0, 2.0]]), [3.0, 3.0]), [1, 1], rtol=1e-12)


def test_solve_against_dense_oracle():
    m = concentric(8, 1)
    op = fem.assemble_bilinear(m, np.full(8, 1.5))
    rhs = np.random.default_rng(3).normal(size=m.n_nodes)
    dense = scipy.linalg.lu_solve(scipy.linalg.lu_factor(op.toarray()), rhs)
    np.testing.assert_allclose(fem.solve_spd(op, rhs), dense, atol=1e-9)


def test_solve_residual_meets_tolerance(ring_mesh, rng):
    op = fem.assemble_bilinear(ring_mesh, np.ones(150))
    rhs = rng.normal(size=ring_mesh.n_nodes)
    for tol in (1e-6, 1e-10):
        u = fem.solve_spd(op, rhs, tol)
        assert np.linalg.norm(op @ u - rhs) <= 2 * tol * np.linalg.norm(rhs)


def test_solve_warm_start_same_answer(ring_mesh, rng):
    op = fem.assemble_bilinear(ring_mesh, np.ones(150))
    rhs = rng.normal(size=ring_mesh.n_nodes)
    cold = fem.solve_spd(op, rhs, 1e-12)
    warm = fem.solve_spd(op, rhs, 1e-12, x0=cold + 1e-3)
    np.testing.assert_allclose(warm, cold, atol=1e-9)


def test_solve_zero_rhs():
    assert not np.any(fem.solve_spd(np.eye(4), np.zeros(4)))


def test_solver_rejects_singular_system():
    with pytest.raises(fem.SolverError):
        fem.solve_spd(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, -1.0]))


def test_solver_iteration_cap():
    # a zero tolerance is unattainable in floating point
    r = np.random.default_rng(0)
    q = r.normal(size=(30, 30))
    with pytest.raises(fem.SolverError, match="did not converge in 300"):
        fem.solve_spd(q @ q.T + 1e-3 * np.eye(30), r.normal(size=30), tol=0.0)


# -- state problems -------------------------------------------------------------

def test_dirichlet_zero_data(ring_mesh):
    assert not np.any(fem.solve_dirichlet_state(ring_mesh, np.ones(150), np.zeros(150)))


def test_dirichlet_manufactured_solution():
    h, err = validation.manufactured_errors((50, 100, 200))
    assert validation.observed_order(h, err) >= 1.8
    assert err[-1] < 1e-4


def test_dirichlet_values_exact_on_sigma(ring_mesh, rng):
    f = rng.normal(size=150)
    u = fem.solve_dirichlet_state(ring_mesh, np.ones(150), f)
    np.testing.assert_array_equal(u[ring_mesh.sigma_ring], f)


def test_dirichlet_radial_oracle():
    eu, eg = validation.radial_errors(200)
    assert eu <= 1e-3 and eg <= 1e-3
    m = concentric(200)
    u = fem.solve_dirichlet_state(m, np.ones(200), np.ones(200))
    assert np.mean(u[m.gamma_ring]) == pytest.approx(0.742605, abs=1e-3)


def test_neumann_zero_data(ring_mesh):
    assert not np.any(fem.solve_neumann_state(ring_mesh, np.ones(150), np.zeros(150)))


def test_neumann_x1_solution():
    errs = []
    for n in (50, 100, 200):
        m = concentric(n)
        u = fem.solve_neumann_state(m, np.full(n, 2.0), m.sigma_nodes[:, 0])
        e = u - m.nodes[:, 0]
        errs.append(math.sqrt(e @ (fem.mass_matrix(m) @ e)))
    assert validation.observed_order(1 / np.array([50, 100, 200.0]), errs) >= 1.8


def test_neumann_radial():
    m = concentric(200)
    u = fem.solve_neumann_state(m, np.ones(200), np.full(200, A))
    np.testing.assert_allclose(u[m.sigma_ring], 1.0, atol=1e-3)


def test_galerkin_orthogonality_neumann(ring_mesh, rng):
    alpha = 0.5 + rng.random(150)
    g = np.cos(3 * 2 * np.pi * np.arange(150) / 150) + 0.2
    op = fem.assemble_bilinear(ring_mesh, alpha)
    u = fem.solve_neumann_state(ring_mesh, alpha, g, tol=1e-12, op=op)
    load = fem.sigma_load(ring_mesh, g)
    assert np.max(np.abs(op @ u - load)) <= 1e-10 * np.max(np.abs(load))


# -- flux extraction --------------------------------------------------------------

def test_flux_of_x1():
    errs = []
    for n in (50, 100, 200):
        m = concentric(n)
        alpha = np.full(n, 2.0)
        u = fem.solve_dirichlet_state(m, alpha, m.sigma_nodes[:, 0])
        g = fem.extract_neumann_trace(m, alpha, u)
        errs.append(np.max(np.abs(g - m.sigma_nodes[:, 0])))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[-1] > 3.0 * 2   # at least second order over a factor 4 refinement


def test_flux_of_zero(ring_mesh):
    assert not np.any(fem.extract_neumann_trace(ring_mesh, np.ones(150), np.zeros(ring_mesh.n_nodes)))


def test_flux_compatibility_with_robin_term():
    # int_Sigma g = int_Gamma alpha u, with O(h^2) error
    errs = []
    for n in (50, 100, 200):
        m = concentric(n)
        phi = 2 * np.pi * np.arange(n) / n
        alpha = 1.0 + 0.5 * np.cos(np.arctan2(*m.gamma_nodes[:, ::-1].T))
        u = fem.solve_dirichlet_state(m, alpha, 1 + 0.3 * np.sin(phi), tol=1e-12)
        g = fem.extract_neumann_trace(m, alpha, u)
        errs.append(abs(fem.boundary_integral(m, "sigma", g)
                        - fem.boundary_integral(m, "gamma", alpha * u[m.gamma_ring])))
    assert max(errs) < 1e-3
    assert validation.observed_order(1 / np.array([50, 100, 200.0]), errs) >= 1.8


# -- alpha sensitivity ---------------------------------------------------------------

def test_sensitivity_zero_direction(ring_mesh):
    u = fem.solve_dirichlet_state(ring_mesh, np.ones(150), np.ones(150))
    for kind in ("dirichlet", "neumann"):
        assert not np.any(fem.solve_alpha_sensitivity(ring_mesh, np.ones(150), u, np.zeros(150), kind))


@pytest.mark.parametrize("kind", ["dirichlet", "neumann"])
def test_sensitivity_against_finite_difference(kind):
    m = concentric(150)
    alpha = np.full(150, 1.5)
    phi = np.arctan2(m.gamma_nodes[:, 1], m.gamma_nodes[:, 0])
    rho = np.cos(phi) + 0.5 * np.sin(2 * phi) + 0.3
    f = m.sigma_nodes[:, 0] + 0.5
    solve = fem.solve_dirichlet_state if kind == "dirichlet" else fem.solve_neumann_state
    u = solve(m, alpha, f, tol=1e-13)
    du = fem.solve_alpha_sensitivity(m, alpha, u, rho, kind, tol=1e-13)
    eps = 1e-5
    fd = (solve(m, alpha + eps * rho, f, tol=1e-13) - u) / eps
    mass = fem.mass_matrix(m)
    rel = math.sqrt((fd - du) @ (mass @ (fd - du)) / (du @ (mass @ du)))
    assert rel <= 1e-3
    if kind == "dirichlet":
        assert not np.any(du[m.sigma_ring])


def test_sensitivity_linear_in_direction(ring_mesh, rng):
    alpha = np.ones(150)
    u = fem.solve_neumann_state(ring_mesh, alpha, np.cos(2 * np.pi * np.arange(150) / 150))
    rho = rng.random(150)
    one = fem.solve_alpha_sensitivity(ring_mesh, alpha, u, rho, "neumann", tol=1e-13)
    two = fem.solve_alpha_sensitivity(ring_mesh, alpha, u, 2 * rho, "neumann", tol=1e-13)
    np.testing.assert_allclose(two, 2 * one, rtol=1e-9, atol=1e-12)


def test_sensitivity_bad_kind(ring_mesh):
    with pytest.raises(ValueError):
        fem.solve_alpha_sensitivity(ring_mesh, np.ones(150), np.zeros(ring_mesh.n_nodes), np.ones(150), "robin")
