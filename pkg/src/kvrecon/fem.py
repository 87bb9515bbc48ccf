"""P1 finite elements for the Robin-Laplace states on the annulus.

The bilinear form is ``a(alpha; u, v) = int_Omega grad u . grad v + int_Gamma alpha u v``.
Nodal traces on a ring are ordered like the ring's index array.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import AnnularMesh, signed_areas

# 3-point Gauss-Legendre on [0, 1]: exact for the cubic alpha*u*v on an edge
_GL3_X = 0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
_GL3_W = np.array([5 / 18, 8 / 18, 5 / 18])


class AssemblyError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


def stiffness_matrix(mesh: AnnularMesh) -> sp.csr_matrix:
    """P1 stiffness matrix with exact per-triangle gradients."""
    tri = mesh.triangles
    area = signed_areas(mesh.nodes, tri)
    if np.any(area <= 0):
        raise AssemblyError(f"{np.count_nonzero(area <= 0)} inverted triangles")
    p = mesh.nodes[tri]
    # gradient of barycentric k is rot90(edge opposite k) / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area)[:, None, None]
    local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def mass_matrix(mesh: AnnularMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix over the annulus."""
    tri = mesh.triangles
    area = signed_areas(mesh.nodes, tri)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def ring_mass_matrix(mesh: AnnularMesh, ring: str, weight=None, size: int | None = None) -> sp.csr_matrix:
    """Edge mass matrix ``int_ring weight phi_i phi_j`` with a piecewise-linear weight.

    With ``size=None`` the matrix is global (``n_nodes`` square); with
    ``size="ring"`` it is indexed by position along the ring.
    """
    idx = mesh.sigma_ring if ring == "sigma" else mesh.gamma_ring
    m = len(idx)
    loc_a = np.arange(m)
    loc_b = np.roll(loc_a, -1)
    pts = mesh.nodes[idx]
    length = np.linalg.norm(pts[loc_b] - pts[loc_a], axis=1)
    if weight is None:
        wa = wb = np.ones(m)
    else:
        weight = np.asarray(weight, dtype=float)
        wa, wb = weight[loc_a], weight[loc_b]
    # shape functions at the Gauss points: phi_a = 1 - x, phi_b = x
    pa, pb = 1 - _GL3_X, _GL3_X
    wq = wa[:, None] * pa[None] + wb[:, None] * pb[None]          # (m, 3)
    lw = length[:, None] * _GL3_W[None] * wq
    maa = lw @ (pa * pa)
    mab = lw @ (pa * pb)
    mbb = lw @ (pb * pb)
    if size == "ring":
        ga, gb, n = loc_a, loc_b, m
    else:
        ga, gb, n = idx[loc_a], idx[loc_b], mesh.n_nodes
    rows = np.concatenate([ga, ga, gb, gb])
    cols = np.concatenate([ga, gb, ga, gb])
    vals = np.concatenate([maa, mab, mab, mbb])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_bilinear(mesh: AnnularMesh, alpha, stiffness: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """``K + M_Gamma(alpha)``: the matrix of ``a(alpha; ., .)``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (len(mesh.gamma_ring),):
        raise AssemblyError(f"alpha has shape {alpha.shape}, expected ({len(mesh.gamma_ring)},)")
    k = stiffness_matrix(mesh) if stiffness is None else stiffness
    return (k + ring_mass_matrix(mesh, "gamma", alpha)).tocsr()


def solve_spd(op, rhs, tol: float = 1e-10, x0=None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    Iterates until ``||op u - rhs|| <= tol * ||rhs||`` (recursive residual);
    raises ``SolverError`` after ``10 * n`` iterations or on a direction of
    non-positive curvature.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    bnorm = np.sqrt(rhs @ rhs)
    if bnorm == 0:
        return np.zeros(n)
    op = sp.csr_matrix(op)
    dinv = 1.0 / op.diagonal()
    if x0 is None:
        x = np.zeros(n)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=float)
        r = rhs - op @ x
    target = tol * bnorm
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(10 * n):
        if np.sqrt(r @ r) <= target:
            return x
        q = op @ p
        curv = p @ q
        if not curv > 0:
            raise SolverError("operator is not positive definite along a search direction")
        step = rz / curv
        x += step * p
        r -= step * q
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.sqrt(r @ r) <= target:
        return x
    raise SolverError(f"conjugate gradients did not converge in {10 * n} iterations")


def sigma_load(mesh: AnnularMesh, g) -> np.ndarray:
    """Global load vector ``int_Sigma g phi_i`` for a P1 trace ``g``."""
    m = ring_mass_matrix(mesh, "sigma", size="ring")
    b = np.zeros(mesh.n_nodes)
    b[mesh.sigma_ring] = m @ np.asarray(g, dtype=float)
    return b


def _solve_with_sigma_fixed(op, rhs, mesh: AnnularMesh, sigma_values, tol: float, x0=None) -> np.ndarray:
    """Symmetric elimination of prescribed values on the outer ring."""
    free = mesh.interior_mask()
    u = np.zeros(mesh.n_nodes)
    u[mesh.sigma_ring] = sigma_values
    b = rhs[free] - op[free][:, ~free] @ u[~free]
    u[free] = solve_spd(op[free][:, free], b, tol, None if x0 is None else x0[free])
    return u


def solve_dirichlet_state(mesh: AnnularMesh, alpha, f, tol: float = 1e-10, op=None, x0=None) -> np.ndarray:
    """State with ``u = f`` on sigma and the Robin condition on gamma.

    ``x0`` is an optional initial guess (a nodal field) for the iteration.
    """
    op = assemble_bilinear(mesh, alpha) if op is None else op
    return _solve_with_sigma_fixed(op, np.zeros(mesh.n_nodes), mesh, np.asarray(f, float), tol, x0)


def solve_neumann_state(mesh: AnnularMesh, alpha, g, tol: float = 1e-10, op=None, x0=None) -> np.ndarray:
    """State with flux ``g`` on sigma and the Robin condition on gamma."""
    op = assemble_bilinear(mesh, alpha) if op is None else op
    return solve_spd(op, sigma_load(mesh, g), tol, x0)


def extract_neumann_trace(mesh: AnnularMesh, alpha, u, op=None, tol: float = 1e-12) -> np.ndarray:
    """Variational normal flux of ``u`` on sigma.

    Solves ``M_Sigma g = r`` with ``r_i = a(alpha; u, phi_i)`` for the
    sigma-node hat functions.
    """
    op = assemble_bilinear(mesh, alpha) if op is None else op
    r = (op @ np.asarray(u, float))[mesh.sigma_ring]
    return solve_spd(ring_mass_matrix(mesh, "sigma", size="ring"), r, tol)


def solve_alpha_sensitivity(mesh: AnnularMesh, alpha, u, rho, kind: str,
                            tol: float = 1e-10, op=None) -> np.ndarray:
    """Derivative of a state with respect to alpha in direction ``rho``.

    Solves ``a(alpha; du, psi) = -int_Gamma rho u psi``; for
    ``kind="dirichlet"`` ``du`` vanishes on sigma and the test space is
    restricted accordingly.
    """
    op = assemble_bilinear(mesh, alpha) if op is None else op
    rhs = -(ring_mass_matrix(mesh, "gamma", rho) @ np.asarray(u, float))
    if kind == "dirichlet":
        return _solve_with_sigma_fixed(op, rhs, mesh, 0.0, tol)
    if kind == "neumann":
        return solve_spd(op, rhs, tol)
    raise ValueError(f"kind must be 'dirichlet' or 'neumann', got {kind!r}")


def boundary_integral(mesh: AnnularMesh, ring: str, values) -> float:
    """Exact integral of a P1 trace over a ring."""
    idx = mesh.sigma_ring if ring == "sigma" else mesh.gamma_ring
    pts = mesh.nodes[idx]
    length = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    v = np.asarray(values, float)
    return float(np.sum(0.5 * length * (v + np.roll(v, -1))))
