"""Kohn-Vogelius energy gap, its shape and admittance gradients, and Tikhonov weighting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import fem
from . import geometry as geo
from .mesh import AnnularMesh


@dataclass(frozen=True, eq=False)
class StatePack:
    """Dirichlet and Neumann states of every Cauchy pair on one (mesh, alpha)."""

    mesh: AnnularMesh
    alpha: np.ndarray
    op: object                      # sparse matrix of a(alpha; ., .)
    u_D: tuple[np.ndarray, ...]
    u_N: tuple[np.ndarray, ...]

    @property
    def w(self) -> tuple[np.ndarray, ...]:
        return tuple(d - n for d, n in zip(self.u_D, self.u_N))


def solve_states(mesh: AnnularMesh, alpha, pairs: Sequence, tol: float = 1e-10,
                 guess: StatePack | None = None) -> StatePack:
    """Solve both state problems for each ``(f, g)`` pair, in pair order.

    States of a nearby configuration passed as ``guess`` seed the iterations.
    """
    alpha = np.asarray(alpha, dtype=float)
    op = fem.assemble_bilinear(mesh, alpha)
    u_D, u_N = [], []
    for k, pair in enumerate(pairs):
        x_d = None if guess is None else guess.u_D[k]
        x_n = None if guess is None else guess.u_N[k]
        u_D.append(fem.solve_dirichlet_state(mesh, alpha, pair.f, tol, op=op, x0=x_d))
        u_N.append(fem.solve_neumann_state(mesh, alpha, pair.g, tol, op=op, x0=x_n))
    return StatePack(mesh, alpha, op, tuple(u_D), tuple(u_N))


def kohn_vogelius_cost(states: StatePack) -> float:
    """``J = sum_k a(alpha; w_k, w_k) / 2`` with ``w_k = u_D,k - u_N,k``."""
    total = 0.0
    for w in states.w:
        total += 0.5 * float(w @ (states.op @ w))
    return total


def tangential_derivative(values, ring_nodes) -> np.ndarray:
    """Arclength central difference of a nodal trace on a closed ring."""
    v = np.asarray(values, float)
    ln = geo.edge_lengths(ring_nodes)
    return (np.roll(v, -1) - np.roll(v, 1)) / (ln + np.roll(ln, 1))


def shape_gradient_density(states: StatePack, curvature=None) -> np.ndarray:
    """Shape-gradient density ``G`` on the inner ring, summed over pairs.

    ``dJ[theta] = int_Gamma G theta.n``.  On gamma the normal derivative of
    each state follows from its Robin condition, ``du/dn = -alpha u``, and
    alpha is extended constantly in the normal direction.  Passing
    ``curvature`` overrides the discrete curvature of the ring.
    """
    mesh, alpha = states.mesh, states.alpha
    gam = mesh.gamma_nodes
    kappa = geo.discrete_curvature(gam, "gamma") if curvature is None else np.asarray(curvature)
    G = np.zeros(len(gam))
    for u_d, u_n in zip(states.u_D, states.u_N):
        d = u_d[mesh.gamma_ring]
        n = u_n[mesh.gamma_ring]
        w = d - n
        dn_w = -alpha * w
        tn = tangential_derivative(n, gam)
        tw = tangential_derivative(w, gam)
        # -F(u_N, w) with F(v, q) = -grad_G v.grad_G q - alpha (dv/dn + kappa v) q
        minus_f = tn * tw + alpha * (-alpha * n + kappa * n) * w
        grad_w_sq = tw * tw + dn_w * dn_w
        # half |grad w|^2; the full-weight variant fails the finite-difference check
        G += minus_f + 0.5 * grad_w_sq + 0.5 * alpha * (2 * w * dn_w + kappa * w * w)
    return G


def admittance_gradient(states: StatePack) -> np.ndarray:
    """Nodal density ``sum_k (u_D,k^2 - u_N,k^2) / 2`` on the inner ring."""
    ring = states.mesh.gamma_ring
    return sum(0.5 * (d[ring] ** 2 - n[ring] ** 2) for d, n in zip(states.u_D, states.u_N))


def admittance_derivative(states: StatePack, rho) -> float:
    """``int_Gamma rho (u_D^2 - u_N^2) / 2`` summed over pairs, integrated exactly for P1 fields."""
    m = fem.ring_mass_matrix(states.mesh, "gamma", rho)
    return sum(0.5 * float(d @ (m @ d) - n @ (m @ n)) for d, n in zip(states.u_D, states.u_N))


def lumped_ring_weights(ring_nodes) -> np.ndarray:
    """Trapezoidal quadrature weights of a closed ring (half of each adjacent edge)."""
    ln = geo.edge_lengths(ring_nodes)
    return 0.5 * (ln + np.roll(ln, 1))


def alpha_norm_sq(alpha, gamma_nodes) -> float:
    """Trapezoidal ``||alpha||^2`` over the ring."""
    a = np.asarray(alpha, float)
    ln = geo.edge_lengths(gamma_nodes)
    return float(np.sum(0.5 * ln * (a * a + np.roll(a, -1) ** 2)))


def balancing_tau(J: float, alpha, gamma_nodes, beta: float = 1.5) -> float:
    """Tikhonov weight with ``(beta - 1) J = (tau / 2) ||alpha||^2``."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    nrm = alpha_norm_sq(alpha, gamma_nodes)
    if nrm <= 0:
        raise ValueError("alpha has zero L2 norm on gamma")
    return 2.0 * (beta - 1.0) * J / nrm


def regularization_value(alpha, gamma_nodes, tau: float) -> float:
    return 0.5 * tau * alpha_norm_sq(alpha, gamma_nodes)
