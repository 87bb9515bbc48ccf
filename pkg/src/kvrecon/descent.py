"""Sobolev-gradient shape descent with an Armijo admittance update.

Each outer iteration moves the inner boundary along the H1 representative
of the shape gradient, refreshes the Tikhonov weight from the balancing
rule, then takes a projected Armijo step on the admittance.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import fem
from . import geometry as geo
from . import objective as obj
from .mesh import AnnularMesh, MeshBreakdown, MeshError, build_annular_mesh, deform_mesh, resample_gamma, validate_mesh

log = logging.getLogger(__name__)


class ShapeConverged(Exception):
    """The deformation field vanished; no shape step is possible."""


@dataclass
class RunConfig:
    mu: float = 0.5
    beta: float = 1.5
    max_iter: int = 500
    r0: float = 0.5
    alpha0: float = 1.0
    armijo_c: float = 1e-4
    eps_max: float = 0.3                # cap on the first Armijo trial step for alpha
    resample_period: int = 25
    tol: float = 1e-10
    rng_seed: int = 0
    n_boundary: int = 150
    n_layers: int = 10
    alpha_min: float = 0.01
    alpha_max: float = 100.0
    max_shape_halvings: int = 20
    max_alpha_halvings: int = 30
    stagnation_window: int = 10

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.beta <= 1:
            raise ValueError("beta must exceed 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not 0 < self.r0 < 1:
            raise ValueError("r0 must lie in (0, 1)")
        if not self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError("alpha0 outside the admissible bounds")
        if not 0 < self.eps_max <= 1:
            raise ValueError("eps_max must lie in (0, 1]")
        if self.resample_period < 1:
            raise ValueError("resample_period must be at least 1")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class IterationRecord:
    iter: int
    J: float
    theta_norm_sq: float
    t: float = math.nan
    eps: float = math.nan
    tau: float = math.nan
    hausdorff: float = math.nan
    # diagnostics, not written to the history CSV
    descent_gap: float = math.nan       # |<G, theta_n> + ||theta||^2| / ||theta||^2
    J_tau: float = math.nan             # cost the balancing weight was computed from
    balance_residual: float = math.nan  # (beta - 1) J_tau - (tau / 2) ||alpha||^2
    alpha_norm_sq: float = math.nan
    inverted_count: int = 0
    resampled: bool = False


CSV_COLUMNS = ("iter", "J", "theta_norm_sq", "t", "eps", "tau", "hausdorff")


@dataclass
class ConvergenceHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                row = [r.iter]
                for name in CSV_COLUMNS[1:]:
                    v = getattr(r, name)
                    row.append("" if math.isnan(v) else repr(float(v)))
                w.writerow(row)


@dataclass(eq=False)
class ReconstructionState:
    mesh: AnnularMesh
    alpha: np.ndarray
    iteration: int = 0
    history: ConvergenceHistory = field(default_factory=ConvergenceHistory)
    states: obj.StatePack | None = None
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    breakdown: bool = False
    message: str = ""


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def h1_matrix(mesh: AnnularMesh) -> sp.csr_matrix:
    return (fem.stiffness_matrix(mesh) + fem.mass_matrix(mesh)).tocsr()


def sobolev_extension(mesh: AnnularMesh, G, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """H1 representative ``theta`` of ``-G n`` vanishing on sigma.

    Solves ``(theta, phi)_H1 = -int_Gamma G n.phi`` component-wise, the
    boundary integral by trapezoidal quadrature.  Returns ``theta`` with
    shape ``(n_nodes, 2)`` and ``||theta||_H1^2``.
    """
    G = np.asarray(G, dtype=float)
    theta = np.zeros((mesh.n_nodes, 2))
    if not np.any(G):
        return theta, 0.0
    gam = mesh.gamma_nodes
    normals = geo.outward_normals(gam, "gamma")
    wts = obj.lumped_ring_weights(gam)
    a = h1_matrix(mesh)
    free = mesh.interior_mask()
    a_ff = a[free][:, free]
    for c in range(2):
        rhs = np.zeros(mesh.n_nodes)
        rhs[mesh.gamma_ring] = -wts * G * normals[:, c]
        theta[free, c] = fem.solve_spd(a_ff, rhs[free], tol)
    nsq = float(sum(theta[:, c] @ (a @ theta[:, c]) for c in range(2)))
    return theta, nsq


def boundary_pairing(mesh: AnnularMesh, G, theta) -> float:
    """``<G, theta.n>_Gamma`` with the quadrature used by ``sobolev_extension``."""
    gam = mesh.gamma_nodes
    thn = np.sum(np.asarray(theta)[mesh.gamma_ring] * geo.outward_normals(gam, "gamma"), axis=1)
    return float(np.sum(obj.lumped_ring_weights(gam) * np.asarray(G) * thn))


def shape_step_size(J: float, theta_norm_sq: float, mu: float) -> float:
    """Initial shape step ``mu * J / ||theta||^2``."""
    if theta_norm_sq <= 0:
        raise ShapeConverged("deformation field has zero H1 norm")
    return mu * J / theta_norm_sq


def backtrack_shape_step(mesh: AnnularMesh, alpha, pairs, theta, t0: float, J_old: float,
                         max_halvings: int = 20, tol: float = 1e-10, guess=None):
    """Halve ``t`` from ``t0`` until the mesh stays valid and J decreases.

    A trial mesh is valid when no triangle is inverted and the inner ring is
    still a simple curve; the second test catches folds of the whole layer
    structure that leave every triangle positively oriented.  Returns ``(t, new_mesh, new_states)``; ``t = 0`` with ``new_states=None``
    signals stagnation (no admissible step within ``max_halvings``).
    """
    if not np.any(theta) or t0 <= 0:
        return 0.0, mesh, None
    t = t0
    for _ in range(max_halvings + 1):
        trial = deform_mesh(mesh, theta, t)
        if validate_mesh(trial).inverted_count == 0 and geo.is_simple(trial.gamma_nodes):
            states = obj.solve_states(trial, alpha, pairs, tol, guess)
            if obj.kohn_vogelius_cost(states) < J_old:
                return t, trial, states
        t *= 0.5
    return 0.0, mesh, None


def armijo_alpha_step(states: obj.StatePack, pairs, direction, tau: float, eps0: float = 1.0,
                      c: float = 1e-4, bounds=(0.01, 100.0), max_halvings: int = 30,
                      tol: float = 1e-10):
    """Projected Armijo step on ``J + (tau/2) ||alpha||^2`` along ``direction``.

    A trial is accepted when the regularized cost satisfies the sufficient
    decrease condition and J itself does not increase.  Returns
    ``(eps, new_alpha, new_states)``; ``eps = 0`` keeps alpha unchanged.
    """
    alpha = states.alpha
    d = np.asarray(direction, dtype=float)
    if not np.any(d):
        return 0.0, alpha, states
    gam = states.mesh.gamma_nodes
    wts = obj.lumped_ring_weights(gam)
    J0 = obj.kohn_vogelius_cost(states)
    reg0 = J0 + obj.regularization_value(alpha, gam, tau)
    grad = obj.admittance_gradient(states) + tau * alpha
    slope = float(np.sum(wts * grad * d))
    if slope >= 0:
        return 0.0, alpha, states
    eps = eps0
    for _ in range(max_halvings + 1):
        trial_alpha = np.clip(alpha + eps * d, *bounds)
        trial = obj.solve_states(states.mesh, trial_alpha, pairs, tol, states)
        J1 = obj.kohn_vogelius_cost(trial)
        reg1 = J1 + obj.regularization_value(trial_alpha, gam, tau)
        if reg1 <= reg0 + c * eps * slope and J1 <= J0:
            return eps, trial_alpha, trial
        eps *= 0.5
    return 0.0, alpha, states


def initial_state(config: RunConfig) -> ReconstructionState:
    n = config.n_boundary
    mesh = build_annular_mesh(geo.circle(1.0, n), geo.circle(config.r0, n), n, config.n_layers)
    return ReconstructionState(mesh=mesh, alpha=np.full(n, float(config.alpha0)))


# --------------------------------------------------------------------------
# main loop
# --------------------------------------------------------------------------

def run_reconstruction(config: RunConfig, pairs: Sequence, truth=None,
                       state: ReconstructionState | None = None,
                       callback: Callable[[ReconstructionState, IterationRecord], None] | None = None,
                       snapshot_period: int = 25) -> ReconstructionState:
    """Recover the inner boundary and its admittance from two Cauchy pairs.

    ``truth`` is an optional polyline of the exact inner boundary, used only
    to log the Hausdorff distance.  ``state`` overrides the initial circle.
    """
    if len(pairs) != 2:
        raise ValueError(f"exactly two Cauchy pairs are required, got {len(pairs)}")
    state = initial_state(config) if state is None else state
    truth = None if truth is None else geo.as_polyline(truth)
    bounds = (config.alpha_min, config.alpha_max)
    tol = config.tol

    mesh, alpha = state.mesh, np.clip(np.asarray(state.alpha, float), *bounds)
    states = obj.solve_states(mesh, alpha, pairs, tol)
    eps_prev = 0.5 * config.eps_max
    stagnant = 0
    state.snapshots[0] = mesh.gamma_nodes.copy()
    resampled = False
    stop = False

    k = 0
    while True:
        J = obj.kohn_vogelius_cost(states)
        G = obj.shape_gradient_density(states)
        theta, nsq = sobolev_extension(mesh, G, tol)
        gap = abs(boundary_pairing(mesh, G, theta) + nsq) / nsq if nsq > 0 else 0.0
        rec = IterationRecord(
            iter=k, J=J, theta_norm_sq=nsq, descent_gap=gap,
            alpha_norm_sq=obj.alpha_norm_sq(alpha, mesh.gamma_nodes),
            inverted_count=validate_mesh(mesh).inverted_count, resampled=resampled,
        )
        if truth is not None:
            rec.hausdorff = geo.hausdorff_distance(mesh.gamma_nodes, truth)
        state.history.append(rec)
        state.mesh, state.alpha, state.states, state.iteration = mesh, alpha, states, k
        if k >= config.max_iter or stop:
            break

        # shape update
        try:
            t0 = shape_step_size(J, nsq, config.mu)
        except ShapeConverged:
            t0 = 0.0
        t, mesh_new, states_new = backtrack_shape_step(
            mesh, alpha, pairs, theta, t0, J, config.max_shape_halvings, tol, states)
        if states_new is not None:
            mesh, states = mesh_new, states_new

        # balancing weight, then admittance update
        J_mid = obj.kohn_vogelius_cost(states)
        alpha_mid = alpha
        tau = obj.balancing_tau(J_mid, alpha, mesh.gamma_nodes, config.beta)
        direction = -(obj.admittance_gradient(states) + tau * alpha)
        eps, alpha, states = armijo_alpha_step(
            states, pairs, direction, tau, eps0=min(2.0 * eps_prev, config.eps_max), c=config.armijo_c,
            bounds=bounds, max_halvings=config.max_alpha_halvings, tol=tol)
        if eps > 0:
            eps_prev = eps
        rec.balance_residual = (config.beta - 1.0) * J_mid - obj.regularization_value(
            alpha_mid, mesh.gamma_nodes, tau)
        rec.t, rec.eps, rec.tau, rec.J_tau = t, eps, tau, J_mid
        k += 1

        resampled = False
        if k % config.resample_period == 0:
            try:
                mesh, alpha, states, resampled = _maybe_resample(mesh, alpha, states, pairs, tol)
            except MeshBreakdown as exc:
                state.breakdown, state.message = True, f"breakdown at iteration {k}: {exc}"
                log.warning(state.message)
                break
        if k % snapshot_period == 0:
            state.snapshots[k] = mesh.gamma_nodes.copy()

        stagnant = stagnant + 1 if (t == 0 and eps == 0) else 0
        if callback is not None:
            callback(state, rec)
        if stagnant >= config.stagnation_window:
            state.message = f"stagnated after {k} iterations"
            stop = True
    state.snapshots[state.iteration] = state.mesh.gamma_nodes.copy()
    return state


def _maybe_resample(mesh, alpha, states, pairs, tol):
    """Rebuild on an equidistributed inner ring unless that raises J."""
    try:
        new_mesh, new_alpha = resample_gamma(mesh, alpha)
    except MeshError as exc:
        log.info("keeping deformed mesh, rebuild failed: %s", exc)
        return mesh, alpha, states, False
    new_states = obj.solve_states(new_mesh, new_alpha, pairs, tol, states)
    if obj.kohn_vogelius_cost(new_states) <= obj.kohn_vogelius_cost(states):
        return new_mesh, new_alpha, new_states, True
    return mesh, alpha, states, False
