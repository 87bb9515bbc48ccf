"""Self-checks for the discretization and the two gradients.

Each check returns ``CheckResult`` rows; ``run_checks`` collects them for
the ``validate`` command.  The same routines back the acceptance tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import data, fem
from . import geometry as geo
from . import objective as obj
from .descent import boundary_pairing, sobolev_extension
from .mesh import AnnularMesh, build_annular_mesh, deform_mesh

RADIAL_A = 1.0 / (2.0 + math.log(2.0))


@dataclass(frozen=True)
class CheckResult:
    check: str
    value: float
    threshold: float
    upper: bool = True          # pass when value <= threshold, else value >= threshold

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.upper else self.value >= self.threshold


def concentric_mesh(n_boundary: int, n_layers: int | None = None, r_inner: float = 0.5) -> AnnularMesh:
    n_layers = max(1, n_boundary // 10) if n_layers is None else n_layers
    return build_annular_mesh(geo.circle(1.0, n_boundary), geo.circle(r_inner, n_boundary),
                              n_boundary, n_layers)


def observed_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------

def manufactured_errors(sizes=(50, 100, 200)) -> tuple[np.ndarray, np.ndarray]:
    """L2 errors of the Dirichlet state against ``u = x1`` (alpha = 2, f = cos t)."""
    hs, errs = [], []
    for n in sizes:
        m = concentric_mesh(n)
        exact = m.nodes[:, 0]
        u = fem.solve_dirichlet_state(m, np.full(n, 2.0), exact[m.sigma_ring])
        e = u - exact
        errs.append(math.sqrt(e @ (fem.mass_matrix(m) @ e)))
        hs.append(1.0 / n)
    return np.array(hs), np.array(errs)


def check_fem_convergence() -> list[CheckResult]:
    h, err = manufactured_errors()
    return [CheckResult("fem-convergence", observed_order(h, err), 1.8, upper=False)]


def radial_errors(n: int = 200) -> tuple[float, float]:
    """Max nodal error of ``u = A ln r + 1`` and of its flux ``A`` on sigma."""
    m = concentric_mesh(n)
    alpha = np.ones(n)
    u = fem.solve_dirichlet_state(m, alpha, np.ones(n))
    exact = RADIAL_A * np.log(np.hypot(*m.nodes.T)) + 1.0
    g = fem.extract_neumann_trace(m, alpha, u)
    return float(np.max(np.abs(u - exact))), float(np.max(np.abs(g - RADIAL_A)))


def check_radial_oracle() -> list[CheckResult]:
    eu, eg = radial_errors()
    return [CheckResult("radial-oracle", eu, 1e-3), CheckResult("radial-flux", eg, 1e-3)]


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------

def gradient_setup(n_boundary: int = 150, n_layers: int = 10, r0: float = 0.5):
    """Initial-circle mesh with case A2 x B1 data: the first reconstruction iterate."""
    pairs = data.generate_cauchy_data("A2", "B1", n_boundary)
    m = concentric_mesh(n_boundary, n_layers, r0)
    return m, np.ones(n_boundary), pairs


def smooth_ring_field(mesh: AnnularMesh, rng, modes: int = 3, mean: float = 0.0) -> np.ndarray:
    """Random trigonometric polynomial in the polar angle of the gamma nodes."""
    phi = np.arctan2(mesh.gamma_nodes[:, 1], mesh.gamma_nodes[:, 0])
    c = rng.normal(size=(modes + 1, 2))
    return mean + sum(a * np.cos(k * phi) + b * np.sin(k * phi) for k, (a, b) in enumerate(c))


def alpha_gradient_errors(n_trials: int = 5, eps: float = 1e-5, seed: int = 0):
    """Relative errors of the closed-form alpha derivative against FD and the sensitivity route."""
    m, alpha, pairs = gradient_setup()
    states = obj.solve_states(m, alpha, pairs, tol=1e-12)
    J = obj.kohn_vogelius_cost(states)
    rng = np.random.default_rng(seed)
    fd_err, sens_err = [], []
    for _ in range(n_trials):
        rho = smooth_ring_field(m, rng)
        dj = obj.admittance_derivative(states, rho)
        J_eps = obj.kohn_vogelius_cost(obj.solve_states(m, alpha + eps * rho, pairs, tol=1e-12))
        fd_err.append(abs((J_eps - J) / eps - dj) / abs(dj))
        # a(alpha; w~, w) + 1/2 int rho w^2 with w~ from the sensitivity equations
        m_rho = fem.ring_mass_matrix(m, "gamma", rho)
        chain = 0.0
        for u_d, u_n in zip(states.u_D, states.u_N):
            du_d = fem.solve_alpha_sensitivity(m, alpha, u_d, rho, "dirichlet", 1e-13, states.op)
            du_n = fem.solve_alpha_sensitivity(m, alpha, u_n, rho, "neumann", 1e-13, states.op)
            w = u_d - u_n
            chain += float((du_d - du_n) @ (states.op @ w)) + 0.5 * float(w @ (m_rho @ w))
        sens_err.append(abs(chain - dj) / abs(dj))
    return np.array(fd_err), np.array(sens_err)


def check_alpha_gradient() -> list[CheckResult]:
    fd, sens = alpha_gradient_errors()
    return [CheckResult("alpha-gradient-fd", float(fd.max()), 1e-2),
            CheckResult("alpha-gradient-sensitivity", float(sens.max()), 1e-6)]


def radial_deformation(nodes: np.ndarray, coef, r_inner: float, r_cut: float = 0.9) -> np.ndarray:
    """Smooth inward-radial field ``psi(r) V(phi) (-x/r)``, vanishing for ``r >= r_cut``."""
    r = np.hypot(*nodes.T)
    phi = np.arctan2(nodes[:, 1], nodes[:, 0])
    v = sum(a * np.cos(k * phi) + b * np.sin(k * phi) for k, (a, b) in enumerate(coef))
    s = np.clip((r - r_inner) / (r_cut - r_inner), 0.0, 1.0)
    psi = np.cos(0.5 * np.pi * s) ** 2
    return (psi * v)[:, None] * (-nodes / r[:, None])


def shape_gradient_errors(levels=((75, 5), (150, 10), (300, 20)), n_fields: int = 5,
                          t: float = 1e-4, curvature_sign: float = 1.0) -> dict:
    """Compare ``<G, theta.n>`` with finite differences of J on each mesh level.

    Returns per level the relative errors against the forward difference
    ``(J(t) - J(0)) / t`` and the absolute discrepancy to the central
    difference (used for the refinement order).  ``curvature_sign = -1``
    injects a sign fault into the curvature term.
    """
    out = {}
    for n, n_layers in levels:
        m, alpha, pairs = gradient_setup(n, n_layers)
        states = obj.solve_states(m, alpha, pairs, tol=1e-12)
        J = obj.kohn_vogelius_cost(states)
        kappa = curvature_sign * geo.discrete_curvature(m.gamma_nodes, "gamma")
        G = obj.shape_gradient_density(states, curvature=kappa)
        normals = geo.outward_normals(m.gamma_nodes, "gamma")
        wts = obj.lumped_ring_weights(m.gamma_nodes)
        fwd, central = [], []
        for trial in range(n_fields):
            coef = np.random.default_rng(trial).normal(size=(4, 2))
            theta = radial_deformation(m.nodes, coef, 0.5)
            theta[m.sigma_ring] = 0.0
            dj = float(np.sum(wts * G * np.sum(theta[m.gamma_ring] * normals, axis=1)))
            J_p = obj.kohn_vogelius_cost(obj.solve_states(deform_mesh(m, theta, t), alpha, pairs, 1e-12, states))
            J_m = obj.kohn_vogelius_cost(obj.solve_states(deform_mesh(m, theta, -t), alpha, pairs, 1e-12, states))
            fd = (J_p - J) / t
            fwd.append(abs(dj - fd) / abs(fd))
            central.append(abs(dj - (J_p - J_m) / (2 * t)) / abs(fd))
        out[n] = {"forward": np.array(fwd), "central": np.array(central)}
    return out


def check_shape_gradient(curvature_sign: float = 1.0) -> list[CheckResult]:
    res = shape_gradient_errors(curvature_sign=curvature_sign)
    ns = sorted(res)
    worst = [float(res[n]["central"].max()) for n in ns]
    order = observed_order(1.0 / np.array(ns, float), worst)
    return [CheckResult("shape-gradient-fd", float(res[150]["forward"].max()), 5e-2),
            CheckResult("shape-gradient-order", order, 0.8, upper=False)]


def check_descent_identity() -> list[CheckResult]:
    m, alpha, pairs = gradient_setup()
    states = obj.solve_states(m, alpha, pairs)
    G = obj.shape_gradient_density(states)
    theta, nsq = sobolev_extension(m, G)
    return [CheckResult("descent-identity", abs(boundary_pairing(m, G, theta) + nsq) / nsq, 1e-8)]


CHECKS: dict[str, Callable[..., list[CheckResult]]] = {
    "fem-convergence": check_fem_convergence,
    "radial-oracle": check_radial_oracle,
    "alpha-gradient": check_alpha_gradient,
    "shape-gradient": check_shape_gradient,
    "descent-identity": check_descent_identity,
}

FAULTS = ("curvature-sign",)


def run_checks(names=None, fault: str | None = None) -> list[CheckResult]:
    names = list(CHECKS) if not names else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    if fault is not None and fault not in FAULTS:
        raise KeyError(f"unknown fault {fault!r}")
    results = []
    for name in names:
        if name == "shape-gradient" and fault == "curvature-sign":
            results += check_shape_gradient(curvature_sign=-1.0)
        else:
            results += CHECKS[name]()
    return results


def write_report(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "value", "threshold", "pass"])
        for r in results:
            w.writerow([r.check, repr(float(r.value)), repr(float(r.threshold)), str(r.passed).lower()])
