"""Synthetic Cauchy data on a refined forward mesh, noise, and dataset files."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import fem
from . import geometry as geo
from .mesh import AnnularMesh, build_annular_mesh


class DatasetError(ValueError):
    pass


@dataclass(eq=False)
class CauchyPair:
    """Imposed potential ``f`` and measured flux ``g`` at the sigma nodes."""

    f: np.ndarray
    g: np.ndarray
    k: int

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.f.shape != self.g.shape:
            raise DatasetError("f and g must have equal length")
        if not np.any(self.f):
            raise DatasetError("f must not vanish identically")

    def __eq__(self, other):
        return (isinstance(other, CauchyPair) and self.k == other.k
                and np.array_equal(self.f, other.f) and np.array_equal(self.g, other.g))


@dataclass
class DatasetManifest:
    admittance: str = "A2"
    boundary: str = "B1"
    n_boundary: int = 150
    forward_n_boundary: int = 300
    forward_n_layers: int = 20
    noise: float = 0.0
    seed: int = 0

    def to_lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in asdict(self).items()]

    @classmethod
    def from_mapping(cls, kv: dict) -> "DatasetManifest":
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in kv.items():
            if key not in types:
                raise DatasetError(f"unknown manifest key {key!r}")
            typ = types[key]
            out[key] = int(raw) if typ == "int" else float(raw) if typ == "float" else str(raw)
        return cls(**out)

    @property
    def inverse_crime(self) -> bool:
        return self.forward_n_boundary == self.n_boundary


@dataclass(eq=False)
class ForwardSolution:
    """Exact-data states on the forward mesh (kept for diagnostics)."""

    mesh: AnnularMesh
    alpha: np.ndarray
    states: list[np.ndarray]
    fluxes: list[np.ndarray]


def sigma_angles(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def input_potentials(angles) -> list[np.ndarray]:
    """The two imposed potentials, ``cos t`` and ``sin t``."""
    return [np.cos(angles), np.sin(angles)]


def _inner_curve(boundary, n_fine: int = 2048) -> np.ndarray:
    if isinstance(boundary, str):
        return geo.sample_case_curve(boundary, n_fine)
    return geo.as_polyline(boundary)


def _admittance_on(admittance, pts) -> np.ndarray:
    if isinstance(admittance, str):
        return geo.eval_case_admittance(admittance, pts)
    if callable(admittance):
        return np.asarray(admittance(pts), dtype=float)
    return np.full(len(pts), float(admittance))


def forward_solve(admittance, boundary, n_boundary: int = 300, n_layers: int = 20) -> ForwardSolution:
    """Exact states for the true (boundary, admittance) on a forward mesh.

    ``boundary`` is a case identifier or a counterclockwise polyline;
    ``admittance`` a case identifier, a callable of points, or a constant.
    """
    outer = geo.circle(1.0, n_boundary)
    mesh = build_annular_mesh(outer, _inner_curve(boundary), n_boundary, n_layers)
    alpha = _admittance_on(admittance, mesh.gamma_nodes)
    op = fem.assemble_bilinear(mesh, alpha)
    states, fluxes = [], []
    for f in input_potentials(sigma_angles(n_boundary)):
        u = fem.solve_dirichlet_state(mesh, alpha, f, op=op)
        states.append(u)
        fluxes.append(fem.extract_neumann_trace(mesh, alpha, u, op=op))
    return ForwardSolution(mesh, alpha, states, fluxes)


def generate_cauchy_data(admittance, boundary, n_boundary: int = 150,
                         forward_n_boundary: int = 300, forward_n_layers: int = 20) -> list[CauchyPair]:
    """Two exact Cauchy pairs sampled at the ``n_boundary`` inversion sigma nodes."""
    fwd = forward_solve(admittance, boundary, forward_n_boundary, forward_n_layers)
    t_fwd = sigma_angles(forward_n_boundary)
    t_inv = sigma_angles(n_boundary)
    pairs = []
    for k, (f, g) in enumerate(zip(input_potentials(t_inv), fwd.fluxes), start=1):
        pairs.append(CauchyPair(f, geo.interp_periodic(t_inv, t_fwd, g, 2 * np.pi), k))
    return pairs


def add_noise(g, delta: float, seed=0) -> np.ndarray:
    """``g + delta * max|g| * eta`` with ``eta ~ N(0, 0.5^2)`` i.i.d.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if delta < 0:
        raise ValueError("noise weight must be non-negative")
    g = np.asarray(g, dtype=float)
    if delta == 0:
        return g.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eta = rng.normal(0.0, 0.5, size=g.shape)
    return g + delta * np.max(np.abs(g)) * eta


def make_dataset(manifest: DatasetManifest) -> list[CauchyPair]:
    """Regenerate the pairs a manifest describes, noise included."""
    pairs = generate_cauchy_data(manifest.admittance, manifest.boundary, manifest.n_boundary,
                                 manifest.forward_n_boundary, manifest.forward_n_layers)
    if manifest.noise > 0:
        rng = np.random.default_rng(manifest.seed)
        pairs = [CauchyPair(p.f, add_noise(p.g, manifest.noise, rng), p.k) for p in pairs]
    return pairs


def flux_compatibility(fwd: ForwardSolution) -> list[float]:
    """``|int_Sigma g - int_Gamma alpha u|`` per pair on the forward mesh."""
    out = []
    for u, g in zip(fwd.states, fwd.fluxes):
        lhs = fem.boundary_integral(fwd.mesh, "sigma", g)
        rhs = fem.boundary_integral(fwd.mesh, "gamma", fwd.alpha * u[fwd.mesh.gamma_ring])
        out.append(abs(lhs - rhs))
    return out


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def serialize_dataset(pairs, manifest: DatasetManifest, path) -> None:
    n = manifest.n_boundary
    t = sigma_angles(n)
    lines = ["#manifest", *manifest.to_lines()]
    for p in pairs:
        if len(p.f) != n:
            raise DatasetError(f"pair {p.k} has {len(p.f)} nodes, manifest says {n}")
        lines.append(f"#pair k={p.k}")
        lines.append("t,f,g")
        lines.extend(f"{_fmt(ti)},{_fmt(fi)},{_fmt(gi)}" for ti, fi, gi in zip(t, p.f, p.g))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> tuple[list[CauchyPair], DatasetManifest]:
    text = Path(path).read_text()
    kv: dict[str, str] = {}
    rows: dict[int, list[tuple[float, float]]] = {}
    section, current = None, None
    lineno = 0
    try:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if line == "#manifest":
                section = "manifest"
            elif line.startswith("#pair k="):
                section, current = "pair", int(line[len("#pair k="):])
                rows[current] = []
            elif section == "manifest":
                key, value = line.split("=", 1)
                kv[key] = value
            elif section == "pair":
                if line == "t,f,g":
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise ValueError(f"expected 3 columns, got {len(parts)}")
                rows[current].append((float(parts[1]), float(parts[2])))
            else:
                raise ValueError("data outside a section")
        manifest = DatasetManifest.from_mapping(kv)
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    if sorted(rows) != [1, 2]:
        raise DatasetError(f"{path}: expected pairs k=1 and k=2, found {sorted(rows)}")
    pairs = []
    for k in (1, 2):
        if len(rows[k]) != manifest.n_boundary:
            raise DatasetError(f"{path}: pair {k} has {len(rows[k])} rows, "
                               f"expected {manifest.n_boundary} (truncated file?)")
        arr = np.array(rows[k])
        pairs.append(CauchyPair(arr[:, 0], arr[:, 1], k))
    return pairs, manifest
