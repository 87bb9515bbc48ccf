"""Structured triangulation of the annulus between the outer ring and the inner ring.

Nodes are stored layer by layer: layer ``0`` is the inner ring (gamma),
layer ``n_layers`` the outer ring (sigma); node ``(l, j)`` has index
``l * n + j``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo


class MeshError(ValueError):
    pass


class MeshBreakdown(RuntimeError):
    """The inner ring can no longer bound a valid annulus."""


@dataclass(frozen=True, eq=False)
class AnnularMesh:
    nodes: np.ndarray          # (N, 2)
    triangles: np.ndarray      # (T, 3), counterclockwise
    sigma_ring: np.ndarray     # ordered node indices on the outer ring
    gamma_ring: np.ndarray     # ordered node indices on the inner ring
    h_target: float
    n_layers: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def sigma_nodes(self) -> np.ndarray:
        return self.nodes[self.sigma_ring]

    @property
    def gamma_nodes(self) -> np.ndarray:
        return self.nodes[self.gamma_ring]

    def interior_mask(self) -> np.ndarray:
        """Nodes not on sigma; these carry unknowns in Dirichlet-type solves."""
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.sigma_ring] = False
        return mask


@dataclass(frozen=True)
class MeshQualityReport:
    min_signed_area: float
    min_angle: float           # degrees
    inverted_count: int

    @property
    def ok(self) -> bool:
        return self.inverted_count == 0


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (nodes[triangles[:, k]] for k in range(3))
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def validate_mesh(mesh: AnnularMesh) -> MeshQualityReport:
    area = signed_areas(mesh.nodes, mesh.triangles)
    p = mesh.nodes[mesh.triangles]
    angles = []
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return MeshQualityReport(
        min_signed_area=float(area.min()),
        min_angle=float(np.min(angles)),
        inverted_count=int(np.count_nonzero(area <= 0)),
    )


def _transfinite(inner: np.ndarray, outer: np.ndarray, n_layers: int, h_target: float) -> AnnularMesh:
    n = len(inner)
    s = np.arange(n_layers + 1) / n_layers
    nodes = ((1 - s)[:, None, None] * inner[None] + s[:, None, None] * outer[None]).reshape(-1, 2)
    # exact ring coordinates, no blending round-off
    nodes[:n] = inner
    nodes[n_layers * n:] = outer

    l, j = np.meshgrid(np.arange(n_layers), np.arange(n), indexing="ij")
    l, j = l.ravel(), j.ravel()
    a = l * n + j
    b = l * n + (j + 1) % n
    c = (l + 1) * n + (j + 1) % n
    d = (l + 1) * n + j
    diag_ac = np.linalg.norm(nodes[c] - nodes[a], axis=1)
    diag_bd = np.linalg.norm(nodes[d] - nodes[b], axis=1)
    use_ac = diag_ac <= diag_bd
    t1 = np.where(use_ac[:, None], np.stack([a, d, c], 1), np.stack([a, d, b], 1))
    t2 = np.where(use_ac[:, None], np.stack([a, c, b], 1), np.stack([d, c, b], 1))
    tris = np.stack([t1, t2], axis=1).reshape(-1, 3)

    mesh = AnnularMesh(
        nodes=nodes,
        triangles=tris,
        sigma_ring=np.arange(n_layers * n, (n_layers + 1) * n),
        gamma_ring=np.arange(n),
        h_target=float(h_target),
        n_layers=int(n_layers),
    )
    area = signed_areas(nodes, tris)
    bad = np.flatnonzero(area <= 0)
    if bad.size:
        cols = np.unique(j[bad // 2])
        t_lo, t_hi = 2 * np.pi * cols.min() / n, 2 * np.pi * (cols.max() + 1) / n
        raise MeshError(
            f"{bad.size} inverted triangles for node columns {cols.min()}..{cols.max()} "
            f"(parameter range [{t_lo:.3f}, {t_hi:.3f}])"
        )
    return mesh


def _inner_start(inner: np.ndarray, outer0: np.ndarray) -> float:
    """Arclength on ``inner`` facing the first outer node, seen from the inner centroid."""
    return geo.ray_crossing_arclength(inner, geo.centroid(inner), outer0)


def build_annular_mesh(outer, inner, n_boundary: int = 150, n_layers: int = 10) -> AnnularMesh:
    """Transfinite annulus mesh between two closed counterclockwise polylines.

    The outer ring is used as given when it already has ``n_boundary`` nodes,
    so its coordinates are reproduced bit for bit.  The inner ring is
    resampled to ``n_boundary`` nodes equidistributed in arclength, starting
    where the ray from its centroid towards the first outer node crosses it.
    """
    outer = geo.check_polyline(outer)
    inner = geo.check_polyline(inner)
    if n_layers < 1:
        raise MeshError("n_layers must be at least 1")
    if not np.all(geo.points_inside(outer, inner)) or geo.polylines_intersect(outer, inner):
        raise MeshError("inner curve is not strictly inside the outer curve")
    if len(outer) != n_boundary:
        outer, _ = geo.resample_arclength(outer, n_boundary)
    inner, _ = geo.resample_arclength(inner, n_boundary, _inner_start(inner, outer[0]))
    gap = np.median(np.linalg.norm(outer - inner, axis=1))
    return _transfinite(inner, outer, n_layers, h_target=gap / n_layers)


def deform_mesh(mesh: AnnularMesh, theta: np.ndarray, t: float) -> AnnularMesh:
    """Move every node by ``t * theta``; the outer ring stays fixed exactly."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != mesh.nodes.shape:
        raise MeshError(f"deformation field has shape {theta.shape}, expected {mesh.nodes.shape}")
    nodes = mesh.nodes + t * theta
    nodes[mesh.sigma_ring] = mesh.nodes[mesh.sigma_ring]
    return replace(mesh, nodes=nodes)


def resample_gamma(mesh: AnnularMesh, alpha=None):
    """Re-equidistribute the inner ring by arclength and rebuild the mesh.

    Returns ``(new_mesh, new_alpha)``; ``alpha`` (nodal on the inner ring)
    is carried over by linear interpolation in arclength.  Raises
    ``MeshBreakdown`` if the inner ring has become self-intersecting and
    ``MeshError`` if the resampled ring or the rebuilt layers would be invalid.
    """
    inner = mesh.gamma_nodes
    outer = mesh.sigma_nodes
    if geo.signed_area(inner) <= 0 or not geo.is_simple(inner):
        raise MeshBreakdown("inner boundary is self-intersecting")
    if not np.all(geo.points_inside(outer, inner)):
        raise MeshBreakdown("inner boundary left the outer domain")
    n = len(inner)
    start = _inner_start(inner, outer[0])
    new_inner, s_new = geo.resample_arclength(inner, n, start)
    if not geo.is_simple(new_inner):
        # chords across a near-cusp can cross; keep the current ring instead
        raise MeshError("resampled inner boundary is self-intersecting")
    new_mesh = _transfinite(new_inner, outer, mesh.n_layers, mesh.h_target)
    new_alpha = None
    if alpha is not None:
        s_old = geo.arclength_params(inner)
        new_alpha = geo.interp_periodic(s_new, s_old, alpha, geo.perimeter(inner))
    return new_mesh, new_alpha


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_mesh(path, mesh: AnnularMesh) -> None:
    with open(path, "w") as fh:
        fh.write(f"h_target={mesh.h_target!r} n_layers={mesh.n_layers}\n")
        fh.write("#nodes\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i},{float(x)!r},{float(y)!r}\n")
        fh.write("#triangles\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a},{b},{c}\n")
        fh.write("#rings\n")
        fh.write("sigma," + ",".join(map(str, mesh.sigma_ring)) + "\n")
        fh.write("gamma," + ",".join(map(str, mesh.gamma_ring)) + "\n")


def read_mesh(path) -> AnnularMesh:
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = dict(kv.split("=") for kv in lines[0].split())
    section = None
    nodes, tris, rings = [], [], {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("#"):
            section = line[1:]
            continue
        parts = line.split(",")
        try:
            if section == "nodes":
                nodes.append((float(parts[1]), float(parts[2])))
            elif section == "triangles":
                tris.append(tuple(int(v) for v in parts))
            elif section == "rings":
                rings[parts[0]] = np.array([int(v) for v in parts[1:]])
            else:
                raise ValueError(f"data outside a section: {line!r}")
        except (ValueError, IndexError) as exc:
            raise MeshError(f"{path}:{lineno}: {exc}") from exc
    return AnnularMesh(
        nodes=np.array(nodes),
        triangles=np.array(tris, dtype=int),
        sigma_ring=rings["sigma"],
        gamma_ring=rings["gamma"],
        h_target=float(header["h_target"]),
        n_layers=int(header["n_layers"]),
    )
