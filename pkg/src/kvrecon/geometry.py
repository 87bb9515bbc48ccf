"""Test-case curves and admittances, and discrete geometry of closed polylines.

A closed polyline is an ``(m, 2)`` float array of nodes in counterclockwise
order; node ``m - 1`` connects back to node ``0``.  Two rings appear in the
annular domain: ``"sigma"`` (the outer, accessible boundary) and ``"gamma"``
(the inner, unknown boundary).  Normals are always outward with respect to
the annulus, so on ``gamma`` they point into the hole.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable

import numpy as np

BOUNDARY_CASES = ("B1", "B2", "B3")
ADMITTANCE_CASES = ("A1", "A2", "A3")
RINGS = ("sigma", "gamma")


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# test cases
# --------------------------------------------------------------------------

def _b1(t):
    # sin(t) in the second coordinate: the sin(2t) variant is a figure-eight
    return np.stack([0.1 + 0.7 * np.cos(t), 0.2 + 0.5 * np.sin(t)], axis=-1)


def _b2(t):
    return np.stack([0.6 * np.cos(t), 0.5 * np.sin(t) * (1.8 + np.cos(2 * t))], axis=-1)


def _b3(t):
    rad = (0.6 + 0.54 * np.cos(t) + 0.06 * np.sin(2 * t)) / (1 + 0.75 * np.cos(t))
    return np.stack([-0.25 + rad * np.cos(t), 0.05 + rad * np.sin(t)], axis=-1)


_CURVES: dict[str, Callable] = {"B1": _b1, "B2": _b2, "B3": _b3}

_ADMITTANCES: dict[str, Callable] = {
    "A1": lambda x1, x2: np.exp(x1 * x2),
    "A2": lambda x1, x2: 1.0 + 0.5 * x1 * x2,
    "A3": lambda x1, x2: 1.0 + 0.5 * np.sin(np.pi * x1) * np.sin(np.pi * x2),
}


def eval_case_curve(case: str, t):
    """Evaluate the parametric inner boundary ``case`` at angle(s) ``t``.

    Returns an array of shape ``t.shape + (2,)``.
    """
    try:
        curve = _CURVES[case]
    except KeyError:
        raise GeometryError(f"unknown boundary case {case!r}") from None
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise GeometryError("curve parameter must be finite")
    return curve(t)


def eval_case_admittance(case: str, p):
    """Closed-form Robin admittance of ``case`` at point(s) ``p`` (last axis 2)."""
    try:
        fn = _ADMITTANCES[case]
    except KeyError:
        raise GeometryError(f"unknown admittance case {case!r}") from None
    p = np.asarray(p, dtype=float)
    return fn(p[..., 0], p[..., 1])


def circle(radius: float, n: int, center=(0.0, 0.0)) -> np.ndarray:
    """Regular ``n``-gon inscribed in a circle, first node at angle 0."""
    t = 2 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def sample_case_curve(case: str, n: int) -> np.ndarray:
    """Polyline through ``n`` nodes at uniform curve parameter."""
    return eval_case_curve(case, 2 * np.pi * np.arange(n) / n)


# --------------------------------------------------------------------------
# basic polyline quantities
# --------------------------------------------------------------------------

def as_polyline(nodes) -> np.ndarray:
    p = np.asarray(nodes, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise GeometryError(f"polyline must have shape (m, 2), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise GeometryError("polyline has non-finite coordinates")
    return p


def edge_vectors(poly: np.ndarray) -> np.ndarray:
    """Edge ``i`` runs from node ``i`` to node ``i + 1`` (cyclically)."""
    return np.roll(poly, -1, axis=0) - poly


def edge_lengths(poly: np.ndarray) -> np.ndarray:
    return np.linalg.norm(edge_vectors(poly), axis=1)


def perimeter(poly: np.ndarray) -> float:
    return float(edge_lengths(poly).sum())


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def centroid(poly: np.ndarray) -> np.ndarray:
    """Area centroid of the region enclosed by a simple polyline."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([np.sum((x + xn) * cr), np.sum((y + yn) * cr)]) / (6.0 * a)


def arclength_params(poly: np.ndarray) -> np.ndarray:
    """Cumulative arclength at each node, starting at 0 for node 0."""
    return np.concatenate([[0.0], np.cumsum(edge_lengths(poly))[:-1]])


def _segments_cross(p1, p2, q1, q2) -> np.ndarray:
    """Proper-intersection test for broadcast segment pairs."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def is_simple(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed polyline intersect."""
    m = len(poly)
    a, b = poly, np.roll(poly, -1, axis=0)
    cross = _segments_cross(a[:, None], b[:, None], a[None, :], b[None, :])
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    if np.any(cross[i[keep], j[keep]]):
        return False
    # repeated nodes and collinear overlaps are not caught by the proper test
    return bool(np.all(edge_lengths(poly) > 0))


def polylines_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    a2, b2 = np.roll(a, -1, axis=0), np.roll(b, -1, axis=0)
    return bool(np.any(_segments_cross(a[:, None], a2[:, None], b[None, :], b2[None, :])))


def points_inside(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Even-odd ray-casting point-in-polygon test."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0:1], pts[:, 1:2]
    xa, ya = poly[:, 0][None, :], poly[:, 1][None, :]
    xb, yb = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    straddle = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = xa + (y - ya) * (xb - xa) / (yb - ya)
    hits = straddle & (x < xcross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def check_polyline(poly, min_nodes: int = 8) -> np.ndarray:
    """Validate the closed-polyline invariants and return the node array."""
    p = as_polyline(poly)
    if len(p) < min_nodes:
        raise GeometryError(f"polyline needs at least {min_nodes} nodes, got {len(p)}")
    if signed_area(p) <= 0:
        raise GeometryError("polyline must be counterclockwise with positive area")
    if not is_simple(p):
        raise GeometryError("polyline is self-intersecting")
    return p


# --------------------------------------------------------------------------
# normals and curvature
# --------------------------------------------------------------------------

def _orientation(ring: str) -> float:
    if ring == "sigma":
        return 1.0
    if ring == "gamma":
        return -1.0
    raise GeometryError(f"ring must be one of {RINGS}, got {ring!r}")


def outward_normals(curve, ring: str) -> np.ndarray:
    """Unit node normals pointing out of the annulus.

    Each node normal bisects the unit normals of its two adjacent edges.
    """
    sign = _orientation(ring)
    p = as_polyline(curve)
    e = edge_vectors(p)
    ln = np.linalg.norm(e, axis=1)
    if np.any(ln == 0):
        raise GeometryError("degenerate zero-length edge")
    # right-hand normal of a ccw edge points out of the enclosed region
    en = np.stack([e[:, 1], -e[:, 0]], axis=1) / ln[:, None]
    nn = en + np.roll(en, 1, axis=0)
    nn /= np.linalg.norm(nn, axis=1)[:, None]
    return sign * nn


def discrete_curvature(curve, ring: str) -> np.ndarray:
    """Signed Menger curvature, ``kappa = div_Gamma n`` with ``n`` outward to the annulus.

    A circle of radius ``r`` gives ``+1/r`` as the outer ring and ``-1/r`` as
    the inner ring.
    """
    sign = _orientation(ring)
    p = as_polyline(curve)
    prev, nxt = np.roll(p, 1, axis=0), np.roll(p, -1, axis=0)
    a = p - prev
    b = nxt - p
    c = nxt - prev
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1) * np.linalg.norm(c, axis=1)
    kappa = np.zeros(len(p))
    ok = denom > 0
    kappa[ok] = 2.0 * cross[ok] / denom[ok]
    return sign * kappa


# --------------------------------------------------------------------------
# distances and resampling
# --------------------------------------------------------------------------

def _point_segment_dist(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest edge of the closed polyline."""
    a = poly[None, :, :]
    ab = edge_vectors(poly)[None, :, :]
    ap = pts[:, None, :] - a
    den = np.sum(ab * ab, axis=2)
    s = np.clip(np.sum(ap * ab, axis=2) / np.where(den > 0, den, 1.0), 0.0, 1.0)
    d = ap - s[..., None] * ab
    return np.sqrt(np.min(np.sum(d * d, axis=2), axis=1))


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between the node set of each curve and the other curve."""
    a, b = as_polyline(a), as_polyline(b)
    return float(max(_point_segment_dist(a, b).max(), _point_segment_dist(b, a).max()))


def interp_periodic(s_new, s_old, values, period: float) -> np.ndarray:
    """Linear interpolation of a periodic nodal signal in its parameter."""
    s_old = np.asarray(s_old, dtype=float)
    values = np.asarray(values, dtype=float)
    xp = np.concatenate([s_old, [s_old[0] + period]])
    fp = np.concatenate([values, values[:1]], axis=0)
    s = np.mod(np.asarray(s_new, dtype=float) - s_old[0], period) + s_old[0]
    if fp.ndim == 1:
        return np.interp(s, xp, fp)
    return np.stack([np.interp(s, xp, fp[:, k]) for k in range(fp.shape[1])], axis=-1)


def resample_arclength(poly, n: int, start: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Place ``n`` nodes equidistributed in arclength, the first at arclength ``start``.

    Returns the new nodes and their arclength positions along the input
    polyline (useful to transfer nodal data).
    """
    p = as_polyline(poly)
    s_old = arclength_params(p)
    length = perimeter(p)
    s_new = start + length * np.arange(n) / n
    return interp_periodic(s_new, s_old, p, length), np.mod(s_new, length)


def ray_crossing_arclength(poly, origin, target) -> float:
    """Arclength position where segment ``origin -> target`` last crosses ``poly``."""
    p = as_polyline(poly)
    e = edge_vectors(p)
    d = np.asarray(target, float) - np.asarray(origin, float)
    # solve origin + u d = p_i + v e_i
    den = d[0] * e[:, 1] - d[1] * e[:, 0]
    w = p - np.asarray(origin, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / den
        v = (w[:, 0] * d[1] - w[:, 1] * d[0]) / den
    # slack so a ray through a node still registers on one of its edges
    slack = 1e-12
    hit = (den != 0) & (u >= -slack) & (u <= 1 + slack) & (v >= -slack) & (v <= 1 + slack)
    if not np.any(hit):
        raise GeometryError("segment does not cross the polyline")
    idx = np.flatnonzero(hit)
    i = idx[np.argmax(u[idx])]
    s = arclength_params(p)[i] + np.clip(v[i], 0.0, 1.0) * edge_lengths(p)[i]
    return float(np.mod(s, perimeter(p)))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_polyline_csv(path, poly) -> None:
    p = as_polyline(poly)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x1", "x2"])
        for i, (x, y) in enumerate(p):
            w.writerow([i, repr(float(x)), repr(float(y))])


def read_polyline_csv(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["index"]))
    return np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
