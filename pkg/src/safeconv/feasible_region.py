"""Feasible output region of a current-limited converter.

Any pair out of (P, Q, V^2) is a quadratic map of the current; the image of
the disk |I| <= I_max under such a pair is convex.  This module carries the
mode-dependent quadratic coefficients, samples the region, certifies
convexity of sample sets, and provides a grid-search oracle for the nearest
feasible output point (used as ground truth against the online controller).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, QhullError

from .dq_network import EquivalentNetwork, _as_dq_array
from .errors import ConfigurationError

# below this source magnitude the linear coefficient vectors degenerate
_MIN_SOURCE_NORM = 1e-9


class TrackingMode(enum.Enum):
    """Which output pair (S1, S2) the converter tracks."""

    PQ = "pq"
    PV2 = "pv2"
    QV2 = "qv2"


@dataclass(frozen=True)
class QuadraticCoeffs:
    """Coefficients of the output pair as quadratics in the current.

    S1(I) = alpha |I|^2 + a . I + zeta1
    S2(I) = beta  |I|^2 + b . I + zeta2
    """

    alpha: float
    beta: float
    a: np.ndarray
    b: np.ndarray
    zeta1: float
    zeta2: float

    def outputs(self, i_dq) -> tuple[float, float]:
        i = _as_dq_array(i_dq)
        mag2 = i[0] * i[0] + i[1] * i[1]
        s1 = self.alpha * mag2 + self.a[0] * i[0] + self.a[1] * i[1] + self.zeta1
        s2 = self.beta * mag2 + self.b[0] * i[0] + self.b[1] * i[1] + self.zeta2
        return s1, s2

    def linear_matrix(self) -> np.ndarray:
        """Rows a^T, b^T; invertible whenever the selected pair is non-degenerate."""
        return np.array([self.a, self.b])


def _component_coeffs(which: str, net: EquivalentNetwork):
    """(quadratic coeff, linear vector, constant) for one of 'p', 'q', 'v2'."""
    r, x = net.r_eq, net.x_eq
    e = net.e_dq.as_array()
    if which == "p":
        return r, e.copy(), 0.0
    if which == "q":
        return x, np.array([e[1], -e[0]]), 0.0
    if which == "v2":
        zte = np.array([r * e[0] + x * e[1], -x * e[0] + r * e[1]])
        return net.z_mag2, 2.0 * zte, float(e @ e)
    raise ValueError(which)


_MODE_PAIRS = {
    TrackingMode.PQ: ("p", "q"),
    TrackingMode.PV2: ("p", "v2"),
    TrackingMode.QV2: ("q", "v2"),
}


def coeffs_for_mode(mode: TrackingMode, net: EquivalentNetwork) -> QuadraticCoeffs:
    """Quadratic coefficients reproducing compute_outputs for the selected pair.

    Raises ConfigurationError for a collapsed source voltage, where the linear
    coefficient vectors lose independence and the region degenerates.
    """
    if net.e_dq.norm() <= _MIN_SOURCE_NORM:
        raise ConfigurationError(
            f"source voltage magnitude {net.e_dq.norm():.3e} too small: output maps degenerate"
        )
    first, second = _MODE_PAIRS[mode]
    alpha, a, zeta1 = _component_coeffs(first, net)
    beta, b, zeta2 = _component_coeffs(second, net)
    return QuadraticCoeffs(alpha=alpha, beta=beta, a=a, b=b, zeta1=zeta1, zeta2=zeta2)


class RegionSample(NamedTuple):
    """Images of the current-limit circle, the fold chord, and an interior grid.

    The region boundary is contained in the image of the limit circle plus
    the image of the map's critical set.  The critical set of the quadratic
    pair is the line where the Jacobian determinant (linear in the current)
    vanishes; when that line crosses the current disk its image can bulge
    past the circle image, so ``critical`` belongs in any hull of the
    boundary.  ``hull_generators`` bundles both.
    """

    boundary: np.ndarray  # (n, 2), images of the circle |I| = I_max, angle order
    interior: np.ndarray  # (m, 2), images of an interior polar grid
    critical: np.ndarray  # (k, 2), images of the fold chord (may be empty)

    @property
    def all_points(self) -> np.ndarray:
        return np.vstack([self.boundary, self.critical, self.interior])

    @property
    def hull_generators(self) -> np.ndarray:
        return np.vstack([self.boundary, self.critical])


def _fold_chord(coeffs: QuadraticCoeffs, i_max: float, n: int) -> np.ndarray:
    """Sample the critical line of the output map inside the current disk.

    det J(x) = 2 alpha (x ^ b) - 2 beta (x ^ a) + (a ^ b) is affine in x, so
    the critical set is the line ``w . x + (a ^ b) = 0`` with
    w = 2 alpha (b_q, -b_d) - 2 beta (a_q, -a_d); empty when it misses the disk.
    """
    a, b = coeffs.a, coeffs.b
    w = np.array([
        2.0 * coeffs.alpha * b[1] - 2.0 * coeffs.beta * a[1],
        -2.0 * coeffs.alpha * b[0] + 2.0 * coeffs.beta * a[0],
    ])
    cross_ab = a[0] * b[1] - a[1] * b[0]
    wnorm = np.linalg.norm(w)
    if wnorm < 1e-300:
        return np.zeros((0, 2))
    dist = abs(cross_ab) / wnorm
    if dist >= i_max:
        return np.zeros((0, 2))
    foot = -cross_ab * w / (wnorm * wnorm)
    tangent = np.array([-w[1], w[0]]) / wnorm
    half = math.sqrt(i_max * i_max - dist * dist)
    ts = np.linspace(-half, half, n)
    return foot[None, :] + ts[:, None] * tangent[None, :]


def sample_boundary(
    mode: TrackingMode,
    net: EquivalentNetwork,
    i_max: float,
    n: int = 720,
    interior_grid: tuple[int, int] = (100, 100),
) -> RegionSample:
    """Sample the output-pair image of the safe current disk.

    ``n`` equally spaced angles on the circle |I| = I_max (returned in angle
    order), the image of the fold chord when the critical line crosses the
    disk, and an interior polar grid.  ``hull_generators`` (circle + fold) is
    what a convexity check should take the hull of; the interior images are
    the probe set.
    """
    if n < 16:
        raise ValueError(f"need n >= 16 boundary samples, got {n}")
    coeffs = coeffs_for_mode(mode, net)

    def image_of(i_d, i_q):
        mag2 = i_d * i_d + i_q * i_q
        s1 = coeffs.alpha * mag2 + coeffs.a[0] * i_d + coeffs.a[1] * i_q + coeffs.zeta1
        s2 = coeffs.beta * mag2 + coeffs.b[0] * i_d + coeffs.b[1] * i_q + coeffs.zeta2
        return np.column_stack([s1, s2])

    ang = np.linspace(-np.pi, np.pi, n, endpoint=False)
    boundary = image_of(i_max * np.cos(ang), i_max * np.sin(ang))

    chord = _fold_chord(coeffs, i_max, 8 * n)
    critical = (image_of(chord[:, 0], chord[:, 1]) if len(chord)
                else np.zeros((0, 2)))

    n_r, n_a = interior_grid
    radii = np.linspace(0.0, i_max, n_r, endpoint=False)
    angles = np.linspace(-np.pi, np.pi, n_a, endpoint=False)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    interior = image_of((rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel())
    return RegionSample(boundary=boundary, interior=interior, critical=critical)


class ConvexityReport(NamedTuple):
    is_convex: bool
    max_violation: float
    degenerate: bool


def _hull_outside_distance(points: np.ndarray, hull_vertices: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the hull polygon, 0 if inside."""
    verts = hull_vertices
    nxt = np.roll(verts, -1, axis=0)
    edges = nxt - verts  # (k, 2)
    # outward normal for a counter-clockwise polygon
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])
    norms = np.linalg.norm(normals, axis=1)
    normals = normals / norms[:, None]
    # halfplane signed distances: (p - v_k) . n_k
    rel = points[:, None, :] - verts[None, :, :]  # (m, k, 2)
    signed = np.einsum("mkc,kc->mk", rel, normals)
    inside = np.all(signed <= 0.0, axis=1)
    out = np.zeros(len(points))
    idx = np.where(~inside)[0]
    for m in idx:
        p = points[m]
        # exact distance to the polygon: min over edge segments
        t = np.clip(np.einsum("kc,kc->k", p - verts, edges) / (norms**2), 0.0, 1.0)
        proj = verts + t[:, None] * edges
        out[m] = np.min(np.linalg.norm(p - proj, axis=1))
    return out


def convexity_check(
    points,
    hull_points=None,
    rel_tol: float = 1e-9,
) -> ConvexityReport:
    """Test that sampled image points never fall outside the hull of the boundary image.

    ``hull_points`` defaults to ``points`` itself; pass the boundary-circle
    image there and the full sample (boundary + interior) as ``points`` to
    exercise the actual convexity claim.  The violation is the largest
    Euclidean distance from any point to the hull, compared against
    ``rel_tol`` times the region diameter.  Fewer than 3 non-collinear hull
    points yield the degenerate flag rather than an error.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 8:
        raise ValueError(f"need at least 8 sample points, got {len(points)}")
    hull_pts = points if hull_points is None else np.atleast_2d(np.asarray(hull_points, dtype=float))
    try:
        hull = ConvexHull(hull_pts)
    except QhullError:
        return ConvexityReport(is_convex=True, max_violation=0.0, degenerate=True)
    verts = hull_pts[hull.vertices]  # counter-clockwise for 2-D qhull
    diameter = float(np.max(np.ptp(hull_pts, axis=0)))
    if diameter == 0.0:
        return ConvexityReport(is_convex=True, max_violation=0.0, degenerate=True)
    violation = float(np.max(_hull_outside_distance(points, verts)))
    return ConvexityReport(
        is_convex=violation <= rel_tol * diameter,
        max_violation=violation,
        degenerate=False,
    )


class NearestPoint(NamedTuple):
    s1: float
    s2: float
    current: np.ndarray
    objective: float


def nearest_feasible(
    mode: TrackingMode,
    net: EquivalentNetwork,
    i_max: float,
    target,
    gamma: float = 1.0,
    n_radius: int = 200,
    n_angle: int = 720,
) -> NearestPoint:
    """Grid-search oracle for the output point closest to ``target``.

    Minimizes 0.5 (S1 - t1)^2 + gamma 0.5 (S2 - t2)^2 over |I| <= I_max on a
    dense polar grid (the circle |I| = I_max is sampled exactly, where the
    binding optimum usually lives), then polishes with Nelder-Mead in polar
    coordinates.  Deterministic: fixed grid, first-best tie-break, fixed
    simplex start.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    coeffs = coeffs_for_mode(mode, net)
    t1, t2 = float(target[0]), float(target[1])

    radii = np.linspace(0.0, i_max, n_radius)  # includes the boundary exactly
    angles = np.linspace(-np.pi, np.pi, n_angle, endpoint=False)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    i_d = (rr * np.cos(aa)).ravel()
    i_q = (rr * np.sin(aa)).ravel()
    mag2 = i_d * i_d + i_q * i_q
    s1 = coeffs.alpha * mag2 + coeffs.a[0] * i_d + coeffs.a[1] * i_q + coeffs.zeta1
    s2 = coeffs.beta * mag2 + coeffs.b[0] * i_d + coeffs.b[1] * i_q + coeffs.zeta2
    obj = 0.5 * (s1 - t1) ** 2 + gamma * 0.5 * (s2 - t2) ** 2
    k = int(np.argmin(obj))  # argmin returns the first (lowest) index on ties

    def polar_objective(x):
        r = min(max(x[0], 0.0), i_max)
        cur = (r * math.cos(x[1]), r * math.sin(x[1]))
        u1, u2 = coeffs.outputs(cur)
        return 0.5 * (u1 - t1) ** 2 + gamma * 0.5 * (u2 - t2) ** 2

    r0 = math.hypot(i_d[k], i_q[k])
    phi0 = math.atan2(i_q[k], i_d[k])
    res = minimize(polar_objective, [r0, phi0], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000})
    best = res.x if res.fun <= obj[k] else np.array([r0, phi0])
    r = min(max(best[0], 0.0), i_max)
    cur = np.array([r * math.cos(best[1]), r * math.sin(best[1])])
    u1, u2 = coeffs.outputs(cur)
    return NearestPoint(s1=u1, s2=u2, current=cur,
                        objective=0.5 * (u1 - t1) ** 2 + gamma * 0.5 * (u2 - t2) ** 2)
