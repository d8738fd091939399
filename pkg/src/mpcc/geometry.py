"""Arc-length parametrized piecewise-linear reference paths.

Paths are stored as polyline vertices with precomputed cumulative arc
length, so position/tangent lookups cost O(log M) and local projection
costs O(window). Rounded corners are polygonized once at build time;
nothing downstream ever sees the circles again.

Conventions:
  * s is arc length in metres, clamped to [0, L] on every query.
  * At a vertex shared by two segments the earlier segment's tangent is
    returned (subgradient choice for C^0 corners).
  * The unit normal is the tangent rotated +90 deg, n = (-ty, tx);
    signed distances are positive on that side.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TOLERANCE = 20e-6  # contour tolerance halfwidth [m]
DEFAULT_CHORD_TOL = 1e-7   # max chord-to-arc deviation when polygonizing [m]


@dataclass(frozen=True)
class PathPoint:
    """Position and unit tangent of a path at one arc-length value."""

    position: np.ndarray  # (2,)
    tangent: np.ndarray   # (2,), unit norm

    @property
    def normal(self) -> np.ndarray:
        """Unit normal, tangent rotated by +90 degrees."""
        return np.array([-self.tangent[1], self.tangent[0]])


class ParametricPath:
    """Piecewise-linear path parametrized by arc length.

    Parameters
    ----------
    vertices : (M, 2) array
        Polyline vertices. M >= 2 for a regular path; a single vertex is
        accepted as a degenerate zero-length path (used for empty jobs).
    tolerance_halfwidth : float
        Contour tolerance band halfwidth carried with the geometry.
    """

    def __init__(self, vertices, tolerance_halfwidth: float = DEFAULT_TOLERANCE):
        vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        if vertices.ndim != 2 or vertices.shape[1] != 2 or vertices.shape[0] < 1:
            raise ValueError("vertices must be an (M, 2) array with M >= 1")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("vertices must be finite")
        if tolerance_halfwidth <= 0.0:
            raise ValueError("tolerance_halfwidth must be positive")

        self.vertices = vertices
        self.tolerance_halfwidth = float(tolerance_halfwidth)
        self._ext_cache = {}

        if len(vertices) == 1:
            # Degenerate point path: L = 0, conventional tangent +x.
            self._seg_dir = np.array([[1.0, 0.0]])
            self._seg_len = np.zeros(1)
            self.cum = np.zeros(1)
            return

        diffs = np.diff(vertices, axis=0)
        seg_len = np.hypot(diffs[:, 0], diffs[:, 1])
        if np.any(seg_len == 0.0):
            raise ValueError("consecutive vertices must be distinct")
        self._seg_dir = diffs / seg_len[:, None]
        self._seg_len = seg_len
        self.cum = np.concatenate(([0.0], np.cumsum(seg_len)))

    # ------------------------------------------------------------------
    # basic queries

    @property
    def length(self) -> float:
        """Total arc length L."""
        return float(self.cum[-1])

    @property
    def is_degenerate(self) -> bool:
        return len(self.vertices) == 1

    def clamp(self, s):
        """Clamp arc length values into [0, L]."""
        return np.clip(s, 0.0, self.length)

    def _segment_of(self, s):
        """Segment index for clamped s; vertices resolve to the earlier segment."""
        idx = np.searchsorted(self.cum, s, side="left") - 1
        return np.clip(idx, 0, len(self._seg_len) - 1)

    def frames(self, s):
        """Positions and unit tangents at arc lengths ``s`` (array-valued).

        Returns (positions (K, 2), tangents (K, 2)). Out-of-range s is
        clamped to [0, L].
        """
        s = self.clamp(np.atleast_1d(np.asarray(s, dtype=float)))
        if self.is_degenerate:
            pos = np.repeat(self.vertices, len(s), axis=0)
            tan = np.repeat(self._seg_dir, len(s), axis=0)
            return pos, tan
        j = self._segment_of(s)
        pos = self.vertices[j] + (s - self.cum[j])[:, None] * self._seg_dir[j]
        return pos, self._seg_dir[j].copy()

    def point_at(self, s: float) -> PathPoint:
        """Evaluate position and unit tangent at one arc length."""
        pos, tan = self.frames(float(s))
        return PathPoint(pos[0], tan[0])

    def tangent_angle(self, s: float) -> float:
        """Tangent direction atan2(ty, tx) at arc length s, in (-pi, pi]."""
        _, tan = self.frames(float(s))
        return math.atan2(tan[0, 1], tan[0, 0])

    def tangent_angles(self, s) -> np.ndarray:
        """Vectorized tangent_angle."""
        _, tan = self.frames(s)
        return np.arctan2(tan[:, 1], tan[:, 0])

    # ------------------------------------------------------------------
    # linearization validity

    def extension_limits(self, budget: float) -> np.ndarray:
        """Per-segment arc length beyond which tangent extrapolation drifts.

        Extending past segment j along its own tangent follows a phantom
        straight; the lateral gap to the real polyline grows at every joint
        passed.  A point at arc s contributes (s - s_joint) * f(turn) per
        joint, f = sin(turn) below 90 degrees and 1 beyond (past 90 the
        nearest real point is the joint itself).  Entry j is the largest s a
        frame frozen on segment j may commit to before the accumulated gap
        exceeds ``budget``, capped at L.  Cached per budget.
        """
        if budget <= 0.0:
            raise ValueError("budget must be positive")
        key = float(budget)
        cached = self._ext_cache.get(key)
        if cached is not None:
            return cached
        n = len(self._seg_len)
        limits = np.full(n, self.length)
        if n > 1:
            d = self._seg_dir
            cross = d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]
            dot = np.einsum("ij,ij->i", d[:-1], d[1:])
            turn = np.abs(np.arctan2(cross, dot))
            factor = np.where(turn > 0.5 * math.pi, 1.0, np.sin(turn))
            for j in range(n - 1):
                err = 0.0
                slope = 0.0
                s = self.cum[j + 1]
                for i in range(j + 1, n):
                    slope += factor[i - 1]
                    step = slope * (self.cum[i + 1] - self.cum[i])
                    if slope > 0.0 and err + step >= key:
                        s = self.cum[i] + (key - err) / slope
                        break
                    err += step
                    s = self.cum[i + 1]
                limits[j] = s
        self._ext_cache[key] = limits
        return limits

    def validity_bounds(self, s, budget: float) -> np.ndarray:
        """Largest arc length each frame frozen at ``s`` may extend to."""
        limits = self.extension_limits(budget)
        s = self.clamp(np.atleast_1d(np.asarray(s, dtype=float)))
        return limits[self._segment_of(s)]

    # ------------------------------------------------------------------
    # projection

    def _project_segments(self, point, j0: int, j1: int):
        """Closest point over segments j0..j1 inclusive; ties go to larger s."""
        p = np.asarray(point, dtype=float)
        v0 = self.vertices[j0:j1 + 1]
        dirs = self._seg_dir[j0:j1 + 1]
        lens = self._seg_len[j0:j1 + 1]
        t = np.einsum("ij,ij->i", p - v0, dirs)
        t = np.clip(t, 0.0, lens)
        feet = v0 + t[:, None] * dirs
        # snap clamped feet onto the exact vertex so adjacent segments tie exactly
        hi = t == lens
        if np.any(hi):
            feet[hi] = self.vertices[j0 + 1:j1 + 2][hi]
        d2 = np.einsum("ij,ij->i", p - feet, p - feet)
        ties = np.flatnonzero(d2 == d2.min())
        k = int(ties[-1])  # forward-progress tie break
        foot = feet[k]
        s_star = self.cum[j0 + k] + t[k]
        dist = math.sqrt(d2[k])
        side = dirs[k, 0] * (p[1] - foot[1]) - dirs[k, 1] * (p[0] - foot[0])
        return float(s_star), (dist if side >= 0.0 else -dist)

    def project(self, point, s_guess: float, window: float):
        """Locally project ``point`` onto the path near ``s_guess``.

        Only segments overlapping [s_guess - window, s_guess + window]
        (clamped to [0, L]) are searched. Returns (s, d) where d is the
        signed distance, positive on the normal side; |d| is the true
        point-to-segment distance even when the foot is a vertex.
        """
        if window <= 0.0:
            raise ValueError("window must be positive")
        if self.is_degenerate:
            return self._project_point(point)
        lo = float(self.clamp(s_guess - window))
        hi = float(self.clamp(s_guess + window))
        j0 = int(np.clip(np.searchsorted(self.cum, lo, side="right") - 1,
                         0, len(self._seg_len) - 1))
        j1 = int(np.clip(np.searchsorted(self.cum, hi, side="left") - 1,
                         j0, len(self._seg_len) - 1))
        return self._project_segments(point, j0, j1)

    def project_all(self, point):
        """Exhaustive projection over every segment (reference oracle)."""
        if self.is_degenerate:
            return self._project_point(point)
        return self._project_segments(point, 0, len(self._seg_len) - 1)

    def _project_point(self, point):
        p = np.asarray(point, dtype=float)
        delta = p - self.vertices[0]
        dist = math.hypot(delta[0], delta[1])
        return 0.0, (dist if delta[1] >= 0.0 else -dist)

    def bounding_box(self):
        """((xmin, ymin), (xmax, ymax)) over the polyline."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


# ----------------------------------------------------------------------
# construction

def _corner_geometry(w, u, v, radius):
    """Center, tangent offset and turn angle for rounding one corner.

    ``u``/``v`` are the unit directions into and out of the corner ``w``.
    """
    cross = u[0] * v[1] - u[1] * v[0]
    dot = float(np.clip(np.dot(u, v), -1.0, 1.0))
    turn = math.acos(dot)
    t_off = radius * math.tan(0.5 * turn)
    bis = v - u
    bis_norm = math.hypot(bis[0], bis[1])
    center = w + (radius / math.cos(0.5 * turn)) * bis / bis_norm
    return center, t_off, turn, (1.0 if cross >= 0.0 else -1.0)


def _arc_points(center, radius, psi0, sweep, chord_tolerance):
    """Polygonize a circular arc from angle psi0 over signed ``sweep``.

    Chord deviation from the true circle stays below ``chord_tolerance``.
    Axis-extreme angles (multiples of pi/2) inside the span are inserted
    exactly, so the polyline attains the arc's axis-aligned extremes.
    """
    ratio = max(1.0 - chord_tolerance / radius, -1.0)
    dpsi = 2.0 * math.acos(ratio)
    n = max(1, int(math.ceil(abs(sweep) / dpsi)))
    psi = psi0 + np.linspace(0.0, sweep, n + 1)

    lo, hi = min(psi0, psi0 + sweep), max(psi0, psi0 + sweep)
    k0 = math.ceil(lo / (0.5 * math.pi))
    k1 = math.floor(hi / (0.5 * math.pi))
    if k1 >= k0:
        cardinals = 0.5 * math.pi * np.arange(k0, k1 + 1)
        psi = np.sort(np.concatenate([psi, cardinals]))
        if sweep < 0.0:
            psi = psi[::-1]
        psi = psi[np.concatenate(([True], np.abs(np.diff(psi)) > 1e-12))]

    return center + radius * np.column_stack([np.cos(psi), np.sin(psi)])


def build_path(waypoints, corner_radii=None, chord_tolerance: float = DEFAULT_CHORD_TOL,
               tolerance_halfwidth: float = DEFAULT_TOLERANCE) -> ParametricPath:
    """Build a path through ``waypoints`` with rounded interior corners.

    Parameters
    ----------
    waypoints : sequence of (x, y)
        At least two distinct points.
    corner_radii : sequence of float, optional
        One radius per interior waypoint; 0 keeps the corner sharp.
    chord_tolerance : float
        Maximum deviation of the polygonized arcs from the true circles.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("waypoints must be a sequence of at least two (x, y) pairs")
    if chord_tolerance <= 0.0:
        raise ValueError("chord_tolerance must be positive")

    diffs = np.diff(pts, axis=0)
    seg_len = np.hypot(diffs[:, 0], diffs[:, 1])
    if np.any(seg_len == 0.0):
        raise ValueError("duplicate consecutive waypoints")
    dirs = diffs / seg_len[:, None]

    n_corner = len(pts) - 2
    if corner_radii is None:
        radii = np.zeros(n_corner)
    else:
        radii = np.asarray(corner_radii, dtype=float)
        if radii.shape != (n_corner,):
            raise ValueError(f"corner_radii must have length {n_corner}")
        if np.any(radii < 0.0):
            raise ValueError("corner radii must be non-negative")

    out = [pts[0]]
    for i in range(n_corner):
        w = pts[i + 1]
        u, v = dirs[i], dirs[i + 1]
        r = radii[i]
        cross = u[0] * v[1] - u[1] * v[0]
        dot = float(np.dot(u, v))
        if r == 0.0 or (abs(cross) < 1e-14 and dot > 0.0):
            out.append(w)  # sharp or collinear corner: keep the vertex
            continue
        if dot < -1.0 + 1e-12:
            raise ValueError(f"cannot round the reversal at waypoint {i + 1}")
        center, t_off, turn, sign = _corner_geometry(w, u, v, r)
        # a radius may consume at most half of each adjacent segment
        if t_off > 0.5 * seg_len[i] or t_off > 0.5 * seg_len[i + 1]:
            raise ValueError(
                f"radius {r} overlaps an adjacent segment at waypoint {i + 1}")
        t_in = w - t_off * u
        psi0 = math.atan2(t_in[1] - center[1], t_in[0] - center[0])
        arc = _arc_points(center, r, psi0, sign * turn, chord_tolerance)
        out.extend(arc)
    out.append(pts[-1])

    vertices = np.array(out)
    keep = np.concatenate(
        ([True], np.hypot(*(np.diff(vertices, axis=0).T)) > 1e-12))
    return ParametricPath(vertices[keep], tolerance_halfwidth)


def _flush_corner_offset(apex, bar_y: float, radius: float) -> float:
    """x-coordinate for a bar/diagonal corner whose rounding arc kisses x=0.

    The corner sits on the horizontal line y = bar_y, reached moving in -x,
    and exits towards ``apex``. Rounding pulls the path off the vertex, so
    the vertex is pushed to negative x until the arc's leftmost point lands
    exactly on x = 0.
    """
    from scipy.optimize import brentq

    apex = np.asarray(apex, dtype=float)
    u = np.array([-1.0, 0.0])

    def leftmost(w):
        corner = np.array([w, bar_y])
        v = apex - corner
        v = v / math.hypot(v[0], v[1])
        center, _, _, _ = _corner_geometry(corner, u, v, radius)
        return center[0] - radius

    return brentq(leftmost, -6.0 * radius, 0.0, xtol=1e-16, rtol=8.9e-16)


def sigma_path(sharp: bool, chord_tolerance: float = DEFAULT_CHORD_TOL,
               tolerance_halfwidth: float = DEFAULT_TOLERANCE) -> ParametricPath:
    """Canonical sigma test contour, 0.10 m wide and 0.20 m high.

    Bottom bar, diagonal to the mid-height apex on the right edge,
    diagonal back, top bar. The apex is always rounded at 10 mm. The two
    left corners are sharp when ``sharp`` is True, else rounded at 0.5 mm
    with their vertices nudged outward so the axis-aligned bounding box
    stays exactly 0.10 x 0.20 m.
    """
    width, height = 0.10, 0.20
    apex = (width, 0.5 * height)
    r_mid = 0.01
    if sharp:
        x_left, r_corner = 0.0, 0.0
    else:
        r_corner = 5e-4
        x_left = _flush_corner_offset(apex, 0.0, r_corner)
    waypoints = [(width, 0.0), (x_left, 0.0), apex, (x_left, height), (width, height)]
    radii = [r_corner, r_mid, r_corner]
    return build_path(waypoints, radii, chord_tolerance, tolerance_halfwidth)


# ----------------------------------------------------------------------
# CSV interchange

def path_to_csv(path: ParametricPath, file) -> None:
    """Write vertices as ``s,x,y`` rows with a one-line header."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "w") if own else file
    try:
        fh.write("s,x,y\n")
        for s, (x, y) in zip(path.cum, path.vertices):
            fh.write(f"{s:.17g},{x:.17g},{y:.17g}\n")
    finally:
        if own:
            fh.close()


def path_from_csv(file, tolerance_halfwidth: float = DEFAULT_TOLERANCE) -> ParametricPath:
    """Read a path written by :func:`path_to_csv`.

    The s column is validated against the recomputed cumulative arc
    length to catch edited or truncated files.
    """
    own = isinstance(file, (str, bytes))
    fh = open(file, "r") if own else file
    try:
        header = fh.readline().strip()
        if header.replace(" ", "") != "s,x,y":
            raise ValueError(f"expected 's,x,y' header, got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    finally:
        if own:
            fh.close()
    if data.shape[1] != 3:
        raise ValueError("path CSV must have three columns: s,x,y")
    path = ParametricPath(data[:, 1:], tolerance_halfwidth)
    scale = max(1.0, path.length)
    if np.max(np.abs(data[:, 0] - path.cum)) > 1e-9 * scale:
        raise ValueError("s column is inconsistent with the vertex spacing")
    return path
