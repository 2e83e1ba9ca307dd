"""Reference paths, local polynomial windows and obstacle parabolas.

A path is built from straights, circular arcs and cubic Bezier corner
turns, then resampled into a dense arc-length polyline.  Planner-facing
pieces are the quintic window fit (with its curvature-derived speed bound)
and the second-order multinomial obstacle constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81
SPACING = 0.25  # nominal polyline spacing, m
BEZIER_LEG = 36.0  # corner leg length, m
BEZIER_CTRL = 15.0  # control-point distance along entry/exit tangents, m
MIN_WINDOW = 10.0  # shortest usable fit window, m
PROJECT_RANGE = 50.0  # beyond this the vehicle counts as lost, m


class TrackError(Exception):
    pass


@dataclass
class RefPath:
    """Dense arc-length parametrized polyline."""

    s: np.ndarray
    xy: np.ndarray  # shape (n, 2)
    closed: bool = False

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def point_at(self, s: float) -> np.ndarray:
        return np.array([np.interp(s, self.s, self.xy[:, 0]),
                         np.interp(s, self.s, self.xy[:, 1])])

    def tangent_at(self, s: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.s, s) - 1, 0, len(self.s) - 2))
        d = self.xy[i + 1] - self.xy[i]
        return d / np.linalg.norm(d)

    def normal_at(self, s: float) -> np.ndarray:
        t = self.tangent_at(s)
        return np.array([-t[1], t[0]])  # left of travel


def _straight(pos, heading, length, ds):
    n = max(int(math.ceil(length / ds)), 2)
    t = np.linspace(0.0, length, n + 1)[1:]
    d = np.array([math.cos(heading), math.sin(heading)])
    return pos + t[:, None] * d, heading


def _arc(pos, heading, radius, angle_deg, ds):
    ang = math.radians(angle_deg)
    side = 1.0 if ang >= 0 else -1.0
    center = pos + radius * side * np.array([-math.sin(heading), math.cos(heading)])
    n = max(int(math.ceil(abs(ang) * radius / ds)), 8)
    phi0 = math.atan2(pos[1] - center[1], pos[0] - center[0])
    phi = phi0 + np.linspace(0.0, ang, n + 1)[1:]
    pts = center + radius * np.column_stack([np.cos(phi), np.sin(phi)])
    return pts, heading + ang


def _bezier(pos, heading, angle_deg, ds, leg=BEZIER_LEG, ctrl=BEZIER_CTRL):
    ang = math.radians(angle_deg)
    t0 = np.array([math.cos(heading), math.sin(heading)])
    t1 = np.array([math.cos(heading + ang), math.sin(heading + ang)])
    p0 = pos
    p3 = pos + leg * (t0 + t1)
    p1 = p0 + ctrl * t0
    p2 = p3 - ctrl * t1
    # chord-length heuristic keeps sampling near ds
    n = max(int(np.linalg.norm(p3 - p0) * 2.0 / ds), 64)
    t = np.linspace(0.0, 1.0, n + 1)[1:, None]
    pts = ((1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * p1
           + 3 * (1 - t) * t ** 2 * p2 + t ** 3 * p3)
    return pts, heading + ang


def build_track(segments, start=(0.0, 0.0), heading: float = 0.0,
                spacing: float = SPACING,
                junction_blend: float = 8.0) -> RefPath:
    """Assemble a G1 path from typed segments and resample it uniformly.

    Segments are dicts: {type: straight, length}, {type: arc, radius, angle}
    (degrees, positive = left) or {type: bezier, angle}.

    Curvature steps at segment joints are eased by running a boxcar of
    half-width junction_blend over the heading profile and reintegrating.
    The moving average is exact on straights and arc interiors (heading is
    linear in arc length there), so it only rounds the joints; without it a
    quintic window spanning a joint cannot meet its residual budget.
    """
    pos = np.asarray(start, dtype=float)
    ds = spacing / 4.0
    pts = [pos.copy()]
    for seg in segments:
        kind = seg["type"]
        if kind == "straight":
            new, heading = _straight(pos, heading, float(seg["length"]), ds)
        elif kind == "arc":
            new, heading = _arc(pos, heading, float(seg["radius"]),
                                float(seg["angle"]), ds)
        elif kind == "bezier":
            new, heading = _bezier(pos, heading, float(seg["angle"]), ds)
        else:
            raise TrackError(f"unknown segment type {kind!r}")
        pts.append(new)
        pos = new[-1]
    raw = np.vstack(pts)

    seglen = np.linalg.norm(np.diff(raw, axis=0), axis=1)
    raw = raw[np.concatenate([[True], seglen > 1e-9])]
    s_raw = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(raw, axis=0), axis=1))])

    fine_s = np.arange(0.0, s_raw[-1], ds)
    fine = np.column_stack([np.interp(fine_s, s_raw, raw[:, 0]),
                            np.interp(fine_s, s_raw, raw[:, 1])])

    if junction_blend > 0.0:
        d = np.diff(fine, axis=0)
        step = np.linalg.norm(d, axis=1)
        theta = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
        k = max(int(round(junction_blend / ds)), 1)
        kernel = np.ones(2 * k + 1) / (2 * k + 1)
        padded = np.concatenate([np.full(k, theta[0]), theta, np.full(k, theta[-1])])
        theta = np.convolve(padded, kernel, mode="valid")
        fine = np.vstack([fine[0], fine[0] + np.cumsum(
            np.column_stack([np.cos(theta), np.sin(theta)]) * step[:, None], axis=0)])

    s_fine = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(fine, axis=0), axis=1))])
    total = s_fine[-1]
    n = max(int(round(total / spacing)), 2)
    s = np.linspace(0.0, total, n + 1)
    xy = np.column_stack([np.interp(s, s_fine, fine[:, 0]),
                          np.interp(s, s_fine, fine[:, 1])])
    return RefPath(s=s, xy=xy)


REFERENCE_SEGMENTS = (
    {"type": "straight", "length": 60.0},
    {"type": "arc", "radius": 20.0, "angle": 180.0},
    {"type": "straight", "length": 200.0},
    {"type": "bezier", "angle": 135.0},
    {"type": "straight", "length": 100.0},
    {"type": "arc", "radius": 10.0, "angle": 180.0},
    {"type": "bezier", "angle": -135.0},
)


def build_reference_track() -> RefPath:
    """The benchmark course: two straights-and-half-circles plus two 135 deg turns."""
    return build_track(REFERENCE_SEGMENTS)


def project(path: RefPath, x: float, y: float) -> float:
    """Arc length of the closest polyline point, quadratically refined.

    Ties between equally close vertices resolve toward larger s so the
    projection keeps moving forward through hairpins.
    """
    d2 = (path.xy[:, 0] - x) ** 2 + (path.xy[:, 1] - y) ** 2
    rev = len(d2) - 1 - int(np.argmin(d2[::-1]))  # last minimum -> larger s
    if d2[rev] > PROJECT_RANGE ** 2:
        raise TrackError(f"query ({x:.1f}, {y:.1f}) is {math.sqrt(d2[rev]):.1f} m "
                         "from the path")
    i = rev
    if 0 < i < len(d2) - 1:
        a, b, c = d2[i - 1], d2[i], d2[i + 1]
        denom = a - 2 * b + c
        if denom > 1e-12:
            shift = 0.5 * (a - c) / denom
            shift = float(np.clip(shift, -1.0, 1.0))
            ds = path.s[1] - path.s[0]
            return float(path.s[i] + shift * ds)
    return float(path.s[i])


def lateral_offset(path: RefPath, x: float, y: float) -> tuple[float, float]:
    """(signed offset, s at foot) against the polyline segments; left positive."""
    p = np.array([x, y])
    a = path.xy[:-1]
    d = path.xy[1:] - a
    l2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / np.maximum(l2, 1e-12), 0.0, 1.0)
    feet = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", p - feet, p - feet)
    i = int(np.argmin(dist2))
    tang = d[i] / math.sqrt(max(l2[i], 1e-12))
    off = p - feet[i]
    signed = float(tang[0] * off[1] - tang[1] * off[0])
    s_foot = float(path.s[i] + t[i] * (path.s[i + 1] - path.s[i]))
    return signed, s_foot


def max_polyline_curvature(path: RefPath, s_lo: float, s_hi: float,
                           stride_m: float = 2.0) -> float:
    """Discrete curvature bound over [s_lo, s_hi] from circumradius triplets."""
    ds = path.s[1] - path.s[0]
    k = max(int(round(stride_m / ds)), 1)
    i0 = int(np.clip(np.searchsorted(path.s, s_lo) - k, 0, len(path.s) - 1))
    i1 = int(np.clip(np.searchsorted(path.s, s_hi) + k, 0, len(path.s) - 1))
    idx = np.arange(i0, i1 + 1)
    if len(idx) < 2 * k + 1:
        return 0.0
    p0 = path.xy[idx[:-2 * k]]
    p1 = path.xy[idx[k:-k]]
    p2 = path.xy[idx[2 * k:]]
    a = np.linalg.norm(p1 - p0, axis=1)
    b = np.linalg.norm(p2 - p1, axis=1)
    c = np.linalg.norm(p2 - p0, axis=1)
    cross = np.abs((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                   - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    denom = a * b * c
    kappa = np.where(denom > 1e-9, 2.0 * cross / np.maximum(denom, 1e-9), 0.0)
    return float(np.max(kappa)) if len(kappa) else 0.0


@dataclass
class PathWindow:
    """Quintic local fit of the path over [s0, s0 + length]."""

    s0: float
    length: float
    p_x: np.ndarray  # ascending coefficients in (s - s0)
    p_y: np.ndarray
    kappa_max: float
    v_max: float
    rms_residual: float

    def ref_point(self, s_rel):
        return (np.polynomial.polynomial.polyval(s_rel, self.p_x),
                np.polynomial.polynomial.polyval(s_rel, self.p_y))

    def ref_derivative(self, s_rel):
        dx = np.polynomial.polynomial.polyder(self.p_x)
        dy = np.polynomial.polynomial.polyder(self.p_y)
        return (np.polynomial.polynomial.polyval(s_rel, dx),
                np.polynomial.polynomial.polyval(s_rel, dy))


def fit_window(path: RefPath, s0: float, length: float, *, v_x0: float,
               ax_max, mu: float, horizon: float) -> PathWindow:
    """Least-squares quintic window plus the curvature speed bound.

    ax_max is a callable giving the peak feasible forward acceleration at
    the current speed; the returned v_max is the smaller of the
    reachable-speed branch and sqrt(mu*g/kappa_max).
    """
    length = max(float(length), MIN_WINDOW)
    s_hi = min(s0 + length, path.length)
    usable = s_hi - s0
    if usable < MIN_WINDOW:
        raise TrackError(f"only {usable:.1f} m of path beyond s0={s0:.1f}")
    length = usable

    mask = (path.s >= s0 - 1e-9) & (path.s <= s_hi + 1e-9)
    s_rel = path.s[mask] - s0
    pts = path.xy[mask]

    z = s_rel / length
    vand = np.vander(z, 6, increasing=True)
    cx, *_ = np.linalg.lstsq(vand, pts[:, 0], rcond=None)
    cy, *_ = np.linalg.lstsq(vand, pts[:, 1], rcond=None)
    scale = length ** np.arange(6)
    p_x = cx / scale
    p_y = cy / scale

    fit_x = vand @ cx
    fit_y = vand @ cy
    rms = float(np.sqrt(np.mean((fit_x - pts[:, 0]) ** 2 + (fit_y - pts[:, 1]) ** 2)))

    grid = np.linspace(0.0, length, 100)
    pp = np.polynomial.polynomial
    dx1 = pp.polyval(grid, pp.polyder(p_x))
    dy1 = pp.polyval(grid, pp.polyder(p_y))
    dx2 = pp.polyval(grid, pp.polyder(p_x, 2))
    dy2 = pp.polyval(grid, pp.polyder(p_y, 2))
    denom = (dx1 ** 2 + dy1 ** 2) ** 1.5
    kappa = np.abs(dx1 * dy2 - dy1 * dx2) / np.maximum(denom, 1e-12)
    kappa_max = float(np.max(kappa))

    v_reach = v_x0 + float(ax_max(v_x0)) * horizon
    v_curve = math.sqrt(mu * GRAVITY / kappa_max) if kappa_max > 1e-9 else math.inf
    v_max = min(v_reach, v_curve)

    return PathWindow(s0=float(s0), length=float(length), p_x=p_x, p_y=p_y,
                      kappa_max=kappa_max, v_max=float(v_max), rms_residual=rms)


@dataclass
class Obstacle:
    """Static disc obstacle placed relative to the path."""

    center: np.ndarray
    radius: float
    s_path: float
    lateral: float


@dataclass
class ObstacleParabola:
    """Constraint p(X, Y) <= 0 keeping the CoM on the pass side.

    Coefficients are [1, X, Y, X^2, X*Y, Y^2] of the global multinomial;
    the open region {p > 0} contains the obstacle disc.
    """

    center: np.ndarray
    radius: float
    margin: float
    pass_side_normal: np.ndarray
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @property
    def apex_height(self) -> float:
        return self.radius + self.margin

    def value(self, x, y):
        c = self.coeffs
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y

    def gradient(self, x, y):
        c = self.coeffs
        return np.array([c[1] + 2 * c[3] * x + c[4] * y,
                         c[2] + c[4] * x + 2 * c[5] * y])


def build_parabola(center, radius: float, margin: float,
                   pass_side_normal) -> ObstacleParabola:
    """Parabola with vertex and roots at radius + margin from the center.

    In the local frame (u perpendicular to the pass normal, w along it) the
    surface is p = h*(1 - (u/a)^2) - w with h = a = radius + margin, so the
    feasible side w >= h(1 - (u/a)^2) is exactly the pass side.
    """
    if radius <= 0 or margin <= 0:
        raise TrackError("radius and margin must be positive")
    n = np.asarray(pass_side_normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise TrackError("pass_side_normal must be unit length")
    u = np.array([n[1], -n[0]])
    h = radius + margin
    cx, cy = float(center[0]), float(center[1])

    # p = h - (1/h)*(u.(P-c))^2 - n.(P-c), expanded in global coordinates
    q = -1.0 / h
    a_xx = q * u[0] * u[0]
    a_xy = 2.0 * q * u[0] * u[1]
    a_yy = q * u[1] * u[1]
    lin_x = -n[0] - 2.0 * a_xx * cx - a_xy * cy
    lin_y = -n[1] - a_xy * cx - 2.0 * a_yy * cy
    const = (h + a_xx * cx * cx + a_xy * cx * cy + a_yy * cy * cy
             + n[0] * cx + n[1] * cy)
    coeffs = np.array([const, lin_x, lin_y, a_xx, a_xy, a_yy])
    return ObstacleParabola(center=np.array([cx, cy]), radius=radius,
                            margin=margin, pass_side_normal=n, coeffs=coeffs)


def relevant_obstacles(obstacles, s0: float, v_x0: float,
                       horizon: float) -> list:
    """Obstacles with collision risk inside the planning horizon."""
    lo = s0 - 5.0
    hi = s0 + v_x0 * horizon + 20.0
    return [o for o in obstacles
            if lo <= o.s_path <= hi and abs(o.lateral) < 6.0]
