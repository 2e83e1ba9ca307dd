"""Feasible-acceleration envelope: sampling the plant and fitting constraints.

The offline campaign integrates the 9-DOF plant from randomized speed and
actuator draws for a short window, records window-averaged accelerations in
the initial-heading frame, and fits a convex description: an ellipse, a
velocity-dependent forward/backward box, a symmetric pair of half-planes
cutting the traction corners, and a linear yaw-lateral coupling.  The
fitted region is shrunk until it sits inside every sampled hull.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from . import _dyncore as core
from .config import read_kv, write_kv
from .dynamics import VehicleParams

SAMPLE_WINDOW = 0.1  # s, long enough to wash out wheel transients
SAMPLE_DT = 0.001
HULL_DILATION = 1.05
MIN_HULL_AREA = 1.0  # m^2/s^4

# below ~10 m/s the fixed sampling window no longer reflects force capacity
# (the velocity direction turns through a large angle within the window), so
# the identification grid starts there
DEFAULT_SPEED_GRID = (10.0, 14.0, 18.0, 22.0, 26.0, 30.0)
DEFAULT_GROUP_SIZE = 5000


class EnvelopeError(Exception):
    pass


@dataclass
class AccelSample:
    """One window-averaged acceleration measurement."""

    vx0: float
    vy0: float
    ax: float
    ay: float
    apsi: float


@dataclass
class EnvelopeFit:
    """Convex acceleration-feasibility description used by the planner."""

    alpha: float  # ellipse semi-axis, forward (m/s^2)
    beta: float  # ellipse semi-axis, lateral (m/s^2)
    a_mat: np.ndarray  # (2, 2) half-plane normals in (a_x, a_y)
    b_vec: np.ndarray  # (2,) half-plane offsets
    ax_min_poly: np.ndarray  # quadratic in vx0, ascending coefficients
    ax_max_poly: np.ndarray  # linear in vx0, ascending coefficients
    gamma: float  # yaw acceleration per lateral acceleration (rad/m)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise EnvelopeError("ellipse semi-axes must be positive")
        v = np.linspace(0.0, 50.0, 51)
        if np.any(self.ax_min(v) >= 0.0):
            raise EnvelopeError("ax_min polynomial must stay negative on [0, 50]")
        if np.any(self.ax_max(v) <= 0.0):
            raise EnvelopeError("ax_max polynomial must stay positive on [0, 50]")

    def ax_min(self, vx0):
        return np.polynomial.polynomial.polyval(vx0, self.ax_min_poly)

    def ax_max(self, vx0):
        return np.polynomial.polynomial.polyval(vx0, self.ax_max_poly)

    def boundary_radius(self, angles: np.ndarray, vx0: float) -> np.ndarray:
        """Distance from the origin to the region boundary along each ray."""
        c, s = np.cos(angles), np.sin(angles)
        r = 1.0 / np.sqrt((c / self.alpha) ** 2 + (s / self.beta) ** 2)
        ax_lo = float(self.ax_min(vx0))
        ax_hi = float(self.ax_max(vx0))
        with np.errstate(divide="ignore"):
            r = np.minimum(r, np.where(c > 1e-12, ax_hi / np.where(c > 0, c, 1.0), np.inf))
            r = np.minimum(r, np.where(c < -1e-12, ax_lo / np.where(c < 0, c, -1.0), np.inf))
            for row, off in zip(self.a_mat, self.b_vec):
                proj = row[0] * c + row[1] * s
                r = np.minimum(r, np.where(proj > 1e-12, off / np.where(proj > 0, proj, 1.0), np.inf))
        return r


def check_membership(fit: EnvelopeFit, v_x0: float, u, tol: float = 1e-9) -> bool:
    """True when (u_x, u_y, u_psi) satisfies every envelope constraint."""
    u_x, u_y, u_psi = float(u[0]), float(u[1]), float(u[2])
    if (u_x / fit.alpha) ** 2 + (u_y / fit.beta) ** 2 > 1.0 + tol:
        return False
    if not fit.ax_min(v_x0) - tol <= u_x <= fit.ax_max(v_x0) + tol:
        return False
    if np.any(fit.a_mat @ np.array([u_x, u_y]) > fit.b_vec + tol):
        return False
    return abs(u_psi - fit.gamma * u_y) <= 1e-9 + tol


def sample_envelope(params: VehicleParams, v_x0: float, n_samples: int,
                    seed: int) -> tuple[list[AccelSample], int]:
    """Random-sample feasible accelerations at one longitudinal speed.

    Each sample draws a lateral speed in the +-0.2*v_x0 band and constant
    actuator commands within their bounds, trims the plant (wheels spun up,
    yaw rate matched so the rear axle starts slip-free), integrates for the
    sampling window and records mean ground-frame accelerations.  Per-sample
    seeds are derived from the root seed, so the result is order-independent
    and bit-reproducible.

    Returns (samples, n_rejected); rejected rows diverged (wheel spin-up
    beyond five times the initial speed) and are excluded.
    """
    if v_x0 <= 0.0:
        raise EnvelopeError("v_x0 must be positive")
    if n_samples < 1000:
        raise EnvelopeError("need at least 1000 samples per speed group")

    children = np.random.SeedSequence(seed).spawn(n_samples)
    draws = np.empty((n_samples, 6))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        draws[i, 0] = rng.uniform(-0.2 * v_x0, 0.2 * v_x0)
        draws[i, 1] = rng.uniform(-params.delta_max, params.delta_max)
        draws[i, 2:6] = rng.uniform(params.torque_min, params.torque_max, 4)

    vy0 = draws[:, 0]
    delta = draws[:, 1]

    xs = np.zeros((n_samples, core.NSTATE))
    xs[:, core.SVX] = v_x0
    xs[:, core.SVY] = vy0
    xs[:, core.SDPSI] = vy0 / params.l_r  # rear axle starts slip-free
    xs[:, core.SDELTA] = delta

    x_i = np.array([params.l_f, params.l_f, -params.l_r, -params.l_r])
    y_i = np.array([params.l_w, -params.l_w, params.l_w, -params.l_w])
    vc_x = v_x0 - xs[:, core.SDPSI, None] * y_i[None, :]
    vc_y = vy0[:, None] + xs[:, core.SDPSI, None] * x_i[None, :]
    steer = np.zeros((n_samples, 4))
    steer[:, :2] = delta[:, None]
    v_xw = vc_x * np.cos(steer) + vc_y * np.sin(steer)
    xs[:, core.SOMEGA:core.SOMEGA + 4] = v_xw / params.r_w

    us = np.empty((n_samples, core.NINPUT))
    us[:, :4] = draws[:, 2:6]
    us[:, 4] = delta

    caps = 5.0 * np.max(np.abs(xs[:, core.SOMEGA:core.SOMEGA + 4]), axis=1)
    n_steps = int(round(SAMPLE_WINDOW / SAMPLE_DT))
    finals, ok = core.integrate_batch(xs, us, params.packed, SAMPLE_DT,
                                      n_steps, caps)

    psi = finals[:, core.SPSI]
    vx_t = finals[:, core.SVX]
    vy_t = finals[:, core.SVY]
    xdot_t = vx_t * np.cos(psi) - vy_t * np.sin(psi)
    ydot_t = vx_t * np.sin(psi) + vy_t * np.cos(psi)
    a_x = (xdot_t - v_x0) / SAMPLE_WINDOW
    a_y = (ydot_t - vy0) / SAMPLE_WINDOW
    a_psi = (finals[:, core.SDPSI] - xs[:, core.SDPSI]) / SAMPLE_WINDOW

    samples = [AccelSample(vx0=v_x0, vy0=float(vy0[i]), ax=float(a_x[i]),
                           ay=float(a_y[i]), apsi=float(a_psi[i]))
               for i in range(n_samples) if ok[i]]
    return samples, int(n_samples - np.count_nonzero(ok))


def _group(samples) -> dict[float, np.ndarray]:
    groups: dict[float, list] = {}
    for s in samples:
        groups.setdefault(s.vx0, []).append((s.ax, s.ay, s.apsi))
    return {v: np.asarray(rows) for v, rows in sorted(groups.items())}


def _hull_of(points: np.ndarray) -> ConvexHull:
    hull = ConvexHull(points)
    if hull.volume < MIN_HULL_AREA:  # 2-D: volume is the area
        raise EnvelopeError(f"degenerate hull, area {hull.volume:.3g} < {MIN_HULL_AREA}")
    return hull


def _inside_dilated_hull(hull: ConvexHull, pts: np.ndarray,
                         dilation: float = HULL_DILATION) -> np.ndarray:
    centroid = hull.points[hull.vertices].mean(axis=0)
    shifted = (pts - centroid) / dilation + centroid
    a = hull.equations[:, :2]
    b = hull.equations[:, 2]
    return np.all(shifted @ a.T + b <= 1e-9, axis=1)


def fit_envelope(samples) -> EnvelopeFit:
    """Fit the convex constraint family to grouped acceleration samples.

    Needs at least three distinct speed groups.  The returned region is an
    inner approximation: it is uniformly shrunk until its 1-degree boundary
    polytope lies inside every group's hull dilated by 5 percent.
    """
    groups = _group(samples)
    if len(groups) < 3:
        raise EnvelopeError(f"need >= 3 speed groups, got {len(groups)}")

    hulls: dict[float, ConvexHull] = {}
    ax_lo, ax_hi = {}, {}
    pooled_vertices = []
    for v, rows in groups.items():
        hull = _hull_of(rows[:, :2])
        hulls[v] = hull
        verts = hull.points[hull.vertices]
        ax_lo[v] = float(verts[:, 0].min())
        ax_hi[v] = float(verts[:, 0].max())
        pooled_vertices.append(verts)
    verts = np.vstack(pooled_vertices)

    speeds = np.array(sorted(groups))
    pp = np.polynomial.polynomial
    ax_min_poly = pp.polyfit(speeds, [ax_lo[v] for v in speeds], 2)
    ax_max_poly = pp.polyfit(speeds, [ax_hi[v] for v in speeds], 1)
    # bias the box inside every group's extreme so the hull-noise in the
    # per-group extremes does not force a large global shrink later
    ax_min_poly[0] += max(0.0, float(np.max([ax_lo[v] - pp.polyval(v, ax_min_poly)
                                             for v in speeds])))
    ax_max_poly[0] -= max(0.0, float(np.max([pp.polyval(v, ax_max_poly) - ax_hi[v]
                                             for v in speeds])))

    # ellipse from the braking-side arc, where neither the drive-torque box
    # nor the corner cuts shape the boundary
    arc = verts[verts[:, 0] <= 0.5]
    if len(arc) < 6:
        raise EnvelopeError("too few hull vertices on the braking side")
    design = np.column_stack([arc[:, 0] ** 2, arc[:, 1] ** 2])
    coef, *_ = np.linalg.lstsq(design, np.ones(len(arc)), rcond=None)
    if np.any(coef <= 0):
        raise EnvelopeError("ellipse fit did not produce positive axes")
    alpha = 1.0 / math.sqrt(coef[0])
    beta = 1.0 / math.sqrt(coef[1])
    # the lateral semi-axis must hold at every speed; cap it near the
    # narrowest group so the containment shrink stays close to unity
    lat_caps = [float(np.abs(hulls[v].points[hulls[v].vertices][:, 1]).max())
                for v in speeds]
    beta = min(beta, 1.02 * min(lat_caps))

    # symmetric corner cuts: tightest per-group support line along the
    # normalized traction-corner direction; a support line clips only the
    # corner beyond the samples, never the sampled cloud itself
    ax_top = float(np.mean([ax_hi[v] for v in speeds]))
    k = beta / ax_top
    offset = min(float(np.max(k * hulls[v].points[hulls[v].vertices][:, 0]
                              + np.abs(hulls[v].points[hulls[v].vertices][:, 1])))
                 for v in speeds)
    a_mat = np.array([[k, 1.0], [k, -1.0]])
    b_vec = np.array([offset, offset])

    rows = np.vstack([groups[v] for v in speeds])
    denom = float(np.sum(rows[:, 1] ** 2))
    gamma = float(np.sum(rows[:, 2] * rows[:, 1]) / denom) if denom > 0 else 0.0

    fit = EnvelopeFit(alpha=alpha, beta=beta, a_mat=a_mat, b_vec=b_vec,
                      ax_min_poly=ax_min_poly, ax_max_poly=ax_max_poly,
                      gamma=gamma)

    angles = np.radians(np.arange(360.0))

    def contained(candidate: EnvelopeFit) -> bool:
        for v in speeds:
            radius = candidate.boundary_radius(angles, v)
            pts = np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
            if not np.all(_inside_dilated_hull(hulls[v], pts)):
                return False
        return True

    def scaled(t: float) -> EnvelopeFit:
        return EnvelopeFit(alpha=t * fit.alpha, beta=t * fit.beta,
                           a_mat=fit.a_mat, b_vec=t * fit.b_vec,
                           ax_min_poly=t * fit.ax_min_poly,
                           ax_max_poly=t * fit.ax_max_poly, gamma=fit.gamma)

    if not contained(fit):
        lo, hi = 0.5, 1.0
        if not contained(scaled(lo)):
            raise EnvelopeError("fit cannot be shrunk into the sampled hulls")
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            if contained(scaled(mid)):
                lo = mid
            else:
                hi = mid
        fit = scaled(lo)
    return fit


def gamma_residual_ratio(samples, gamma: float) -> float:
    """RMS of (a_psi - gamma*a_y) relative to RMS of a_psi."""
    rows = np.array([(s.ay, s.apsi) for s in samples])
    rms_res = np.sqrt(np.mean((rows[:, 1] - gamma * rows[:, 0]) ** 2))
    rms_apsi = np.sqrt(np.mean(rows[:, 1] ** 2))
    return float(rms_res / rms_apsi)


def save_samples(path, samples):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["vx0", "vy0", "ax", "ay", "apsi"])
        for s in samples:
            w.writerow([repr(s.vx0), repr(s.vy0), repr(s.ax), repr(s.ay), repr(s.apsi)])


def load_samples(path) -> list[AccelSample]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(AccelSample(vx0=float(row["vx0"]), vy0=float(row["vy0"]),
                                   ax=float(row["ax"]), ay=float(row["ay"]),
                                   apsi=float(row["apsi"])))
    return out


def save_envelope(path, fit: EnvelopeFit, header: str = "fitted acceleration envelope"):
    items = {
        "alpha": repr(fit.alpha),
        "beta": repr(fit.beta),
        "a11": repr(float(fit.a_mat[0, 0])), "a12": repr(float(fit.a_mat[0, 1])),
        "a21": repr(float(fit.a_mat[1, 0])), "a22": repr(float(fit.a_mat[1, 1])),
        "b1": repr(float(fit.b_vec[0])), "b2": repr(float(fit.b_vec[1])),
        "ax_min_poly": " ".join(repr(float(c)) for c in fit.ax_min_poly),
        "ax_max_poly": " ".join(repr(float(c)) for c in fit.ax_max_poly),
        "gamma": repr(fit.gamma),
    }
    write_kv(path, items, header=header)


def load_envelope(path) -> EnvelopeFit:
    kv = read_kv(path)
    return EnvelopeFit(
        alpha=float(kv["alpha"]), beta=float(kv["beta"]),
        a_mat=np.array([[float(kv["a11"]), float(kv["a12"])],
                        [float(kv["a21"]), float(kv["a22"])]]),
        b_vec=np.array([float(kv["b1"]), float(kv["b2"])]),
        ax_min_poly=np.array([float(t) for t in kv["ax_min_poly"].split()]),
        ax_max_poly=np.array([float(t) for t in kv["ax_max_poly"].split()]),
        gamma=float(kv["gamma"]),
    )
