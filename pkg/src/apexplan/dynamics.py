"""Ground-truth 9-DOF vehicle plant.

Planar motion plus roll, pitch and four wheel spin states, with load
transfer through a linear corner suspension, combined-slip tires capped at
the friction circle, and a fixed-step RK4 integrator.  Wheel order is
FL, FR, RL, RR everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _dyncore as core
from ._dyncore import GRAVITY, NINPUT, NSTATE

EPS_V = 0.5  # low-speed regularization floor for slip denominators (m/s)
DT_MAX = 0.002  # wheel dynamics need millisecond stepping

WHEEL_NAMES = ("fl", "fr", "rl", "rr")


@dataclass(frozen=True)
class AxleTire:
    """Reduced magic-formula coefficients for one axle (x = drive, y = corner)."""

    bx: float
    cx: float
    dx: float
    ex: float
    by: float
    cy: float
    dy: float
    ey: float

    def __post_init__(self):
        for peak in (self.dx, self.dy):
            if not 0.5 < peak < 2.0:
                raise ValueError(f"tire peak factor {peak} outside (0.5, 2.0)")


@dataclass(frozen=True)
class TireParams:
    front: AxleTire
    rear: AxleTire


@dataclass(frozen=True)
class VehicleParams:
    """Chassis constants; see config/vehicle.cfg for the canonical set."""

    m_total: float  # kg
    i_x: float  # roll inertia, kg m^2
    i_y: float  # pitch inertia
    i_z: float  # yaw inertia
    i_r: float  # wheel spin inertia
    l_f: float  # CoM to front axle, m
    l_r: float  # CoM to rear axle, m
    l_w: float  # half-track, m
    r_w: float  # wheel effective radius, m
    k_s: float  # corner suspension stiffness, N/m
    d_s: float  # corner suspension damping, N s/m
    h_com: float  # CoM height used as the roll/pitch moment arm, m
    mu: float  # tire-road friction coefficient
    drag_coeff: float  # F_aero = drag_coeff * V_x^2, kg/m
    delta_max: float  # steering angle bound, rad
    delta_rate_max: float  # steering rate bound, rad/s
    torque_min: float  # per-wheel brake torque bound, N m (negative)
    torque_max: float  # per-wheel drive torque bound, N m
    tire: TireParams
    eps_v: float = EPS_V
    delta_tau: float = 0.05  # steering servo time constant, s

    def __post_init__(self):
        positive = {
            "m_total": self.m_total, "i_x": self.i_x, "i_y": self.i_y,
            "i_z": self.i_z, "i_r": self.i_r, "l_f": self.l_f, "l_r": self.l_r,
            "l_w": self.l_w, "r_w": self.r_w, "k_s": self.k_s, "d_s": self.d_s,
            "h_com": self.h_com, "delta_rate_max": self.delta_rate_max,
            "delta_max": self.delta_max,
        }
        for name, value in positive.items():
            if value <= 0.0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if not 0.0 < self.mu <= 1.5:
            raise ValueError(f"mu must lie in (0, 1.5], got {self.mu}")
        if self.torque_min >= 0.0 or self.torque_max <= 0.0:
            raise ValueError("torque bounds must bracket zero")

    @cached_property
    def packed(self) -> np.ndarray:
        p = np.zeros(core.NPAR)
        p[core.PM] = self.m_total
        p[core.PIX] = self.i_x
        p[core.PIY] = self.i_y
        p[core.PIZ] = self.i_z
        p[core.PIR] = self.i_r
        p[core.PLF] = self.l_f
        p[core.PLR] = self.l_r
        p[core.PLW] = self.l_w
        p[core.PRW] = self.r_w
        p[core.PKS] = self.k_s
        p[core.PDS] = self.d_s
        p[core.PZ] = self.h_com
        p[core.PMU] = self.mu
        p[core.PDRAG] = self.drag_coeff
        p[core.PDELTA_MAX] = self.delta_max
        p[core.PDELTA_RATE] = self.delta_rate_max
        p[core.PTMIN] = self.torque_min
        p[core.PTMAX] = self.torque_max
        p[core.PEPSV] = self.eps_v
        p[core.PDELTA_TAU] = self.delta_tau
        for off, axle in ((core.PTIRE_F, self.tire.front), (core.PTIRE_R, self.tire.rear)):
            p[off:off + 8] = (axle.bx, axle.cx, axle.dx, axle.ex,
                              axle.by, axle.cy, axle.dy, axle.ey)
        p.setflags(write=False)
        return p

    @property
    def static_load_front(self) -> float:
        return self.m_total * GRAVITY * self.l_r / (2.0 * (self.l_f + self.l_r))

    @property
    def static_load_rear(self) -> float:
        return self.m_total * GRAVITY * self.l_f / (2.0 * (self.l_f + self.l_r))


@dataclass
class VehicleState:
    """Full plant state; angles in rad, speeds in m/s, wheel order FL FR RL RR."""

    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    theta: float = 0.0
    phi: float = 0.0
    v_x: float = 0.0
    v_y: float = 0.0
    psi_dot: float = 0.0
    theta_dot: float = 0.0
    phi_dot: float = 0.0
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))
    delta: float = 0.0

    def as_array(self) -> np.ndarray:
        a = np.empty(NSTATE)
        a[core.SX] = self.x
        a[core.SY] = self.y
        a[core.SPSI] = self.psi
        a[core.STHETA] = self.theta
        a[core.SPHI] = self.phi
        a[core.SVX] = self.v_x
        a[core.SVY] = self.v_y
        a[core.SDPSI] = self.psi_dot
        a[core.SDTHETA] = self.theta_dot
        a[core.SDPHI] = self.phi_dot
        a[core.SOMEGA:core.SOMEGA + 4] = self.omega
        a[core.SDELTA] = self.delta
        return a

    @classmethod
    def from_array(cls, a: np.ndarray) -> "VehicleState":
        return cls(
            x=float(a[core.SX]), y=float(a[core.SY]), psi=float(a[core.SPSI]),
            theta=float(a[core.STHETA]), phi=float(a[core.SPHI]),
            v_x=float(a[core.SVX]), v_y=float(a[core.SVY]),
            psi_dot=float(a[core.SDPSI]), theta_dot=float(a[core.SDTHETA]),
            phi_dot=float(a[core.SDPHI]),
            omega=np.array(a[core.SOMEGA:core.SOMEGA + 4]),
            delta=float(a[core.SDELTA]),
        )


@dataclass
class ControlInput:
    """Held actuator command: per-wheel torques plus a steering target."""

    torques: np.ndarray = field(default_factory=lambda: np.zeros(4))
    delta_cmd: float = 0.0

    def as_array(self) -> np.ndarray:
        a = np.empty(NINPUT)
        a[:4] = self.torques
        a[4] = self.delta_cmd
        return a

    def clipped(self, params: VehicleParams) -> "ControlInput":
        return ControlInput(
            torques=np.clip(self.torques, params.torque_min, params.torque_max),
            delta_cmd=float(np.clip(self.delta_cmd, -params.delta_max, params.delta_max)),
        )


@dataclass
class TireState:
    """Per-wheel diagnostics, all shape (4,) in FL FR RL RR order."""

    tau: np.ndarray
    alpha: np.ndarray
    f_xw: np.ndarray
    f_yw: np.ndarray
    f_x: np.ndarray
    f_y: np.ndarray
    f_z: np.ndarray
    v_xw: np.ndarray


def slip_ratio(r_w, omega, v_xw, eps_v: float = EPS_V):
    """Slip ratio with the drive/brake branch picked by sign of the mismatch.

    Denominators are floored at eps_v (sign preserved) so the expression is
    total; the result is clamped to [-1, 1].
    """
    rw_omega = np.asarray(r_w * omega, dtype=float)
    v = np.asarray(v_xw, dtype=float)
    den = np.where(rw_omega >= v, rw_omega, v)
    den = np.where(den >= 0.0, np.maximum(den, eps_v), np.minimum(den, -eps_v))
    tau = (rw_omega - v) / den
    out = np.clip(tau, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _reg_den(den, eps_v):
    den = np.asarray(den, dtype=float)
    return np.where(den >= 0.0, np.maximum(den, eps_v), np.minimum(den, -eps_v))


def slip_angles(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """Side-slip angle of each wheel; left wheels use V_x - l_w*psi_dot."""
    v_y, dpsi = state.v_y, state.psi_dot
    den_left = _reg_den(state.v_x - params.l_w * dpsi, params.eps_v)
    den_right = _reg_den(state.v_x + params.l_w * dpsi, params.eps_v)
    front_num = v_y + params.l_f * dpsi
    rear_num = v_y - params.l_r * dpsi
    return np.array([
        state.delta - front_num / den_left,
        state.delta - front_num / den_right,
        -rear_num / den_left,
        -rear_num / den_right,
    ])


def normal_loads(state: VehicleState, params: VehicleParams) -> np.ndarray:
    """Per-wheel normal force from static share plus suspension deflection.

    Corner travel follows the small-angle map dz = -l_f*phi + l_w*theta on
    the front-left and its sign mirrors elsewhere; negative loads clamp to
    zero (lift-off).
    """
    sgn_x = np.array([-params.l_f, -params.l_f, params.l_r, params.l_r])
    sgn_y = np.array([params.l_w, -params.l_w, params.l_w, -params.l_w])
    dz = sgn_x * state.phi + sgn_y * state.theta
    dz_dot = sgn_x * state.phi_dot + sgn_y * state.theta_dot
    static = np.array([params.static_load_front, params.static_load_front,
                       params.static_load_rear, params.static_load_rear])
    return np.maximum(static - params.k_s * dz - params.d_s * dz_dot, 0.0)


def _magic(s, b, c, d, e):
    bs = b * np.asarray(s, dtype=float)
    return d * np.sin(c * np.arctan(bs - e * (bs - np.arctan(bs))))


def tire_forces(tau, alpha, f_z, mu: float, axle: AxleTire):
    """Wheel-frame (F_xw, F_yw); the combined vector is capped at mu*F_z."""
    f_z = np.asarray(f_z, dtype=float)
    f_max = mu * f_z
    f_xw = f_max * _magic(tau, axle.bx, axle.cx, axle.dx, axle.ex)
    f_yw = f_max * _magic(alpha, axle.by, axle.cy, axle.dy, axle.ey)
    norm = np.hypot(f_xw, f_yw)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norm > f_max, np.divide(f_max, np.where(norm > 0, norm, 1.0)), 1.0)
    f_xw = np.where(f_z > 0, f_xw * scale, 0.0)
    f_yw = np.where(f_z > 0, f_yw * scale, 0.0)
    if f_xw.ndim == 0:
        return float(f_xw), float(f_yw)
    return f_xw, f_yw


def tire_states(state: VehicleState, params: VehicleParams) -> TireState:
    """Evaluate the full tire pipeline for diagnostics and property checks."""
    f_z = normal_loads(state, params)
    alpha = slip_angles(state, params)
    x_i = np.array([params.l_f, params.l_f, -params.l_r, -params.l_r])
    y_i = np.array([params.l_w, -params.l_w, params.l_w, -params.l_w])
    vc_x = state.v_x - state.psi_dot * y_i
    vc_y = state.v_y + state.psi_dot * x_i
    steer = np.array([state.delta, state.delta, 0.0, 0.0])
    v_xw = vc_x * np.cos(steer) + vc_y * np.sin(steer)
    tau = slip_ratio(params.r_w, state.omega, v_xw, params.eps_v)
    f_xw = np.empty(4)
    f_yw = np.empty(4)
    for i in range(4):
        axle = params.tire.front if i < 2 else params.tire.rear
        f_xw[i], f_yw[i] = tire_forces(tau[i], alpha[i], f_z[i], params.mu, axle)
    f_x = f_xw * np.cos(steer) - f_yw * np.sin(steer)
    f_y = f_xw * np.sin(steer) + f_yw * np.cos(steer)
    return TireState(tau=tau, alpha=alpha, f_xw=f_xw, f_yw=f_yw,
                     f_x=f_x, f_y=f_y, f_z=f_z, v_xw=v_xw)


def state_derivative(state: VehicleState, control: ControlInput,
                     params: VehicleParams) -> np.ndarray:
    """Packed d(state)/dt; indices follow apexplan._dyncore."""
    out = np.empty(NSTATE)
    core.derivative(state.as_array(), control.as_array(), params.packed, out)
    return out


def _check_dt(dt: float):
    if not 0.0 < dt <= DT_MAX:
        raise ValueError(f"dt must lie in (0, {DT_MAX}] s, got {dt}")


def step(state: VehicleState, control: ControlInput, params: VehicleParams,
         dt: float) -> VehicleState:
    """One RK4 step; dt is capped at 2 ms by the wheel spin dynamics."""
    _check_dt(dt)
    out = np.empty(NSTATE)
    core.rk4_step(state.as_array(), control.as_array(), params.packed, dt, out)
    return VehicleState.from_array(out)


def simulate(state: VehicleState, control: ControlInput, params: VehicleParams,
             dt: float, n_steps: int) -> VehicleState:
    """n_steps RK4 steps under a held command."""
    _check_dt(dt)
    out = core.integrate(state.as_array(), control.as_array(), params.packed,
                         dt, n_steps)
    return VehicleState.from_array(out)


def initial_state(params: VehicleParams, v_x: float, v_y: float = 0.0,
                  x: float = 0.0, y: float = 0.0, psi: float = 0.0,
                  psi_dot: float = 0.0, delta: float = 0.0) -> VehicleState:
    """State at the requested speeds with wheels spun up for zero slip."""
    st = VehicleState(x=x, y=y, psi=psi, v_x=v_x, v_y=v_y,
                      psi_dot=psi_dot, delta=delta)
    ts = tire_states(st, params)
    st.omega = ts.v_xw / params.r_w
    return st
