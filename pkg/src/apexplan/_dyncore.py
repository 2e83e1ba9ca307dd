"""Compiled kernels for the double-track plant.

State, input and parameter vectors are packed into flat float64 arrays so the
hot loops (fixed-step integration, batched acceleration sampling) can be
jitted.  The index constants below are the single source of truth for the
layout; :mod:`apexplan.dynamics` wraps them in friendlier types.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# state layout
SX, SY, SPSI, STHETA, SPHI, SVX, SVY, SDPSI, SDTHETA, SDPHI = range(10)
SOMEGA = 10  # wheel speeds occupy 10..13 (FL, FR, RL, RR)
SDELTA = 14
NSTATE = 15

# input layout: four wheel torques (FL, FR, RL, RR) then steering command
NINPUT = 5

# parameter layout
(PM, PIX, PIY, PIZ, PIR, PLF, PLR, PLW, PRW, PKS, PDS, PZ, PMU, PDRAG,
 PDELTA_MAX, PDELTA_RATE, PTMIN, PTMAX, PEPSV, PDELTA_TAU) = range(20)
PTIRE_F = 20  # Bx, Cx, Dx, Ex, By, Cy, Dy, Ey for the front axle
PTIRE_R = 28  # same for the rear axle
NPAR = 36

GRAVITY = 9.81


@njit(cache=True)
def magic_formula(s, b, c, d, e):
    """Pure-slip force factor D*sin(C*atan(B*s - E*(B*s - atan(B*s))))."""
    bs = b * s
    return d * math.sin(c * math.atan(bs - e * (bs - math.atan(bs))))


@njit(cache=True)
def slip_ratio(rw_omega, v_xw, eps_v):
    """Two-branch slip ratio with sign-preserving denominator floor."""
    if rw_omega >= v_xw:
        den = rw_omega
    else:
        den = v_xw
    if den >= 0.0:
        if den < eps_v:
            den = eps_v
    else:
        if den > -eps_v:
            den = -eps_v
    tau = (rw_omega - v_xw) / den
    if tau > 1.0:
        tau = 1.0
    elif tau < -1.0:
        tau = -1.0
    return tau


@njit(cache=True)
def tire_force(tau, alpha, f_z, mu, p, off):
    """Wheel-frame forces for one tire; combined slip capped at mu*F_z."""
    if f_z <= 0.0:
        return 0.0, 0.0
    f_max = mu * f_z
    f_xw = f_max * magic_formula(tau, p[off], p[off + 1], p[off + 2], p[off + 3])
    f_yw = f_max * magic_formula(alpha, p[off + 4], p[off + 5], p[off + 6], p[off + 7])
    f = math.sqrt(f_xw * f_xw + f_yw * f_yw)
    if f > f_max:
        scale = f_max / f
        f_xw *= scale
        f_yw *= scale
    return f_xw, f_yw


@njit(cache=True)
def _reg_den(den, eps_v):
    if den >= 0.0:
        return den if den >= eps_v else eps_v
    return den if den <= -eps_v else -eps_v


@njit(cache=True)
def derivative(x, u, p, out):
    """Time derivative of one packed state under a held input."""
    psi = x[SPSI]
    theta = x[STHETA]
    phi = x[SPHI]
    v_x = x[SVX]
    v_y = x[SVY]
    dpsi = x[SDPSI]
    dtheta = x[SDTHETA]
    dphi = x[SDPHI]
    delta = x[SDELTA]

    m_t = p[PM]
    l_f = p[PLF]
    l_r = p[PLR]
    l_w = p[PLW]
    r_w = p[PRW]
    k_s = p[PKS]
    d_s = p[PDS]
    z_com = p[PZ]
    mu = p[PMU]
    eps_v = p[PEPSV]

    wheelbase = l_f + l_r
    fz_front0 = m_t * GRAVITY * l_r / (2.0 * wheelbase)
    fz_rear0 = m_t * GRAVITY * l_f / (2.0 * wheelbase)

    cd = math.cos(delta)
    sd = math.sin(delta)

    sum_fx = 0.0
    sum_fy = 0.0
    fy_front = 0.0
    fy_rear = 0.0
    yaw_from_fx = 0.0
    fz_left = 0.0
    fz_right = 0.0
    fz_front = 0.0
    fz_rear = 0.0

    for i in range(4):
        front = i < 2
        left = (i == 0) or (i == 2)
        x_i = l_f if front else -l_r
        y_i = l_w if left else -l_w

        # suspension travel from the small-angle corner map
        sgn_x = -l_f if front else l_r
        sgn_y = l_w if left else -l_w
        dz = sgn_x * phi + sgn_y * theta
        dz_dot = sgn_x * dphi + sgn_y * dtheta
        fz0 = fz_front0 if front else fz_rear0
        f_z = fz0 - k_s * dz - d_s * dz_dot
        if f_z < 0.0:
            f_z = 0.0  # wheel lift-off

        # contact-point velocity, then wheel frame
        vc_x = v_x - dpsi * y_i
        vc_y = v_y + dpsi * x_i
        if front:
            v_xw = vc_x * cd + vc_y * sd
        else:
            v_xw = vc_x

        tau = slip_ratio(r_w * x[SOMEGA + i], v_xw, eps_v)

        den = _reg_den(v_x + dpsi * (-y_i), eps_v)
        if front:
            alpha = delta - (v_y + l_f * dpsi) / den
        else:
            alpha = -(v_y - l_r * dpsi) / den

        off = PTIRE_F if front else PTIRE_R
        f_xw, f_yw = tire_force(tau, alpha, f_z, mu, p, off)

        if front:
            f_x = f_xw * cd - f_yw * sd
            f_y = f_xw * sd + f_yw * cd
        else:
            f_x = f_xw
            f_y = f_yw

        sum_fx += f_x
        sum_fy += f_y
        if front:
            fy_front += f_y
            fz_front += f_z
        else:
            fy_rear += f_y
            fz_rear += f_z
        if left:
            yaw_from_fx -= l_w * f_x
            fz_left += f_z
        else:
            yaw_from_fx += l_w * f_x
            fz_right += f_z

        out[SOMEGA + i] = (u[i] - r_w * f_xw) / p[PIR]

    f_aero = p[PDRAG] * v_x * abs(v_x)

    out[SX] = v_x * math.cos(psi) - v_y * math.sin(psi)
    out[SY] = v_x * math.sin(psi) + v_y * math.cos(psi)
    out[SPSI] = dpsi
    out[STHETA] = dtheta
    out[SPHI] = dphi
    out[SVX] = dpsi * v_y + (sum_fx - f_aero) / m_t
    out[SVY] = -dpsi * v_x + sum_fy / m_t
    out[SDPSI] = (l_f * fy_front - l_r * fy_rear + yaw_from_fx) / p[PIZ]
    out[SDTHETA] = (l_w * (fz_left - fz_right) + z_com * sum_fy) / p[PIX]
    out[SDPHI] = (l_r * fz_rear - l_f * fz_front - z_com * sum_fx) / p[PIY]

    d_err = (u[4] - delta) / p[PDELTA_TAU]
    rate = p[PDELTA_RATE]
    if d_err > rate:
        d_err = rate
    elif d_err < -rate:
        d_err = -rate
    out[SDELTA] = d_err


@njit(cache=True)
def rk4_step(x, u, p, dt, out):
    k1 = np.empty(NSTATE)
    k2 = np.empty(NSTATE)
    k3 = np.empty(NSTATE)
    k4 = np.empty(NSTATE)
    tmp = np.empty(NSTATE)

    derivative(x, u, p, k1)
    for j in range(NSTATE):
        tmp[j] = x[j] + 0.5 * dt * k1[j]
    derivative(tmp, u, p, k2)
    for j in range(NSTATE):
        tmp[j] = x[j] + 0.5 * dt * k2[j]
    derivative(tmp, u, p, k3)
    for j in range(NSTATE):
        tmp[j] = x[j] + dt * k3[j]
    derivative(tmp, u, p, k4)
    for j in range(NSTATE):
        out[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def integrate(x, u, p, dt, n_steps):
    """Advance one state n_steps under a held input; returns the new state."""
    cur = x.copy()
    nxt = np.empty(NSTATE)
    for _ in range(n_steps):
        rk4_step(cur, u, p, dt, nxt)
        cur, nxt = nxt, cur
    return cur


@njit(cache=True)
def integrate_batch(xs, us, p, dt, n_steps, omega_caps):
    """Advance a batch of states, each under its own held input.

    Returns the final states plus a per-row validity mask; a row is marked
    invalid when any wheel speed exceeds its cap or a state goes non-finite.
    """
    n = xs.shape[0]
    out = np.empty_like(xs)
    ok = np.ones(n, dtype=np.bool_)
    nxt = np.empty(NSTATE)
    for r in range(n):
        cur = xs[r].copy()
        good = True
        for _ in range(n_steps):
            rk4_step(cur, us[r], p, dt, nxt)
            cur, nxt = nxt, cur
            for i in range(4):
                w = abs(cur[SOMEGA + i])
                if w > omega_caps[r] or not math.isfinite(w):
                    good = False
                    break
            if not good or not math.isfinite(cur[SVX]):
                good = False
                break
        out[r] = cur
        ok[r] = good
    return out, ok
