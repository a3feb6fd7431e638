"""Hot pointwise kernels, with a numba fast path and a pure-numpy fallback.

Everything here acts on ``(npoints, 3)`` float64 arrays of vector values at
collocation points. The backend is chosen once at import time: numba when it
is importable, unless the environment variable ``SLLB_NUMBA`` is set to
``0``/``false``/``off`` (setting it to ``1`` forces numba and raises if the
import fails). Both paths evaluate the same formulas; transcendentals may
differ by an ulp between libm and numpy, so cross-backend outputs are equal
to rounding, not bitwise.
"""

import math
import os

import numpy as np

_FLAG = os.environ.get("SLLB_NUMBA", "").strip().lower()


def _select_backend() -> bool:
    if _FLAG in ("0", "false", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if _FLAG in ("1", "true", "on"):
            raise
        return False
    return True


USING_NUMBA = _select_backend()


def backend() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return "numba" if USING_NUMBA else "numpy"


# ----------------------------------------------------------------------
# numpy implementations
# ----------------------------------------------------------------------

def _cross3_numpy(a, b):
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def _drift_pointwise_numpy(vals, lap_vals, h_vals, gamma, kappa, mu, ctrl,
                           nonlinear):
    """gamma v x (lap v) - kappa (1 + mu |v|^2) v + ctrl (v x h + h)."""
    if nonlinear:
        out = gamma * _cross3_numpy(vals, lap_vals)
        m2 = vals[:, 0] ** 2 + vals[:, 1] ** 2 + vals[:, 2] ** 2
        out -= (kappa * (1.0 + mu * m2))[:, None] * vals
    else:
        out = np.zeros_like(vals)
    if ctrl != 0.0:
        out += ctrl * (_cross3_numpy(vals, h_vals) + h_vals)
    return out


def _gbar_pointwise_numpy(vals, h_vals):
    return _cross3_numpy(vals, h_vals) + h_vals


def _marcus_flow_numpy(x_vals, h_vals, tl):
    """Closed-form time-tl flow of y' = y x h + h, pointwise.

    h lies in the kernel of the rotation generator, so the flow is
    R x + tl h with R the rotation about h/|h| through angle -tl |h|.
    """
    hx, hy, hz = h_vals[:, 0], h_vals[:, 1], h_vals[:, 2]
    hn = np.sqrt(hx * hx + hy * hy + hz * hz)
    safe = np.where(hn > 0.0, hn, 1.0)
    ux, uy, uz = hx / safe, hy / safe, hz / safe
    ang = -tl * hn
    ca, sa = np.cos(ang), np.sin(ang)
    one_m = 1.0 - ca
    xx, xy, xz = x_vals[:, 0], x_vals[:, 1], x_vals[:, 2]
    dot = ux * xx + uy * xy + uz * xz
    cx = uy * xz - uz * xy
    cy = uz * xx - ux * xz
    cz = ux * xy - uy * xx
    out = np.empty_like(x_vals)
    out[:, 0] = ca * xx + sa * cx + one_m * dot * ux + tl * hx
    out[:, 1] = ca * xy + sa * cy + one_m * dot * uy + tl * hy
    out[:, 2] = ca * xz + sa * cz + one_m * dot * uz + tl * hz
    zero = hn == 0.0
    if np.any(zero):
        out[zero] = x_vals[zero]
    return out


def _rk4_flow_numpy(x_vals, h_vals, l, t_total, n_steps):
    """Classic fixed-step RK4 on y' = l (y x h + h), pointwise."""
    y = x_vals.copy()
    dt = t_total / n_steps
    for _ in range(n_steps):
        k1 = l * (_cross3_numpy(y, h_vals) + h_vals)
        y2 = y + 0.5 * dt * k1
        k2 = l * (_cross3_numpy(y2, h_vals) + h_vals)
        y3 = y + 0.5 * dt * k2
        k3 = l * (_cross3_numpy(y3, h_vals) + h_vals)
        y4 = y + dt * k3
        k4 = l * (_cross3_numpy(y4, h_vals) + h_vals)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


# ----------------------------------------------------------------------
# numba implementations (same formulas, explicit loops)
# ----------------------------------------------------------------------

if USING_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _cross3_numba(a, b):
        n = a.shape[0]
        out = np.empty_like(a)
        for i in range(n):
            out[i, 0] = a[i, 1] * b[i, 2] - a[i, 2] * b[i, 1]
            out[i, 1] = a[i, 2] * b[i, 0] - a[i, 0] * b[i, 2]
            out[i, 2] = a[i, 0] * b[i, 1] - a[i, 1] * b[i, 0]
        return out

    @njit(cache=True)
    def _drift_pointwise_numba(vals, lap_vals, h_vals, gamma, kappa, mu, ctrl,
                               nonlinear):
        n = vals.shape[0]
        out = np.zeros_like(vals)
        if nonlinear:
            for i in range(n):
                vx, vy, vz = vals[i, 0], vals[i, 1], vals[i, 2]
                lx, ly, lz = lap_vals[i, 0], lap_vals[i, 1], lap_vals[i, 2]
                m2 = vx * vx + vy * vy + vz * vz
                c = kappa * (1.0 + mu * m2)
                out[i, 0] = gamma * (vy * lz - vz * ly) - c * vx
                out[i, 1] = gamma * (vz * lx - vx * lz) - c * vy
                out[i, 2] = gamma * (vx * ly - vy * lx) - c * vz
        if ctrl != 0.0:
            for i in range(n):
                vx, vy, vz = vals[i, 0], vals[i, 1], vals[i, 2]
                hx, hy, hz = h_vals[i, 0], h_vals[i, 1], h_vals[i, 2]
                out[i, 0] += ctrl * ((vy * hz - vz * hy) + hx)
                out[i, 1] += ctrl * ((vz * hx - vx * hz) + hy)
                out[i, 2] += ctrl * ((vx * hy - vy * hx) + hz)
        return out

    @njit(cache=True)
    def _gbar_pointwise_numba(vals, h_vals):
        n = vals.shape[0]
        out = np.empty_like(vals)
        for i in range(n):
            vx, vy, vz = vals[i, 0], vals[i, 1], vals[i, 2]
            hx, hy, hz = h_vals[i, 0], h_vals[i, 1], h_vals[i, 2]
            out[i, 0] = (vy * hz - vz * hy) + hx
            out[i, 1] = (vz * hx - vx * hz) + hy
            out[i, 2] = (vx * hy - vy * hx) + hz
        return out

    @njit(cache=True)
    def _marcus_flow_numba(x_vals, h_vals, tl):
        n = x_vals.shape[0]
        out = np.empty_like(x_vals)
        for i in range(n):
            hx, hy, hz = h_vals[i, 0], h_vals[i, 1], h_vals[i, 2]
            hn = math.sqrt(hx * hx + hy * hy + hz * hz)
            xx, xy, xz = x_vals[i, 0], x_vals[i, 1], x_vals[i, 2]
            if hn == 0.0:
                out[i, 0] = xx
                out[i, 1] = xy
                out[i, 2] = xz
                continue
            ux, uy, uz = hx / hn, hy / hn, hz / hn
            ang = -tl * hn
            ca = math.cos(ang)
            sa = math.sin(ang)
            one_m = 1.0 - ca
            dot = ux * xx + uy * xy + uz * xz
            cx = uy * xz - uz * xy
            cy = uz * xx - ux * xz
            cz = ux * xy - uy * xx
            out[i, 0] = ca * xx + sa * cx + one_m * dot * ux + tl * hx
            out[i, 1] = ca * xy + sa * cy + one_m * dot * uy + tl * hy
            out[i, 2] = ca * xz + sa * cz + one_m * dot * uz + tl * hz
        return out

    @njit(cache=True)
    def _rk4_flow_numba(x_vals, h_vals, l, t_total, n_steps):
        n = x_vals.shape[0]
        y = x_vals.copy()
        dt = t_total / n_steps
        for i in range(n):
            hx, hy, hz = h_vals[i, 0], h_vals[i, 1], h_vals[i, 2]
            yx, yy, yz = y[i, 0], y[i, 1], y[i, 2]
            for _ in range(n_steps):
                k1x = l * ((yy * hz - yz * hy) + hx)
                k1y = l * ((yz * hx - yx * hz) + hy)
                k1z = l * ((yx * hy - yy * hx) + hz)
                ax, ay, az = yx + 0.5 * dt * k1x, yy + 0.5 * dt * k1y, yz + 0.5 * dt * k1z
                k2x = l * ((ay * hz - az * hy) + hx)
                k2y = l * ((az * hx - ax * hz) + hy)
                k2z = l * ((ax * hy - ay * hx) + hz)
                bx, by, bz = yx + 0.5 * dt * k2x, yy + 0.5 * dt * k2y, yz + 0.5 * dt * k2z
                k3x = l * ((by * hz - bz * hy) + hx)
                k3y = l * ((bz * hx - bx * hz) + hy)
                k3z = l * ((bx * hy - by * hx) + hz)
                cx, cy, cz = yx + dt * k3x, yy + dt * k3y, yz + dt * k3z
                k4x = l * ((cy * hz - cz * hy) + hx)
                k4y = l * ((cz * hx - cx * hz) + hy)
                k4z = l * ((cx * hy - cy * hx) + hz)
                yx = yx + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                yy = yy + (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
                yz = yz + (dt / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
            y[i, 0] = yx
            y[i, 1] = yy
            y[i, 2] = yz
        return y

    cross3 = _cross3_numba
    drift_pointwise = _drift_pointwise_numba
    gbar_pointwise = _gbar_pointwise_numba
    marcus_flow = _marcus_flow_numba
    rk4_flow = _rk4_flow_numba
else:
    cross3 = _cross3_numpy
    drift_pointwise = _drift_pointwise_numpy
    gbar_pointwise = _gbar_pointwise_numpy
    marcus_flow = _marcus_flow_numpy
    rk4_flow = _rk4_flow_numpy


NUMPY_KERNELS = {
    "cross3": _cross3_numpy,
    "drift_pointwise": _drift_pointwise_numpy,
    "gbar_pointwise": _gbar_pointwise_numpy,
    "marcus_flow": _marcus_flow_numpy,
    "rk4_flow": _rk4_flow_numpy,
}
