"""Compiled integrators for the conformal metric

    ds = lambda |dz|,  lambda(x, y) = exp(a sin x sin y) / y

on a patch of the upper half plane.  Phase points are stored as
``(x, eta = log y, theta)``, theta being the Euclidean angle of the unit
tangent.  The integrated state carries two extra slots: a Riccati variable
``u`` and an accumulator ``I`` with ``dI/dt = u + c0``.

Status codes: 0 ok, 1 left the patch, 2 step underflow.
"""
import math

import numpy as np
from numba import njit

OK, HORIZON, UNDERFLOW = 0, 1, 2

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@njit(cache=True)
def curvature(a, x, y):
    s = math.sin(x) * math.sin(y)
    return -(1.0 - 2.0 * a * y * y * s) * math.exp(-2.0 * a * s)


@njit(cache=True)
def _phi_grad(a, x, y):
    return a * math.cos(x) * math.sin(y), -1.0 / y + a * math.sin(x) * math.cos(y)


@njit(cache=True)
def rhs(st, out, a, riccati, c0):
    x = st[0]
    y = math.exp(st[1])
    th = st[2]
    sn = math.sin(x) * math.sin(y)
    e = math.exp(-a * sn)
    ct = math.cos(th)
    s_t = math.sin(th)
    px, py = _phi_grad(a, x, y)
    out[0] = y * e * ct
    out[1] = e * s_t
    out[2] = y * e * (py * ct - px * s_t)
    if riccati:
        u = st[3]
        kk = -(1.0 - 2.0 * a * y * y * sn) * math.exp(-2.0 * a * sn)
        out[3] = -u * u - kk
        out[4] = u + c0
    else:
        out[3] = 0.0
        out[4] = 0.0


@njit(cache=True)
def _outside(st, xmax, eta_min, eta_max):
    return abs(st[0]) > xmax or st[1] > eta_max or st[1] < eta_min


@njit(cache=True)
def integrate(st0, T, a, riccati, c0, rtol, atol, xmax, eta_min, eta_max):
    """Integrate the geodesic (plus optional Riccati/accumulator) system
    for signed time T.  Returns (state, status, nsteps)."""
    st = st0.copy()
    if T == 0.0:
        return st, OK, 0
    direction = 1.0 if T > 0 else -1.0
    t = 0.0
    hh = direction * min(0.05, abs(T))
    k = np.empty((7, 5))
    tmp = np.empty(5)
    y5 = np.empty(5)
    nsteps = 0
    rhs(st, k[0], a, riccati, c0)
    while direction * (T - t) > 0.0:
        if direction * (t + hh - T) > 0.0:
            hh = T - t
        for i in range(1, 7):
            for j in range(5):
                acc = 0.0
                for m in range(i):
                    acc += _A[i, m] * k[m, j]
                tmp[j] = st[j] + hh * acc
            rhs(tmp, k[i], a, riccati, c0)
        err = 0.0
        for j in range(5):
            s5 = 0.0
            s4 = 0.0
            for m in range(7):
                s5 += _B5[m] * k[m, j]
                s4 += _B4[m] * k[m, j]
            y5[j] = st[j] + hh * s5
            sc = atol + rtol * max(abs(st[j]), abs(y5[j]))
            e = hh * (s5 - s4) / sc
            err += e * e
        err = math.sqrt(err / 5.0)
        if err <= 1.0:
            t += hh
            for j in range(5):
                st[j] = y5[j]
            nsteps += 1
            if _outside(st, xmax, eta_min, eta_max):
                return st, HORIZON, nsteps
            # FSAL: last stage is the derivative at the new point
            for j in range(5):
                k[0, j] = k[6, j]
            fac = 0.9 * err ** -0.2 if err > 1e-10 else 5.0
            hh *= min(5.0, max(0.2, fac))
        else:
            hh *= max(0.2, 0.9 * err ** -0.25)
        if abs(hh) < 1e-13:
            return st, UNDERFLOW, nsteps
    return st, OK, nsteps


@njit(cache=True)
def horocycle_data(p, stable, a, h, W, T, seed, rtol, atol, xmax, eta_min, eta_max):
    """Horocycle curvature at p and the log-density accumulators.

    Unstable (stable=False): warm the Riccati equation up along the
    backward orbit, then accumulate int_0^T (u - h) forward.  Stable: the
    time-reversed construction with a negative seed.

    Returns (u, I(T/2), I(T), status).
    """
    sg = -1.0 if stable else 1.0
    st = np.zeros(5)
    st[0] = p[0]
    st[1] = p[1]
    st[2] = p[2]
    q, status, _ = integrate(st, -sg * W, a, False, 0.0, rtol, atol, xmax, eta_min, eta_max)
    if status != OK:
        return 0.0, 0.0, 0.0, status
    q[3] = sg * seed
    q[4] = 0.0
    r, status, _ = integrate(q, sg * W, a, True, 0.0, rtol, atol, xmax, eta_min, eta_max)
    if status != OK:
        return 0.0, 0.0, 0.0, status
    u = r[3]
    st[3] = u
    st[4] = 0.0
    c0 = -h if not stable else h
    r1, status, _ = integrate(st, sg * 0.5 * T, a, True, c0, rtol, atol, xmax, eta_min, eta_max)
    if status != OK:
        return u, 0.0, 0.0, status
    r2, status, _ = integrate(r1, sg * 0.5 * T, a, True, c0, rtol, atol, xmax, eta_min, eta_max)
    return u, r1[4], r2[4], status


@njit(cache=True)
def leaf_direction(p, u, a, out):
    """d(x, eta, theta)/d(arclength) along the horocycle of curvature u
    through p, moving in the direction of the tangent rotated by +90 deg."""
    x = p[0]
    y = math.exp(p[1])
    al = p[2] + 0.5 * math.pi
    sn = math.sin(x) * math.sin(y)
    e = math.exp(-a * sn)
    ca = math.cos(al)
    sa = math.sin(al)
    px, py = _phi_grad(a, x, y)
    out[0] = y * e * ca
    out[1] = e * sa
    out[2] = y * e * (py * ca - px * sa) + u


@njit(cache=True)
def _leaf_rhs(p, out, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
              xmax, eta_min, eta_max):
    u, _, I, status = horocycle_data(p, stable, a, h, W, T, seed, rtol, atol,
                                     xmax, eta_min, eta_max)
    if status != OK:
        return status, 0.0
    leaf_direction(p, u, a, out)
    dens = math.exp(I - lognorm)
    if by_measure:
        for j in range(3):
            out[j] /= dens
    return OK, dens


@njit(cache=True)
def leaf_flow(p0, t, nsteps, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
              xmax, eta_min, eta_max):
    """RK4 along a horocycle leaf.

    by_measure=True: t is leaf measure (Margulis time).  Otherwise t is
    arclength.  Returns (end point, integral of the density over the
    traversed parameter, status); the integral equals the arc measure
    when by_measure is False.
    """
    p = p0.copy()
    if t == 0.0:
        return p, 0.0, OK
    dt = t / nsteps
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    mass = 0.0
    for _ in range(nsteps):
        s, d1 = _leaf_rhs(p, k1, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
                          xmax, eta_min, eta_max)
        if s != OK:
            return p, mass, s
        for j in range(3):
            tmp[j] = p[j] + 0.5 * dt * k1[j]
        s, d2 = _leaf_rhs(tmp, k2, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
                          xmax, eta_min, eta_max)
        if s != OK:
            return p, mass, s
        for j in range(3):
            tmp[j] = p[j] + 0.5 * dt * k2[j]
        s, d3 = _leaf_rhs(tmp, k3, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
                          xmax, eta_min, eta_max)
        if s != OK:
            return p, mass, s
        for j in range(3):
            tmp[j] = p[j] + dt * k3[j]
        s, d4 = _leaf_rhs(tmp, k4, stable, by_measure, lognorm, a, h, W, T, seed, rtol, atol,
                          xmax, eta_min, eta_max)
        if s != OK:
            return p, mass, s
        for j in range(3):
            p[j] += dt * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0
        mass += dt * (d1 + 2.0 * d2 + 2.0 * d3 + d4) / 6.0
    return p, mass, OK
