"""Compiled kernels for the SL(2,R)/SL(2,Z) model.

Points are 2x2 matrices acted on by SL(2,Z) from the left; the rows of a
matrix form a basis of a unimodular lattice and reduction is Gauss
reduction of that basis.  The flows act by right multiplication.

A chart solve looks for an integer matrix ``N`` (playing ``gamma^-1``) with
``N x = y M`` and ``M = U(w) L(v) A(u)`` small.  The rows of ``N x`` are
vectors of the row lattice of ``x`` lying within ``|y_row| * beta`` of the
rows of ``y``, where ``beta`` bounds ``|M - I|_F`` on the search box, so the
enumeration below is exhaustive for the requested box.
"""
import math

import numpy as np
from numba import njit

_MAX_CAND = 4096


@njit(cache=True)
def reduce_one(a, b, c, d):
    for _ in range(500):
        n1 = a * a + b * b
        mu = np.rint((a * c + b * d) / n1)
        if mu != 0.0:
            c = c - mu * a
            d = d - mu * b
        n2 = c * c + d * d
        if n2 < n1:
            a, b, c, d = c, d, -a, -b
        else:
            break
    if a < 0.0 or (a == 0.0 and b < 0.0):
        a, b, c, d = -a, -b, -c, -d
    return a, b, c, d


@njit(cache=True)
def reduce_batch(m):
    out = np.empty_like(m)
    for i in range(m.shape[0]):
        a, b, c, d = reduce_one(m[i, 0, 0], m[i, 0, 1], m[i, 1, 0], m[i, 1, 1])
        out[i, 0, 0] = a
        out[i, 0, 1] = b
        out[i, 1, 0] = c
        out[i, 1, 1] = d
    return out


@njit(cache=True)
def domain_coords_batch(r):
    """(X, Y, theta) of already-reduced representatives.

    With rows b1 (shortest) and b2, the matrix [-b2; b1] maps i to
    X + iY in the standard fundamental domain and theta = atan2(b1).
    """
    n = r.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        a = r[i, 0, 0]
        b = r[i, 0, 1]
        c = r[i, 1, 0]
        d = r[i, 1, 1]
        q = a * a + b * b
        out[i, 0] = -(a * c + b * d) / q
        out[i, 1] = 1.0 / q
        th = math.atan2(a, b)
        if th >= math.pi:
            th -= math.pi
        out[i, 2] = th
    return out


@njit(cache=True)
def _chart_beta(ru, rv, rw):
    e = math.exp(0.5 * ru)
    m11 = (1.0 + rw * rv) * e - 1.0
    m12 = rw * e
    m21 = rv * e
    m22 = e - 1.0
    return math.sqrt(m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22)


@njit(cache=True)
def _row_candidates(t0, t1, x00, x01, x10, x11, beta, out):
    """Integer (n0, n1) with |n0*x_0 + n1*x_1 - t| <= |t| * beta."""
    tn = math.sqrt(t0 * t0 + t1 * t1)
    rad = tn * beta + 1e-12
    # inverse of the unimodular basis
    i00, i01, i10, i11 = x11, -x01, -x10, x00
    c0 = t0 * i00 + t1 * i10
    c1 = t0 * i01 + t1 * i11
    # n0 = t . (column 0 of the inverse), n1 = t . (column 1)
    h0 = rad * math.sqrt(i00 * i00 + i10 * i10) + 1e-9
    h1 = rad * math.sqrt(i01 * i01 + i11 * i11) + 1e-9
    cnt = 0
    lo0 = int(math.ceil(c0 - h0))
    hi0 = int(math.floor(c0 + h0))
    lo1 = int(math.ceil(c1 - h1))
    hi1 = int(math.floor(c1 + h1))
    for n0 in range(lo0, hi0 + 1):
        for n1 in range(lo1, hi1 + 1):
            v0 = n0 * x00 + n1 * x10 - t0
            v1 = n0 * x01 + n1 * x11 - t1
            if v0 * v0 + v1 * v1 <= rad * rad:
                if cnt < out.shape[0]:
                    out[cnt, 0] = n0
                    out[cnt, 1] = n1
                cnt += 1
    return min(cnt, out.shape[0])


@njit(cache=True)
def _chart_from_gamma(x, y, n00, n01, n10, n11):
    """M = y^-1 N x, normalized to M22 > 0, decomposed as U(w) L(v) A(u)."""
    # N x
    p00 = n00 * x[0, 0] + n01 * x[1, 0]
    p01 = n00 * x[0, 1] + n01 * x[1, 1]
    p10 = n10 * x[0, 0] + n11 * x[1, 0]
    p11 = n10 * x[0, 1] + n11 * x[1, 1]
    # y^-1 = [[y11, -y01], [-y10, y00]]
    m01 = y[1, 1] * p01 - y[0, 1] * p11
    m10 = -y[1, 0] * p00 + y[0, 0] * p10
    m11 = -y[1, 0] * p01 + y[0, 0] * p11
    if m11 < 0.0:
        m01, m10, m11 = -m01, -m10, -m11
    if m11 <= 1e-300:
        return False, 0.0, 0.0, 0.0
    u = -2.0 * math.log(m11)
    v = m10 * m11
    w = m01 / m11
    return True, u, v, w


@njit(cache=True)
def chart_search_batch(x, y, ru, rv, rw):
    """For each pair, the chart coordinates of x relative to y with the
    smallest box norm max(|u|/ru, |v|/rv, |w|/rw), if that norm is <= 1.

    Returns (coords (n, 3), found (n,), n_in_box (n,)).
    """
    n = x.shape[0]
    coords = np.zeros((n, 3))
    found = np.zeros(n, dtype=np.bool_)
    nin = np.zeros(n, dtype=np.int64)
    beta = _chart_beta(ru, rv, rw)
    ca = np.empty((_MAX_CAND, 2), dtype=np.int64)
    cb = np.empty((_MAX_CAND, 2), dtype=np.int64)
    for i in range(n):
        xi = x[i]
        yi = y[i]
        na = _row_candidates(yi[0, 0], yi[0, 1], xi[0, 0], xi[0, 1], xi[1, 0], xi[1, 1], beta, ca)
        nb = _row_candidates(yi[1, 0], yi[1, 1], xi[0, 0], xi[0, 1], xi[1, 0], xi[1, 1], beta, cb)
        best = 1.0 + 1e-12
        for ia in range(na):
            for ib in range(nb):
                n00 = ca[ia, 0]
                n01 = ca[ia, 1]
                n10 = cb[ib, 0]
                n11 = cb[ib, 1]
                if n00 * n11 - n01 * n10 != 1:
                    continue
                ok, u, v, w = _chart_from_gamma(xi, yi, n00, n01, n10, n11)
                if not ok:
                    continue
                nrm = max(abs(u) / ru, abs(v) / rv, abs(w) / rw)
                if nrm <= 1.0:
                    nin[i] += 1
                if nrm < best:
                    best = nrm
                    coords[i, 0] = u
                    coords[i, 1] = v
                    coords[i, 2] = w
                    found[i] = True
    return coords, found, nin


@njit(cache=True)
def _dh(ax, ay, bx, by):
    # asinh form keeps full relative precision for nearby points
    dx = ax - bx
    dy = ay - by
    return 2.0 * math.asinh(0.5 * math.sqrt((dx * dx + dy * dy) / (ay * by)))


@njit(cache=True)
def _mobius(m00, m01, m10, m11, zx, zy):
    # (m00 z + m01) / (m10 z + m11)
    nx = m00 * zx + m01
    ny = m00 * zy
    dx = m10 * zx + m11
    dy = m10 * zy
    den = dx * dx + dy * dy
    return (nx * dx + ny * dy) / den, (ny * dx - nx * dy) / den


@njit(cache=True)
def displacement(m00, m01, m10, m11):
    """Sum of hyperbolic displacements of i, 2i and 1+i under M."""
    tot = 0.0
    px = (0.0, 0.0, 1.0)
    py = (1.0, 2.0, 1.0)
    for j in range(3):
        zx, zy = _mobius(m00, m01, m10, m11, px[j], py[j])
        tot += _dh(zx, zy, px[j], py[j])
    return tot


@njit(cache=True)
def _best_displacement(xi, yi, beta, ca, cb):
    na = _row_candidates(yi[0, 0], yi[0, 1], xi[0, 0], xi[0, 1], xi[1, 0], xi[1, 1], beta, ca)
    nb = _row_candidates(yi[1, 0], yi[1, 1], xi[0, 0], xi[0, 1], xi[1, 0], xi[1, 1], beta, cb)
    best = np.inf
    for ia in range(na):
        for ib in range(nb):
            n00 = ca[ia, 0]
            n01 = ca[ia, 1]
            n10 = cb[ib, 0]
            n11 = cb[ib, 1]
            if n00 * n11 - n01 * n10 != 1:
                continue
            p00 = n00 * xi[0, 0] + n01 * xi[1, 0]
            p01 = n00 * xi[0, 1] + n01 * xi[1, 1]
            p10 = n10 * xi[0, 0] + n11 * xi[1, 0]
            p11 = n10 * xi[0, 1] + n11 * xi[1, 1]
            m00 = yi[1, 1] * p00 - yi[0, 1] * p10
            m01 = yi[1, 1] * p01 - yi[0, 1] * p11
            m10 = -yi[1, 0] * p00 + yi[0, 0] * p10
            m11 = -yi[1, 0] * p01 + yi[0, 0] * p11
            dsp = displacement(m00, m01, m10, m11)
            if dsp < best:
                best = dsp
    return best


@njit(cache=True)
def distance_batch(x, y):
    """Quotient distance min over gamma of sum_j d_H(x p_j, gamma y p_j).

    Exhaustive: once some candidate gives displacement D, every better
    gamma has |M|_F <= sqrt(2 cosh D), hence |M - I|_F <= that + sqrt(2).
    """
    n = x.shape[0]
    out = np.empty(n)
    ca = np.empty((_MAX_CAND, 2), dtype=np.int64)
    cb = np.empty((_MAX_CAND, 2), dtype=np.int64)
    for i in range(n):
        beta = 0.5
        best = np.inf
        while not np.isfinite(best) and beta < 1e3:
            best = _best_displacement(x[i], y[i], beta, ca, cb)
            beta *= 2.0
        beta = math.sqrt(2.0 * math.cosh(best / 1.0)) + math.sqrt(2.0)
        best2 = _best_displacement(x[i], y[i], beta, ca, cb)
        out[i] = min(best, best2)
    return out
