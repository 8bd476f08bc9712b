"""Box partitions of the compact core of SL(2,R)/SL(2,Z) and itineraries.

Cells are boxes of a grid in fundamental-domain coordinates ``(X, log Y,
theta)``.  Points whose reduced representative leaves the core get the
label ``OUT``.  The boundary neighborhood ``V_r`` is the set of points x for
which some ``g_a h_b k_c x`` with ``a, b, c in {-r, 0, r}`` carries a
different label.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .. import _alg_kernels as AK
from ..errors import CoreNotCovered

OUT = -1
SQRT3_2 = math.sqrt(3.0) / 2.0


@njit(cache=True)
def _label_one(a, b, c, d, ex, ey, et, core2):
    a, b, c, d = AK.reduce_one(a, b, c, d)
    if a * a + b * b + c * c + d * d > core2:
        return -1
    q = a * a + b * b
    X = -(a * c + b * d) / q
    lY = -math.log(q)
    th = math.atan2(a, b)
    if th >= math.pi:
        th -= math.pi
    ix = np.searchsorted(ex, X, side="right") - 1
    iy = np.searchsorted(ey, lY, side="right") - 1
    it = np.searchsorted(et, th, side="right") - 1
    nx = ex.shape[0] - 1
    ny = ey.shape[0] - 1
    nt = et.shape[0] - 1
    ix = min(max(ix, 0), nx - 1)
    iy = min(max(iy, 0), ny - 1)
    it = min(max(it, 0), nt - 1)
    return ix + nx * (iy + ny * it)


@njit(cache=True)
def labels_batch(m, ex, ey, et, core2):
    out = np.empty(m.shape[0], dtype=np.int64)
    for k in range(m.shape[0]):
        out[k] = _label_one(m[k, 0, 0], m[k, 0, 1], m[k, 1, 0], m[k, 1, 1], ex, ey, et, core2)
    return out


@njit(cache=True)
def _apply(a, b, c, d, u, v, w):
    """Rows of x U(w) L(v) A(u) for x = [[a, b], [c, d]]."""
    e = math.exp(0.5 * u)
    m00 = (1.0 + w * v) * e
    m01 = w / e
    m10 = v * e
    m11 = 1.0 / e
    return (a * m00 + b * m10, a * m01 + b * m11,
            c * m00 + d * m10, c * m01 + d * m11)


@njit(cache=True)
def _in_boundary(a, b, c, d, r, ex, ey, et, core2):
    lab = _label_one(a, b, c, d, ex, ey, et, core2)
    for iu in range(-1, 2):
        for iv in range(-1, 2):
            for iw in range(-1, 2):
                if iu == 0 and iv == 0 and iw == 0:
                    continue
                p, q, s, t = _apply(a, b, c, d, iu * r, iv * r, iw * r)
                if _label_one(p, q, s, t, ex, ey, et, core2) != lab:
                    return True
    return False


@njit(cache=True)
def boundary_batch(m, r, ex, ey, et, core2):
    out = np.empty(m.shape[0], dtype=np.bool_)
    for k in range(m.shape[0]):
        out[k] = _in_boundary(m[k, 0, 0], m[k, 0, 1], m[k, 1, 0], m[k, 1, 1], r, ex, ey, et, core2)
    return out


@njit(cache=True)
def orbit_labels(xs, ts, ex, ey, et, core2):
    """Labels of x L(t) for every base point x (rows) and time t (columns)."""
    out = np.empty((xs.shape[0], ts.shape[0]), dtype=np.int64)
    for k in range(xs.shape[0]):
        a, b, c, d = xs[k, 0, 0], xs[k, 0, 1], xs[k, 1, 0], xs[k, 1, 1]
        for i in range(ts.shape[0]):
            t = ts[i]
            out[k, i] = _label_one(a + b * t, b, c + d * t, d, ex, ey, et, core2)
    return out


@njit(cache=True)
def orbit_boundary(xs, ts, r, ex, ey, et, core2):
    out = np.empty((xs.shape[0], ts.shape[0]), dtype=np.bool_)
    for k in range(xs.shape[0]):
        a, b, c, d = xs[k, 0, 0], xs[k, 0, 1], xs[k, 1, 0], xs[k, 1, 1]
        for i in range(ts.shape[0]):
            t = ts[i]
            out[k, i] = _in_boundary(a + b * t, b, c + d * t, d, r, ex, ey, et, core2)
    return out


class Cell(NamedTuple):
    label: int
    center: np.ndarray
    half_widths: tuple


@dataclass(frozen=True)
class UPartition:
    """Grid partition of the core.

    ``x_edges`` cut ``X``, ``y_edges`` cut ``log Y`` and ``theta_edges`` cut
    the direction angle in ``[0, pi)``.  Labels run ``ix + nx (iy + ny it)``.
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    theta_edges: np.ndarray
    core_norm: float = 10.0
    delta: float = math.nan
    diameter: float = math.nan
    leftover: float = 0.0

    @classmethod
    def grid(cls, shape, core_norm=10.0, y_spacing="haar", **kw):
        """Regular grid with ``shape = (nx, ny, ntheta)`` cells.

        ``y_spacing="haar"`` spaces the Y cuts uniformly in 1/Y (equal
        invariant mass per slab, ignoring the arc ``|z| = 1``); ``"log"``
        spaces them uniformly in log Y.
        """
        nx, ny, nt = shape
        ymax = core_norm ** 2
        if y_spacing == "haar":
            eta = np.linspace(1.0 / SQRT3_2, 1.0 / ymax, ny + 1)
            ey = -np.log(eta)
        else:
            ey = np.linspace(math.log(SQRT3_2), math.log(ymax), ny + 1)
        return cls(np.linspace(-0.5, 0.5, nx + 1), ey, np.linspace(0.0, math.pi, nt + 1),
                   core_norm, **kw)

    @property
    def shape(self):
        return (len(self.x_edges) - 1, len(self.y_edges) - 1, len(self.theta_edges) - 1)

    @property
    def m(self) -> int:
        nx, ny, nt = self.shape
        return nx * ny * nt

    def _args(self):
        return (np.ascontiguousarray(self.x_edges, dtype=float),
                np.ascontiguousarray(self.y_edges, dtype=float),
                np.ascontiguousarray(self.theta_edges, dtype=float),
                float(self.core_norm) ** 2)

    def label(self, m):
        m = np.asarray(m, dtype=float)
        flat = np.ascontiguousarray(m.reshape(-1, 2, 2))
        return labels_batch(flat, *self._args()).reshape(m.shape[:-2])

    def in_boundary(self, m, r):
        """Membership in the boundary neighborhood ``V_r``."""
        m = np.asarray(m, dtype=float)
        flat = np.ascontiguousarray(m.reshape(-1, 2, 2))
        return boundary_batch(flat, float(r), *self._args()).reshape(m.shape[:-2])

    def cells(self):
        """Cell boxes in ``(X, log Y, theta)`` coordinates."""
        from ..algebraic import iwasawa
        nx, ny, nt = self.shape
        out = []
        for it in range(nt):
            for iy in range(ny):
                for ix in range(nx):
                    lo = np.array([self.x_edges[ix], self.y_edges[iy], self.theta_edges[it]])
                    hi = np.array([self.x_edges[ix + 1], self.y_edges[iy + 1], self.theta_edges[it + 1]])
                    c = 0.5 * (lo + hi)
                    out.append(Cell(ix + nx * (iy + ny * it), iwasawa(c[0], math.exp(c[1]), c[2]),
                                    tuple(0.5 * (hi - lo))))
        return out


def build_u_partition(backend, delta, seed_points, *, max_leftover=1e-3):
    """Grid with spacing at most ``delta`` in each of ``X``, ``log Y`` and
    ``theta``.

    The metric diameter is estimated from the seed points as twice the
    largest distance from a cell's seeds to its first seed.
    """
    ymax = backend.core_norm ** 2
    lo, hi = math.log(SQRT3_2), math.log(ymax)
    nx = max(1, math.ceil(1.0 / delta))
    ny = max(1, math.ceil((hi - lo) / delta))
    nt = max(1, math.ceil(math.pi / delta))
    part = UPartition.grid((nx, ny, nt), backend.core_norm, y_spacing="log")
    seeds = np.asarray(seed_points, dtype=float).reshape(-1, 2, 2)
    lab = part.label(seeds)
    leftover = float(np.mean(lab == OUT)) if len(lab) else 0.0
    if leftover > max_leftover:
        raise CoreNotCovered(f"{leftover:.3g} of the seeds fall outside every cell")
    diam = 0.0
    for c in np.unique(lab[lab != OUT]):
        members = seeds[lab == c]
        if len(members) > 1:
            ref = np.broadcast_to(members[0], members.shape)
            diam = max(diam, 2.0 * float(backend.distance_batch(members, ref).max()))
    return UPartition(part.x_edges, part.y_edges, part.theta_edges, backend.core_norm,
                      delta=delta, diameter=diam, leftover=leftover)


def boundary_measure(backend, partition, r, n_samples, rng):
    """Monte Carlo invariant measure of ``V_r`` within the core, with its
    standard error."""
    pts = backend.haar_sample(rng, n_samples)
    hit = partition.in_boundary(pts, r)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / n_samples)


def boundary_scaling(backend, partition, eps_values, n_samples, rng):
    """Fitted constants ``mu(V_{eps^2}) / (m^2 eps^2)`` for each eps."""
    rows = []
    for eps in eps_values:
        mu, se = boundary_measure(backend, partition, eps * eps, n_samples, rng)
        rows.append((eps, mu, se, mu / (partition.m ** 2 * eps * eps)))
    return rows


# -- itineraries --------------------------------------------------------------

@dataclass(frozen=True)
class Itinerary:
    labels: np.ndarray
    dt: float
    R: float
    base_point: np.ndarray

    def __len__(self):
        return len(self.labels)


def sample_times(R, dt):
    n = max(1, math.ceil(R / dt - 1e-9))
    return np.arange(n) * dt


def itinerary(backend, x, partition, R, dt) -> Itinerary:
    """Labels of ``h_{i dt} x`` for ``i < ceil(R / dt)``."""
    x = np.asarray(x, dtype=float)
    lab = itineraries(x[None], partition, R, dt)[0]
    return Itinerary(lab, dt, R, x)


def itineraries(xs, partition, R, dt):
    """Label matrix, one row per base point (algebraic model)."""
    xs = np.ascontiguousarray(np.asarray(xs, dtype=float).reshape(-1, 2, 2))
    return orbit_labels(xs, sample_times(R, dt), *partition._args())


def boundary_occupancy(xs, partition, R, dt, r):
    """Time spent in ``V_r`` along ``[0, R]`` by each orbit (sample count
    times dt)."""
    xs = np.ascontiguousarray(np.asarray(xs, dtype=float).reshape(-1, 2, 2))
    hits = orbit_boundary(xs, sample_times(R, dt), float(r), *partition._args())
    return hits.sum(axis=1) * dt
