"""Constant-curvature model: SL(2,R) modulo SL(2,Z) acting on the left.

Generator convention (right multiplication, applied in the order written
for compositions ``g_u h_v k_w y = y U(w) L(v) A(u)``)::

    g_s : A(s) = diag(e^{s/2}, e^{-s/2})
    h_t : L(t) = [[1, 0], [t, 1]]
    k_t : U(t) = [[1, t], [0, 1]]

With this choice ``A(-s) L(t) A(s) = L(e^s t)`` and ``A(-s) U(t) A(s) =
U(e^-s t)``, so ``g_s h_t = h_{e^s t} g_s`` and ``g_s k_t = k_{e^-s t} g_s``
hold exactly, and the Haar measure in chart coordinates is ``du dv dw``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import _alg_kernels as K
from .errors import DeterminantOutOfRange, LocalityViolated, OutOfChart
from .flows import FlowBackend, HolonomyTriple, LocalCoords, SolverConfig

SQRT3_2 = math.sqrt(3.0) / 2.0


def A(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (2, 2))
    out[..., 0, 0] = np.exp(0.5 * s)
    out[..., 1, 1] = np.exp(-0.5 * s)
    return out


def L(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 0] = t
    return out


def U(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 0, 1] = t
    return out


def chart_matrix(u, v, w):
    """``U(w) L(v) A(u)``, the right factor of ``g_u h_v k_w``."""
    return U(w) @ L(v) @ A(u)


def _as_batch(m):
    m = np.asarray(m, dtype=float)
    return m.reshape(-1, 2, 2), m.shape[:-2]


def reduce(m, *, check=True):
    """Canonical coset representative (Gauss-reduced rows, first row shortest).

    Works on a single matrix or on any stack ``(..., 2, 2)``.
    """
    flat, shape = _as_batch(m)
    if check:
        det = flat[:, 0, 0] * flat[:, 1, 1] - flat[:, 0, 1] * flat[:, 1, 0]
        if flat.shape[0] and np.max(np.abs(det - 1.0)) >= 1e-9:
            raise DeterminantOutOfRange(f"|det - 1| = {np.max(np.abs(det - 1.0)):.3g}")
    return K.reduce_batch(np.ascontiguousarray(flat)).reshape(shape + (2, 2))


def domain_coords(m):
    """Fundamental-domain coordinates ``(X, Y, theta)`` of any representatives."""
    flat, shape = _as_batch(m)
    r = K.reduce_batch(np.ascontiguousarray(flat))
    return K.domain_coords_batch(r).reshape(shape + (3,))


def closed_form_holonomy(s: float, t: float) -> HolonomyTriple:
    """``L(s) U(tau) A(rho) = U(t) L(sigma)`` solved by hand.

    Comparing entries: ``e^{rho/2} = 1/(1 - s t)``, ``sigma = s e^{rho/2}``,
    ``tau = t e^{rho/2}``.
    """
    if abs(s * t) >= 1.0:
        raise LocalityViolated("closed form needs |s t| < 1")
    q = 1.0 - s * t
    return HolonomyTriple(-2.0 * math.log(q), s / q, t / q)


def core_volume(core_norm: float) -> float:
    """Haar volume (chart units) of the points whose reduced matrix has
    Frobenius norm at most ``core_norm``.

    With Iwasawa coordinates the squared norm is ``(X^2 + Y^2 + 1) / Y`` and
    the Haar density is ``dX dY dtheta / Y^2`` with theta in [0, pi).
    """
    n2 = core_norm * core_norm

    def inv_ymax(X):
        return 2.0 / (n2 + math.sqrt(n2 * n2 - 4.0 * (1.0 + X * X)))

    cusp, _ = integrate.quad(inv_ymax, -0.5, 0.5, epsabs=1e-13)
    return math.pi * (math.pi / 3.0 - cusp)


@dataclass(frozen=True)
class AlgebraicBackend(FlowBackend):
    """Exact flows on SL(2,R)/SL(2,Z).

    Points are 2x2 matrices; any lift of the coset is accepted and the
    flows return (unreduced) lifts.  ``core_norm`` bounds the Frobenius
    norm of reduced representatives in the compact core used by the
    experiments; ``chart_radius`` bounds chart solves.
    """

    core_norm: float = 10.0
    chart_radius: float = 1.0
    tol: float = 1e-10
    solver: SolverConfig = field(default_factory=SolverConfig)
    name: str = "algebraic"
    entropy_u: float = 1.0
    entropy_s: float = -1.0

    # -- flows ------------------------------------------------------------
    def g(self, x, s):
        return np.asarray(x, dtype=float) @ A(s)

    def h(self, x, t):
        return np.asarray(x, dtype=float) @ L(t)

    def k(self, x, t):
        return np.asarray(x, dtype=float) @ U(t)

    def h_batch(self, x, ts):
        """``h_t x`` for every t, stacked."""
        return np.asarray(x, dtype=float) @ L(np.asarray(ts, dtype=float))

    def reconstruct(self, y, c):
        return np.asarray(y, dtype=float) @ chart_matrix(c.u, c.v, c.w)

    # -- geometry ---------------------------------------------------------
    def reduce(self, m):
        return reduce(m)

    def in_core(self, m):
        r = reduce(m)
        return np.sqrt(np.sum(r * r, axis=(-2, -1))) <= self.core_norm

    def distance(self, x, y) -> float:
        d = self.distance_batch(np.asarray(x)[None], np.asarray(y)[None])
        return float(d[0])

    def distance_batch(self, x, y):
        xr = K.reduce_batch(np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2, 2)))
        yr = K.reduce_batch(np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1, 2, 2)))
        return K.distance_batch(xr, yr)

    def local_coords(self, x, y) -> LocalCoords:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        # same lift: the decomposition of y^-1 x is already the answer
        m = np.linalg.solve(y, x)
        if m[1, 1] < 0:
            m = -m
        if m[1, 1] > 0:
            c = LocalCoords(-2.0 * math.log(m[1, 1]), m[1, 0] * m[1, 1], m[0, 1] / m[1, 1])
            if c.sup() <= 0.5 * self.chart_radius:
                return c
        coords, found = self.local_coords_batch(x[None], y[None])
        if not found[0]:
            raise OutOfChart("points are farther apart than the chart radius")
        return LocalCoords(*map(float, coords[0]))

    def local_coords_batch(self, x, y, box=None):
        """Chart coordinates for stacks of pairs; ``found`` marks success.

        Without an explicit box the search runs over growing cubes up to
        the chart radius, so nearby pairs never depend on the candidate cap
        of a large search.
        """
        if box is not None:
            coords, found, _ = self.chart_search(x, y, box)
            return coords, found
        x = np.asarray(x, dtype=float).reshape(-1, 2, 2)
        y = np.broadcast_to(np.asarray(y, dtype=float), x.shape).reshape(-1, 2, 2)
        # same lifts first, as in local_coords
        m = np.linalg.solve(y, x)
        m = np.where(m[:, 1:2, 1:2] < 0, -m, m)
        with np.errstate(divide="ignore", invalid="ignore"):
            coords = np.column_stack([-2.0 * np.log(m[:, 1, 1]), m[:, 1, 0] * m[:, 1, 1],
                                      m[:, 0, 1] / m[:, 1, 1]])
        found = (m[:, 1, 1] > 0) & (np.max(np.abs(coords), axis=1) <= 0.5 * self.chart_radius)
        coords[~found] = 0.0
        for r in self._search_radii():
            todo = np.flatnonzero(~found)
            if len(todo) == 0:
                break
            c, f, _ = self.chart_search(x[todo], y[todo], (r, r, r))
            coords[todo[f]] = c[f]
            found[todo[f]] = True
        return coords, found

    def _search_radii(self):
        return [r for r in (1e-2, 1e-1) if r < self.chart_radius] + [self.chart_radius]

    def chart_search(self, x, y, box):
        """Batched chart solve restricted to the box ``|u|<=box[0]`` etc.

        Returns ``(coords, found, n_in_box)``; ``n_in_box`` counts distinct
        coset decompositions inside the box (more than one means the box is
        not injectively embedded around that point).
        """
        xr = K.reduce_batch(np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2, 2)))
        yr = K.reduce_batch(np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1, 2, 2)))
        return K.chart_search_batch(xr, yr, float(box[0]), float(box[1]), float(box[2]))

    def closed_form_holonomy(self, s, t):
        return closed_form_holonomy(s, t)

    # -- sampling ---------------------------------------------------------
    def haar_sample(self, rng: np.random.Generator, n: int | None = None):
        """Invariant-volume samples of the compact core (reduced matrices).

        Draws (X, 1/Y, theta) uniformly on the fundamental domain, where
        the Haar density ``dX dY dtheta / Y^2`` is flat, and rejects points
        outside the domain or the core.
        """
        want = 1 if n is None else n
        out = np.empty((0, 2, 2))
        ymax = self.core_norm ** 2
        while out.shape[0] < want:
            m = max(64, int(1.3 * (want - out.shape[0])))
            X = rng.uniform(-0.5, 0.5, m)
            eta = rng.uniform(1.0 / ymax, 1.0 / SQRT3_2, m)
            th = rng.uniform(0.0, math.pi, m)
            Y = 1.0 / eta
            keep = X * X + Y * Y >= 1.0
            X, Y, th = X[keep], Y[keep], th[keep]
            mats = iwasawa(X, Y, th)
            r = K.reduce_batch(np.ascontiguousarray(mats))
            r = r[np.sqrt(np.sum(r * r, axis=(1, 2))) <= self.core_norm]
            out = np.concatenate([out, r])
        out = out[:want]
        return out[0] if n is None else out

    @property
    def volume(self) -> float:
        return core_volume(self.core_norm)

    def box_measure_ratio(self, x, box, n, rng):
        """Empirical invariant mass of the chart box with side lengths
        ``(a, b, c)`` centred at x, divided by ``a b c / volume``.

        Returns ``(ratio, standard error, largest decomposition count)``;
        a count above 1 means the box overlaps itself and the ratio is
        biased.
        """
        a, b, c = box
        ys = self.haar_sample(rng, n)
        xs = np.broadcast_to(np.asarray(x, dtype=float), ys.shape)
        _, found, nin = self.chart_search(ys, xs, (0.5 * a, 0.5 * b, 0.5 * c))
        p = float(found.mean())
        expect = a * b * c / self.volume
        se = math.sqrt(max(p * (1.0 - p), 1e-300) / n)
        return p / expect, se / expect, int(nin.max()) if len(nin) else 0


def iwasawa(X, Y, theta):
    """``n_X a_Y k_theta``, which maps i to X + iY."""
    X, Y, theta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (X, Y, theta)))
    sy = np.sqrt(Y)
    c, s = np.cos(theta), np.sin(theta)
    # a_Y k_theta = [[sy c, -sy s], [s/sy, c/sy]]
    out = np.empty(X.shape + (2, 2))
    out[..., 0, 0] = sy * c + X * s / sy
    out[..., 0, 1] = -sy * s + X * c / sy
    out[..., 1, 0] = s / sy
    out[..., 1, 1] = c / sy
    return out
