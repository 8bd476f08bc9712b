"""Discrete matching of two label sequences of equal length n.

A matching is a monotone lattice path from (0, 0) to (n, n) built from

    M   (1, 1)  X[i] == Y[j]
    D12 (1, 2)  time change, stretches y
    D21 (2, 1)  time change, stretches x
    Sx  (1, 0)  x sample left unmatched
    Sy  (0, 1)  y sample left unmatched

Slope window: a D move must be preceded by at least ``L = floor(1/eps)``
consecutive M moves, all carrying the label the D move covers.  The L
M moves and the D move then form one linear piece of slope ``(L+2)/(L+1)``
or ``(L+1)/(L+2)``, both within eps of 1, on which labels agree pointwise.

Budget: fewer than ``eps * n`` unmatched samples on each axis, i.e. at most
``ceil(eps n) - 1`` Sx moves and as many Sy moves.

Negative labels never match anything (used for samples outside the core).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import DimensionMismatch, IncompatibleLength, SizeExceeded

M, D12, D21, SX, SY = 0, 1, 2, 3, 4
_INF = 1 << 30
_INF64 = 1 << 60
BRUTEFORCE_MAX = 14


def window(eps: float) -> int:
    return int(math.floor(1.0 / eps + 1e-12))


def budget(eps: float, n: int) -> int:
    """Largest skip count strictly below ``eps * n``."""
    return max(0, int(math.ceil(eps * n - 1e-9)) - 1)


# -- dynamic program ---------------------------------------------------------

@njit(cache=True)
def _dp_table(X, Y, L, B):
    """Full table with parent records for traceback.

    ``V[i, j, c, sy] = W * Sx + nD`` with ``W = n + 1``: least Sx count
    reaching that state, ties broken by the fewest D moves so that equal
    sequences get the identity.
    """
    n = X.shape[0]
    W = n + 1
    V = np.full((n + 1, n + 1, L + 1, B + 1), _INF64, dtype=np.int64)
    pm = np.full((n + 1, n + 1, L + 1, B + 1), -1, dtype=np.int8)
    pc = np.zeros((n + 1, n + 1, L + 1, B + 1), dtype=np.int8)
    V[0, 0, 0, 0] = 0
    for i in range(n + 1):
        for j in range(n + 1):
            for c in range(L + 1):
                for sy in range(B + 1):
                    v = V[i, j, c, sy]
                    if v // W > B:
                        continue
                    if i < n and j < n and X[i] >= 0 and X[i] == Y[j]:
                        if c >= 1 and X[i] == X[i - 1]:
                            c2 = min(c + 1, L)
                        else:
                            c2 = 1
                        if v < V[i + 1, j + 1, c2, sy]:
                            V[i + 1, j + 1, c2, sy] = v
                            pm[i + 1, j + 1, c2, sy] = M
                            pc[i + 1, j + 1, c2, sy] = c
                    if c >= L and i < n and X[i] >= 0 and X[i] == X[i - 1]:
                        lab = X[i]
                        if j + 1 < n and Y[j] == lab and Y[j + 1] == lab:
                            if v + 1 < V[i + 1, j + 2, 0, sy]:
                                V[i + 1, j + 2, 0, sy] = v + 1
                                pm[i + 1, j + 2, 0, sy] = D12
                                pc[i + 1, j + 2, 0, sy] = c
                        if i + 1 < n and j < n and X[i + 1] == lab and Y[j] == lab:
                            if v + 1 < V[i + 2, j + 1, 0, sy]:
                                V[i + 2, j + 1, 0, sy] = v + 1
                                pm[i + 2, j + 1, 0, sy] = D21
                                pc[i + 2, j + 1, 0, sy] = c
                    if i < n and v // W + 1 <= B and v + W < V[i + 1, j, 0, sy]:
                        V[i + 1, j, 0, sy] = v + W
                        pm[i + 1, j, 0, sy] = SX
                        pc[i + 1, j, 0, sy] = c
                    if j < n and sy + 1 <= B and v < V[i, j + 1, 0, sy + 1]:
                        V[i, j + 1, 0, sy + 1] = v
                        pm[i, j + 1, 0, sy + 1] = SY
                        pc[i, j + 1, 0, sy + 1] = c
    return V, pm, pc


@njit(cache=True)
def _dp_feasible(X, Y, L, B):
    """Feasibility only, keeping three rows of the table."""
    n = X.shape[0]
    V = np.full((3, n + 1, L + 1, B + 1), _INF, dtype=np.int32)
    V[0, 0, 0, 0] = 0
    for i in range(n + 1):
        r0 = i % 3
        r1 = (i + 1) % 3
        r2 = (i + 2) % 3
        # row i+2 is reused storage from row i-1; clear it
        V[r2, :, :, :] = _INF
        for j in range(n + 1):
            for c in range(L + 1):
                for sy in range(B + 1):
                    v = V[r0, j, c, sy]
                    if v > B:
                        continue
                    if i < n and j < n and X[i] >= 0 and X[i] == Y[j]:
                        if c >= 1 and X[i] == X[i - 1]:
                            c2 = min(c + 1, L)
                        else:
                            c2 = 1
                        if v < V[r1, j + 1, c2, sy]:
                            V[r1, j + 1, c2, sy] = v
                    if c >= L and i < n and X[i] >= 0 and X[i] == X[i - 1]:
                        lab = X[i]
                        if j + 1 < n and Y[j] == lab and Y[j + 1] == lab:
                            if v < V[r1, j + 2, 0, sy]:
                                V[r1, j + 2, 0, sy] = v
                        if i + 1 < n and j < n and X[i + 1] == lab and Y[j] == lab:
                            if v < V[r2, j + 1, 0, sy]:
                                V[r2, j + 1, 0, sy] = v
                    if i < n and v + 1 <= B and v + 1 < V[r1, j, 0, sy]:
                        V[r1, j, 0, sy] = v + 1
                    if j < n and sy + 1 <= B and v < V[r0, j + 1, 0, sy + 1]:
                        V[r0, j + 1, 0, sy + 1] = v
        if i == n:
            best = _INF
            for c in range(L + 1):
                for sy in range(B + 1):
                    if V[r0, n, c, sy] < best:
                        best = V[r0, n, c, sy]
            return best <= B
    return False


@njit(cache=True)
def lcs_length(X, Y):
    n = X.shape[0]
    m = Y.shape[0]
    prev = np.zeros(m + 1, dtype=np.int32)
    cur = np.zeros(m + 1, dtype=np.int32)
    for i in range(n):
        cur[0] = 0
        for j in range(m):
            if X[i] >= 0 and X[i] == Y[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = max(prev[j + 1], cur[j])
        prev, cur = cur, prev
    return prev[m]


@njit(cache=True)
def _count_bound(X, Y, L):
    """Lower bounds on Sx and Sy from label counts alone.

    Per label a, x-matched minus y-matched is D21 - D12, and every D move
    needs L M moves before it, so x-matched_a <= y_a (L + 1) / L (and the
    same with x, y exchanged).  Negative labels are always skipped.
    """
    top = 0
    for i in range(X.shape[0]):
        top = max(top, X[i], Y[i])
    cx = np.zeros(top + 1, dtype=np.int64)
    cy = np.zeros(top + 1, dtype=np.int64)
    sx = sy = 0
    for i in range(X.shape[0]):
        if X[i] < 0:
            sx += 1
        else:
            cx[X[i]] += 1
        if Y[i] < 0:
            sy += 1
        else:
            cy[Y[i]] += 1
    for a in range(top + 1):
        sx += max(0, cx[a] - (cy[a] * (L + 1)) // L)
        sy += max(0, cy[a] - (cx[a] * (L + 1)) // L)
    return sx, sy


@njit(cache=True)
def _relaxed_skips(X, Y):
    """Least Sx + Sy over paths with D moves allowed anywhere labels permit
    (no window rule, no separate budgets): a lower bound for any valid path."""
    n = X.shape[0]
    V = np.full((n + 1, n + 1), _INF, dtype=np.int32)
    V[0, 0] = 0
    for i in range(n + 1):
        for j in range(n + 1):
            v = V[i, j]
            if v >= _INF:
                continue
            if i < n and j < n and X[i] >= 0 and X[i] == Y[j]:
                if v < V[i + 1, j + 1]:
                    V[i + 1, j + 1] = v
                if j + 1 < n and Y[j + 1] == X[i] and v < V[i + 1, j + 2]:
                    V[i + 1, j + 2] = v
                if i + 1 < n and X[i + 1] == X[i] and v < V[i + 2, j + 1]:
                    V[i + 2, j + 1] = v
            if i < n and v + 1 < V[i + 1, j]:
                V[i + 1, j] = v + 1
            if j < n and v + 1 < V[i, j + 1]:
                V[i, j + 1] = v + 1
    return V[n, n]


@njit(cache=True)
def _better(sa, ma, sb, mb):
    return sa < sb or (sa == sb and ma < mb)


@njit(cache=True)
def _minsum(X, Y, L, B):
    """Valid paths minimizing Sx + Sy (ties: smaller max(Sx, Sy)).

    Returns 1 when the tracked path fits both budgets, -1 when even the
    least total exceeds 2B, 0 when undecided.  Skips are not pruned
    against B here: the tracked pair is one representative per state, and
    cutting it could hide a different path with the same total.
    """
    n = X.shape[0]
    SXa = np.full((3, n + 1, L + 1), _INF, dtype=np.int64)
    SYa = np.full((3, n + 1, L + 1), _INF, dtype=np.int64)
    SXa[0, 0, 0] = 0
    SYa[0, 0, 0] = 0
    for i in range(n + 1):
        r0 = i % 3
        r1 = (i + 1) % 3
        r2 = (i + 2) % 3
        SXa[r2] = _INF
        SYa[r2] = _INF
        for j in range(n + 1):
            for c in range(L + 1):
                vx = SXa[r0, j, c]
                if vx >= _INF:
                    continue
                vy = SYa[r0, j, c]
                s = vx + vy
                mx = max(vx, vy)
                if i < n and j < n and X[i] >= 0 and X[i] == Y[j]:
                    if c >= 1 and X[i] == X[i - 1]:
                        c2 = min(c + 1, L)
                    else:
                        c2 = 1
                    if _better(s, mx, SXa[r1, j + 1, c2] + SYa[r1, j + 1, c2],
                               max(SXa[r1, j + 1, c2], SYa[r1, j + 1, c2])):
                        SXa[r1, j + 1, c2] = vx
                        SYa[r1, j + 1, c2] = vy
                if c >= L and i < n and X[i] >= 0 and X[i] == X[i - 1]:
                    lab = X[i]
                    if j + 1 < n and Y[j] == lab and Y[j + 1] == lab:
                        if _better(s, mx, SXa[r1, j + 2, 0] + SYa[r1, j + 2, 0],
                                   max(SXa[r1, j + 2, 0], SYa[r1, j + 2, 0])):
                            SXa[r1, j + 2, 0] = vx
                            SYa[r1, j + 2, 0] = vy
                    if i + 1 < n and j < n and X[i + 1] == lab and Y[j] == lab:
                        if _better(s, mx, SXa[r2, j + 1, 0] + SYa[r2, j + 1, 0],
                                   max(SXa[r2, j + 1, 0], SYa[r2, j + 1, 0])):
                            SXa[r2, j + 1, 0] = vx
                            SYa[r2, j + 1, 0] = vy
                if i < n:
                    if _better(s + 1, max(vx + 1, vy), SXa[r1, j, 0] + SYa[r1, j, 0],
                               max(SXa[r1, j, 0], SYa[r1, j, 0])):
                        SXa[r1, j, 0] = vx + 1
                        SYa[r1, j, 0] = vy
                if j < n:
                    if _better(s + 1, max(vx, vy + 1), SXa[r0, j + 1, 0] + SYa[r0, j + 1, 0],
                               max(SXa[r0, j + 1, 0], SYa[r0, j + 1, 0])):
                        SXa[r0, j + 1, 0] = vx
                        SYa[r0, j + 1, 0] = vy + 1
        if i == n:
            bs = _INF
            bm = _INF
            for c in range(L + 1):
                vx = SXa[r0, n, c]
                if vx >= _INF:
                    continue
                vy = SYa[r0, n, c]
                if _better(vx + vy, max(vx, vy), bs, bm):
                    bs = vx + vy
                    bm = max(vx, vy)
            if bm <= B:
                return 1
            if bs > 2 * B:
                return -1
            return 0
    return 0


@njit(cache=True)
def feasible_fast(X, Y, L, B):
    """Same verdict as the full program, trying cheaper bounds first."""
    n = X.shape[0]
    bx, by = _count_bound(X, Y, L)
    if bx > B or by > B:
        return False
    if n - lcs_length(X, Y) <= B:
        return True
    if _relaxed_skips(X, Y) > 2 * B:
        return False
    r = _minsum(X, Y, L, B)
    if r != 0:
        return r > 0
    return _dp_feasible(X, Y, L, B)


@njit(cache=True)
def feasible_matrix(labels, L, B, symmetric):
    """Pairwise verdicts for a stack of itineraries (rows)."""
    N = labels.shape[0]
    out = np.zeros((N, N), dtype=np.bool_)
    for a in range(N):
        out[a, a] = True
        start = a + 1 if symmetric else 0
        for b in range(start, N):
            if a == b:
                continue
            f = feasible_fast(labels[a], labels[b], L, B)
            out[a, b] = f
            if symmetric:
                out[b, a] = f
    return out


@njit(cache=True)
def feasible_against(center, labels, L, B):
    out = np.zeros(labels.shape[0], dtype=np.bool_)
    for b in range(labels.shape[0]):
        out[b] = feasible_fast(labels[b], center, L, B)
    return out


# -- brute force -------------------------------------------------------------

@njit(cache=True)
def _bruteforce(X, Y, L, B, seen, stamp):
    """Depth-first enumeration of move sequences.

    ``seen`` is a transposition table over full search states
    ``(i, j, c, sx, sy)``: a state already entered in this call (``seen ==
    stamp``) either lies on the current path or was exhausted without
    reaching (n, n), so it is not expanded again.  No value comparison is
    made between states.
    """
    n = X.shape[0]
    n1 = n + 1
    depth_max = 2 * n + 2
    si = np.zeros(depth_max, dtype=np.int64)
    sj = np.zeros(depth_max, dtype=np.int64)
    sc = np.zeros(depth_max, dtype=np.int64)
    sx = np.zeros(depth_max, dtype=np.int64)
    sy = np.zeros(depth_max, dtype=np.int64)
    nxt = np.zeros(depth_max, dtype=np.int64)
    d = 0
    while d >= 0:
        i, j, c = si[d], sj[d], sc[d]
        if i == n and j == n:
            return True
        mv = nxt[d]
        if mv > SY:
            d -= 1
            continue
        nxt[d] = mv + 1
        ni, nj, nc, nsx, nsy = i, j, 0, sx[d], sy[d]
        ok = False
        if mv == M:
            if i < n and j < n and X[i] >= 0 and X[i] == Y[j]:
                ok = True
                ni, nj = i + 1, j + 1
                # run continues only after an M move carrying the same label
                if c >= 1 and X[i] == X[i - 1]:
                    nc = min(c + 1, L)
                else:
                    nc = 1
        elif mv == D12:
            if c >= L and i < n and j + 1 < n and X[i] >= 0 and X[i] == X[i - 1] \
                    and Y[j] == X[i] and Y[j + 1] == X[i]:
                ok = True
                ni, nj = i + 1, j + 2
        elif mv == D21:
            if c >= L and i + 1 < n and j < n and X[i] >= 0 and X[i] == X[i - 1] \
                    and X[i + 1] == X[i] and Y[j] == X[i]:
                ok = True
                ni, nj = i + 2, j + 1
        elif mv == SX:
            if i < n and sx[d] + 1 <= B:
                ok = True
                ni, nsx = i + 1, sx[d] + 1
        else:
            if j < n and sy[d] + 1 <= B:
                ok = True
                nj, nsy = j + 1, sy[d] + 1
        if ok:
            key = (((ni * n1 + nj) * (L + 1) + nc) * (B + 1) + nsx) * (B + 1) + nsy
            if seen[key] == stamp:
                continue
            seen[key] = stamp
            d += 1
            si[d], sj[d], sc[d], sx[d], sy[d] = ni, nj, nc, nsx, nsy
            nxt[d] = 0
    return False


def bruteforce_table(n, L, B):
    return np.zeros((n + 1) ** 2 * (L + 1) * (B + 1) ** 2, dtype=np.int64)


def fR_bruteforce(x, y, eps: float) -> bool:
    X, Y = _prep(x, y)
    if X.shape[0] > BRUTEFORCE_MAX:
        raise SizeExceeded(f"brute force is limited to length {BRUTEFORCE_MAX}")
    n = X.shape[0]
    L, B = window(eps), budget(eps, n)
    return bool(_bruteforce(X, Y, L, B, bruteforce_table(n, L, B), 1))


# -- matching maps -----------------------------------------------------------

@dataclass
class MatchingMap:
    """Piecewise-linear increasing map on the matched domain.

    ``segments`` rows ``(a, b, c, d)`` map ``[a, b]`` linearly onto
    ``[c, d]``; rows are increasing in both columns pairs.  Times are in the
    units of ``R``.
    """

    segments: np.ndarray
    R: float
    eps: float
    moves: np.ndarray | None = field(default=None, repr=False)

    @property
    def slopes(self):
        s = self.segments
        return (s[:, 3] - s[:, 2]) / (s[:, 1] - s[:, 0])

    @property
    def breakpoints(self):
        return self.segments[:, [0, 2]]

    @property
    def domain_measure(self) -> float:
        return float(np.sum(self.segments[:, 1] - self.segments[:, 0]))

    @property
    def image_measure(self) -> float:
        return float(np.sum(self.segments[:, 3] - self.segments[:, 2]))

    def matched_domain(self):
        """Matched set A as a merged interval list."""
        return _merge(self.segments[:, :2])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = self.segments
        k = np.clip(np.searchsorted(s[:, 0], t, side="right") - 1, 0, len(s) - 1)
        inside = (t >= s[k, 0]) & (t <= s[k, 1])
        val = s[k, 2] + (t - s[k, 0]) * (s[k, 3] - s[k, 2]) / (s[k, 1] - s[k, 0])
        return np.where(inside, val, np.nan)

    @classmethod
    def identity(cls, R, eps):
        return cls(np.array([[0.0, R, 0.0, R]]), R, eps)


def _merge(iv):
    out = []
    for a, b in iv:
        if out and a <= out[-1][1] + 1e-12:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.array(out).reshape(-1, 2)


def _prep(x, y):
    X = np.ascontiguousarray(getattr(x, "labels", x), dtype=np.int64)
    Y = np.ascontiguousarray(getattr(y, "labels", y), dtype=np.int64)
    if X.shape != Y.shape or X.ndim != 1:
        raise DimensionMismatch(f"label sequences differ in shape: {X.shape} vs {Y.shape}")
    dx, dy = getattr(x, "dt", None), getattr(y, "dt", None)
    if dx is not None and dy is not None and not math.isclose(dx, dy):
        raise DimensionMismatch("itineraries use different sampling steps")
    return X, Y


def _traceback(pm, pc, n, c, sy):
    moves = []
    i = j = n
    while i > 0 or j > 0:
        mv = pm[i, j, c, sy]
        cprev = pc[i, j, c, sy]
        moves.append((mv, i, j))
        if mv == M:
            i, j = i - 1, j - 1
        elif mv == D12:
            i, j = i - 1, j - 2
        elif mv == D21:
            i, j = i - 2, j - 1
        elif mv == SX:
            i -= 1
        else:
            j -= 1
            sy -= 1
        c = cprev
    moves.reverse()
    # rows (move, i0, j0): start of each move
    out = []
    for mv, i1, j1 in moves:
        di, dj = {M: (1, 1), D12: (1, 2), D21: (2, 1), SX: (1, 0), SY: (0, 1)}[mv]
        out.append((mv, i1 - di, j1 - dj))
    return np.array(out, dtype=np.int64).reshape(-1, 3)


def segments_from_moves(moves, L, dt):
    """Linear pieces of the map: each D move absorbs the L M moves before it."""
    segs = []
    for mv, i, j in moves:
        if mv == M:
            segs.append([i, i + 1, j, j + 1])
        elif mv in (D12, D21):
            for _ in range(L):
                segs.pop()
            di, dj = (1, 2) if mv == D12 else (2, 1)
            segs.append([i - L, i + di, j - L, j + dj])
    segs = np.array(segs, dtype=float).reshape(-1, 4)
    # merge contiguous unit-slope pieces
    merged = []
    for s in segs:
        if merged:
            p = merged[-1]
            if p[1] == s[0] and p[3] == s[2] and p[1] - p[0] == p[3] - p[2] \
                    and s[1] - s[0] == s[3] - s[2]:
                p[1], p[3] = s[1], s[3]
                continue
        merged.append(list(s))
    return np.array(merged, dtype=float).reshape(-1, 4) * dt


def fR_upper(x, y, eps: float, *, dt: float | None = None, with_map: bool = True):
    """Dynamic-program matching verdict and, if feasible, its certificate.

    ``x`` and ``y`` are label arrays or :class:`Itinerary` objects.  Returns
    ``(feasible, MatchingMap or None)``.
    """
    X, Y = _prep(x, y)
    n = X.shape[0]
    dt = getattr(x, "dt", None) if dt is None else dt
    dt = 1.0 if dt is None else dt
    L, B = window(eps), budget(eps, n)
    if not with_map:
        return bool(feasible_fast(X, Y, L, B)), None
    V, pm, pc = _dp_table(X, Y, L, B)
    W = n + 1
    end = V[n, n]
    if end.min() // W > B:
        return False, None
    # fewest skips on both axes, then fewest D moves
    skips = end // W + np.arange(B + 1)[None, :]
    key = np.where(end // W <= B, skips * W + end % W, _INF64)
    c, sy = np.unravel_index(np.argmin(key), key.shape)
    moves = _traceback(pm, pc, n, int(c), int(sy))
    return True, MatchingMap(segments_from_moves(moves, L, dt), n * dt, eps, moves)


def fR_value(x, y, grid=np.linspace(0.05, 0.95, 19)):
    """Smallest eps on the grid at which the pair is matchable (inf if none).

    Feasibility is monotone in eps, so a bisection over the grid suffices.
    """
    X, Y = _prep(x, y)
    n = X.shape[0]
    grid = np.asarray(grid)
    lo, hi = 0, len(grid)
    while lo < hi:
        mid = (lo + hi) // 2
        e = grid[mid]
        if feasible_fast(X, Y, window(e), budget(e, n)):
            hi = mid
        else:
            lo = mid + 1
    return float(grid[lo]) if lo < len(grid) else math.inf


# -- certificates ------------------------------------------------------------

@dataclass
class CheckResult:
    ok: bool
    reasons: list

    def __bool__(self):
        return self.ok


def check_matching(mmap: MatchingMap, eps: float, labels_x=None, labels_y=None,
                   dt: float | None = None, atol: float = 1e-9) -> CheckResult:
    """Independent verification of a matching certificate.

    Checks monotonicity, the slope bound on every piece, the measures of
    the domain and image, and (with labels) pointwise label agreement,
    labels being constant on sampling cells of length ``dt``.
    """
    s = np.asarray(mmap.segments, dtype=float)
    R = mmap.R
    why = []
    if len(s) == 0:
        return CheckResult(False, ["empty map"])
    if np.any(s[:, 1] <= s[:, 0]) or np.any(s[:, 3] <= s[:, 2]):
        why.append("degenerate or decreasing piece")
    if np.any(s[1:, 0] < s[:-1, 1] - atol) or np.any(s[1:, 2] < s[:-1, 3] - atol):
        why.append("pieces overlap or are out of order")
    if s[:, [0, 2]].min() < -atol or s[:, [1, 3]].max() > R + atol:
        why.append("piece outside [0, R]")
    slopes = (s[:, 3] - s[:, 2]) / (s[:, 1] - s[:, 0])
    if np.max(np.abs(slopes - 1.0)) >= eps:
        why.append(f"slope deviation {np.max(np.abs(slopes - 1.0)):.4g} >= {eps}")
    dom = np.sum(s[:, 1] - s[:, 0])
    img = np.sum(s[:, 3] - s[:, 2])
    if dom <= (1.0 - eps) * R:
        why.append(f"domain measure {dom:.4g} <= (1 - eps) R")
    if img <= (1.0 - eps) * R:
        why.append(f"image measure {img:.4g} <= (1 - eps) R")
    if labels_x is not None:
        lx = np.asarray(labels_x)
        ly = np.asarray(labels_y)
        bad = _label_disagreement(s, lx, ly, dt)
        if bad > atol:
            why.append(f"labels disagree on measure {bad:.4g}")
    return CheckResult(not why, why)


def _label_disagreement(s, lx, ly, dt):
    bad = 0.0
    for a, b, c, d in s:
        k = (d - c) / (b - a)
        cuts = [a, b]
        cuts += [t * dt for t in range(int(math.ceil(a / dt)), int(math.floor(b / dt)) + 1)]
        cuts += [a + (t * dt - c) / k for t in range(int(math.ceil(c / dt)), int(math.floor(d / dt)) + 1)]
        cuts = np.unique(np.clip(cuts, a, b))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi - lo <= 1e-12:
                continue
            mid = 0.5 * (lo + hi)
            ix = min(int(mid / dt), len(lx) - 1)
            iy = min(int((c + (mid - a) * k) / dt), len(ly) - 1)
            if lx[ix] < 0 or lx[ix] != ly[iy]:
                bad += hi - lo
    return bad


def compose(map1: MatchingMap, map2: MatchingMap) -> MatchingMap:
    """``psi2 o psi1`` on ``A1 cap psi1^-1(A2)``."""
    if not math.isclose(map1.R, map2.R):
        raise IncompatibleLength(f"R differs: {map1.R} vs {map2.R}")
    s1, s2 = map1.segments, map2.segments
    out = []
    p = q = 0
    while p < len(s1) and q < len(s2):
        a, b, c, d = s1[p]
        a2, b2, c2, d2 = s2[q]
        lo, hi = max(c, a2), min(d, b2)
        if hi > lo:
            k1 = (d - c) / (b - a)
            k2 = (d2 - c2) / (b2 - a2)
            out.append([a + (lo - c) / k1, a + (hi - c) / k1,
                        c2 + (lo - a2) * k2, c2 + (hi - a2) * k2])
        if d < b2:
            p += 1
        else:
            q += 1
    return MatchingMap(np.array(out, dtype=float).reshape(-1, 4), map1.R,
                       5.0 * max(map1.eps, map2.eps))


def quasi_triangle_check(map1: MatchingMap, map2: MatchingMap, labels_x=None,
                         labels_z=None, dt=None):
    """Compose two certificates and verify the result at five times the
    larger quality.  Returns ``(composed map, CheckResult)``."""
    comp = compose(map1, map2)
    return comp, check_matching(comp, comp.eps, labels_x, labels_z, dt)


# -- oracle sweeps -----------------------------------------------------------

@njit(cache=True)
def _threshold(X, Y, Ls, Bs):
    """First grid index at which the program finds a matching (len if none)."""
    lo, hi = 0, Ls.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible_fast(X, Y, Ls[mid], Bs[mid]):
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _exhaustive_binary(n, Ls, Bs, seen):
    """All binary pairs of length n, one per orbit of the label swap and the
    x/y exchange.  Returns (orbits, pairs covered, mismatches)."""
    mask = (1 << n) - 1
    total = 1 << (2 * n)
    orbits = 0
    covered = 0
    bad = 0
    stamp = 0
    X = np.empty(n, dtype=np.int64)
    Y = np.empty(n, dtype=np.int64)
    for code in range(total):
        cx = code >> n
        cy = code & mask
        v1 = ((cx ^ mask) << n) | (cy ^ mask)
        v2 = (cy << n) | cx
        v3 = ((cy ^ mask) << n) | (cx ^ mask)
        if v1 < code or v2 < code or v3 < code:
            continue
        size = 1 + (v1 != code) + (v2 != code and v2 != v1) \
            + (v3 != code and v3 != v1 and v3 != v2)
        orbits += 1
        covered += size
        for i in range(n):
            X[i] = (cx >> i) & 1
            Y[i] = (cy >> i) & 1
        t = _threshold(X, Y, Ls, Bs)
        if t < Ls.shape[0]:
            stamp += 1
            if not _bruteforce(X, Y, Ls[t], Bs[t], seen, stamp):
                bad += 1
        if t > 0:
            stamp += 1
            if _bruteforce(X, Y, Ls[t - 1], Bs[t - 1], seen, stamp):
                bad += 1
    return orbits, covered, bad


def exhaustive_agreement(max_len=12, eps_grid=np.arange(1, 10) / 10.0):
    """Compare the program with the brute force on every binary pair.

    Both verdicts are monotone in eps (larger eps only relaxes the window
    and the budgets) and invariant under swapping the two labels or the two
    sequences, so per orbit it suffices to check that the brute force agrees
    on both sides of the program's eps threshold.

    Returns a list of ``(n, orbits, pairs covered, mismatches)``.
    """
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))
    out = []
    for n in range(1, max_len + 1):
        Ls = np.array([window(e) for e in eps_grid], dtype=np.int64)
        Bs = np.array([budget(e, n) for e in eps_grid], dtype=np.int64)
        seen = bruteforce_table(n, int(Ls.max()), int(Bs.max()))
        out.append((n, *_exhaustive_binary(n, Ls, Bs, seen)))
    return out


def random_agreement(n_instances, rng, alphabet=4, max_len=12,
                     eps_grid=np.arange(1, 10) / 10.0):
    """Every eps on the grid, random pairs (half of them perturbed copies so
    that both verdicts occur).  Returns the list of mismatching cases."""
    bad = []
    seen = bruteforce_table(max_len, window(min(eps_grid)), budget(max(eps_grid), max_len))
    stamp = 0
    for _ in range(n_instances):
        n = int(rng.integers(1, max_len + 1))
        X = rng.integers(0, alphabet, n)
        if rng.random() < 0.5:
            Y = rng.integers(0, alphabet, n)
        else:
            Y = np.repeat(X, rng.integers(1, 3, n))[:n].copy()
            flip = rng.random(n) < 0.15
            Y[flip] = rng.integers(0, alphabet, flip.sum())
        for e in eps_grid:
            L, B = window(e), budget(e, n)
            stamp += 1
            a = bool(feasible_fast(X, Y, L, B))
            b = bool(_bruteforce(X, Y, L, B, seen, stamp))
            if a != b:
                bad.append((X, Y, float(e), a, b))
    return bad


def _runs(rng, n, alphabet, mean_run):
    """Piecewise-constant label sequence with geometric run lengths."""
    out = np.empty(0, dtype=np.int64)
    while len(out) < n:
        out = np.concatenate([out, np.full(int(rng.geometric(1.0 / mean_run)),
                                           rng.integers(0, alphabet))])
    return out[:n]


def _jitter(rng, X, p_run, p_flip, alphabet):
    """Neighbour of X: run lengths moved by one sample, a few labels flipped."""
    cuts = np.flatnonzero(np.diff(X)) + 1
    lens = np.diff(np.concatenate([[0], cuts, [len(X)]]))
    lens = lens + rng.choice([-1, 0, 1], len(lens), p=[p_run / 2, 1 - p_run, p_run / 2])
    vals = X[np.concatenate([[0], cuts])]
    Y = np.repeat(vals, np.maximum(lens, 1))
    Y = np.concatenate([Y, np.full(max(0, len(X) - len(Y)), Y[-1])])[:len(X)]
    flip = rng.random(len(Y)) < p_flip
    Y[flip] = rng.integers(0, alphabet, flip.sum())
    return Y


def quasi_triangle_trials(n_trials, rng, eps=0.1, n=100, alphabet=4, mean_run=12.0,
                          max_draws=100):
    """Composed certificates for triples ``x, y, z`` of synthetic itineraries
    with ``y`` matched to ``x`` and ``z`` to ``y`` at ``eps``.

    Returns ``(verified, trials, draws)``: how many compositions pass the
    independent check at ``5 eps``, how many were built, and how many
    triples were drawn to find matchable ones.
    """
    ok = done = draws = 0
    while done < n_trials:
        draws += 1
        if draws > max_draws * n_trials:
            break
        X = _runs(rng, n, alphabet, mean_run)
        Y = _jitter(rng, X, 0.3, 0.01, alphabet)
        Z = _jitter(rng, Y, 0.3, 0.01, alphabet)
        f1, m1 = fR_upper(X, Y, eps)
        if not f1:
            continue
        f2, m2 = fR_upper(Y, Z, eps)
        if not f2:
            continue
        _, res = quasi_triangle_check(m1, m2, X, Z, dt=1.0)
        ok += bool(res)
        done += 1
    return ok, done, draws
