"""Pure-numpy kernels, used when ``OCCMAP_NO_JIT`` is set.

The ray kernels march every ray in lock-step with the same arithmetic as the
compiled loops.  Ray directions arrive precomputed (compiled and libm sine
differ in the last bit), so both paths agree bit for bit.
"""

import heapq
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SQRT2 = math.sqrt(2.0)


def _dda_setup(g0, d, i0):
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.sign(d).astype(np.int64)
        tmax = np.where(d > 0, (i0 + 1 - g0) / d, np.where(d < 0, (g0 - i0) / -d, np.inf))
        tdelta = np.where(d > 0, 1.0 / d, np.where(d < 0, -1.0 / d, np.inf))
    return step, tmax, tdelta


def raycast(blocked, ox, oy, cell_size, x, y, dx, dy, max_range):
    nx, ny = blocked.shape
    n = dx.shape[0]
    gx = (x - ox) / cell_size
    gy = (y - oy) / cell_size
    limit = max_range / cell_size
    ix = np.full(n, int(math.floor(gx)), np.int64)
    iy = np.full(n, int(math.floor(gy)), np.int64)
    sx, tmx, tdx = _dda_setup(gx, dx, ix)
    sy, tmy, tdy = _dda_setup(gy, dy, iy)
    out = np.full(n, np.inf)
    active = np.ones(n, bool)
    while active.any():
        a = np.flatnonzero(active)
        xs = tmx[a] < tmy[a]
        ax, ay = a[xs], a[~xs]
        t = np.empty(a.size)
        t[xs] = tmx[ax]
        t[~xs] = tmy[ay]
        ix[ax] += sx[ax]
        tmx[ax] += tdx[ax]
        iy[ay] += sy[ay]
        tmy[ay] += tdy[ay]
        over = t > limit
        cx, cy = ix[a], iy[a]
        outside = (cx < 0) | (cy < 0) | (cx >= nx) | (cy >= ny)
        hit = np.zeros(a.size, bool)
        ok = ~outside
        hit[ok] = blocked[cx[ok], cy[ok]]
        hit |= outside
        hit &= ~over
        out[a[hit]] = t[hit] * cell_size
        active[a[hit | over]] = False
    return out


def traverse_local(side, cell_size, dx, dy, ranges, cap):
    free = np.zeros((side, side), bool)
    occ = np.zeros((side, side), bool)
    n = dx.shape[0]
    start = side // 2 + 0.5
    length = np.minimum(ranges, cap) / cell_size
    dr, dc = -dx, -dy
    r = np.full(n, side // 2, np.int64)
    c = np.full(n, side // 2, np.int64)
    sr, tmr, tdr = _dda_setup(start, dr, r)
    sc, tmc, tdc = _dda_setup(start, dc, c)
    free[side // 2, side // 2] = n > 0
    active = np.ones(n, bool)
    while active.any():
        a = np.flatnonzero(active)
        rs = tmr[a] < tmc[a]
        ar, ac = a[rs], a[~rs]
        t = np.empty(a.size)
        t[rs] = tmr[ar]
        t[~rs] = tmc[ac]
        r[ar] += sr[ar]
        tmr[ar] += tdr[ar]
        c[ac] += sc[ac]
        tmc[ac] += tdc[ac]
        rr, cc = r[a], c[a]
        stop = (t > length[a]) | (rr < 0) | (cc < 0) | (rr >= side) | (cc >= side)
        go = ~stop
        free[rr[go], cc[go]] = True
        active[a[stop]] = False
    hits = ranges <= cap
    with np.errstate(invalid="ignore"):
        tr = np.floor(start + dr[hits] * ranges[hits] / cell_size).astype(np.int64)
        tc = np.floor(start + dc[hits] * ranges[hits] / cell_size).astype(np.int64)
    ok = (tr >= 0) & (tr < side) & (tc >= 0) & (tc < side)
    occ[tr[ok], tc[ok]] = True
    return free, occ


def _octile(ax, ay, bx, by):
    dx = abs(ax - bx)
    dy = abs(ay - by)
    return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)


def _neighbours(passable, cx, cy):
    nx, ny = passable.shape
    for ddx in (-1, 0, 1):
        for ddy in (-1, 0, 1):
            if ddx == 0 and ddy == 0:
                continue
            mx, my = cx + ddx, cy + ddy
            if mx < 0 or my < 0 or mx >= nx or my >= ny or not passable[mx, my]:
                continue
            if ddx and ddy:
                if not passable[cx + ddx, cy] or not passable[cx, cy + ddy]:
                    continue
                yield mx, my, SQRT2
            else:
                yield mx, my, 1.0


def astar(passable, sx, sy, gx, gy, weight):
    nx, ny = passable.shape
    n = nx * ny
    g = np.full(n, np.inf)
    parent = np.full(n, -1, np.int64)
    closed = np.zeros(n, bool)
    start, goal = sx * ny + sy, gx * ny + gy
    g[start] = 0.0
    h0 = _octile(sx, sy, gx, gy)
    heap = [(weight * h0, h0, start)]
    while heap:
        _, _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        if cur == goal:
            return parent, g[cur]
        closed[cur] = True
        cx, cy = divmod(cur, ny)
        for mx, my, step in _neighbours(passable, cx, cy):
            nb = mx * ny + my
            if closed[nb]:
                continue
            cand = g[cur] + step
            if cand < g[nb]:
                g[nb] = cand
                parent[nb] = cur
                hh = _octile(mx, my, gx, gy)
                heapq.heappush(heap, (cand + weight * hh, hh, nb))
    return parent, -1.0


def dijkstra(passable, sx, sy):
    nx, ny = passable.shape
    dist = np.full(nx * ny, np.inf)
    closed = np.zeros(nx * ny, bool)
    start = sx * ny + sy
    dist[start] = 0.0
    heap = [(0.0, start)]
    while heap:
        d, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        closed[cur] = True
        cx, cy = divmod(cur, ny)
        for mx, my, step in _neighbours(passable, cx, cy):
            nb = mx * ny + my
            cand = d + step
            if cand < dist[nb]:
                dist[nb] = cand
                heapq.heappush(heap, (cand, nb))
    return dist.reshape(nx, ny)


def patch_logits(planes, weights, bias):
    k = weights.shape[2]
    half = k // 2
    padded = np.pad(planes, ((0, 0), (half, half), (half, half)))
    win = sliding_window_view(padded, (k, k), axis=(1, 2))  # (F, V, V, k, k)
    return np.einsum("fvuab,cfab->cvu", win, weights) + bias[:, None, None]


def scatter_local(valid, occ, exp, cell_size, subsample, px, py, theta, side, ox, oy):
    v = valid.shape[0]
    h = v // 2
    c, s = math.cos(theta), math.sin(theta)
    sub = -(((np.arange(subsample) + 0.5) / subsample - 0.5) * cell_size)
    r, col = np.nonzero(valid)
    f = ((h - r)[:, None, None] * cell_size + sub[None, :, None]).repeat(subsample, 2)
    l = ((h - col)[:, None, None] * cell_size + sub[None, None, :]).repeat(subsample, 1)
    wx = (px + c * f - s * l).ravel()
    wy = (py + s * f + c * l).ravel()
    ix = np.floor((wx - ox) / cell_size).astype(np.int64)
    iy = np.floor((wy - oy) / cell_size).astype(np.int64)
    inside = (ix >= 0) & (iy >= 0) & (ix < side) & (iy < side)
    m = subsample * subsample
    vo = np.repeat(occ[r, col], m)[inside]
    ve = np.repeat(exp[r, col], m)[inside]
    flat = (ix * side + iy)[inside]
    if flat.size == 0:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0)
    idx, inv = np.unique(flat, return_inverse=True)
    cnt = np.bincount(inv)
    mo = np.clip(np.bincount(inv, weights=vo) / cnt, 0.0, 1.0)
    me = np.clip(np.bincount(inv, weights=ve) / cnt, 0.0, 1.0)
    return idx, mo, me
