"""Compiled loop kernels.  Signatures mirror :mod:`occmap.kernels_np`."""

import heapq
import math

import numpy as np

from ._jit import njit

SQRT2 = math.sqrt(2.0)
_INF = np.inf


@njit(cache=True)
def raycast(blocked, ox, oy, cell_size, x, y, dirx, diry, max_range):
    nx, ny = blocked.shape
    out = np.empty(dirx.shape[0])
    gx = (x - ox) / cell_size
    gy = (y - oy) / cell_size
    limit = max_range / cell_size
    for k in range(dirx.shape[0]):
        dx = dirx[k]
        dy = diry[k]
        ix = int(math.floor(gx))
        iy = int(math.floor(gy))
        if dx > 0:
            sx = 1
            tmx = (ix + 1 - gx) / dx
            tdx = 1.0 / dx
        elif dx < 0:
            sx = -1
            tmx = (gx - ix) / -dx
            tdx = -1.0 / dx
        else:
            sx = 0
            tmx = _INF
            tdx = _INF
        if dy > 0:
            sy = 1
            tmy = (iy + 1 - gy) / dy
            tdy = 1.0 / dy
        elif dy < 0:
            sy = -1
            tmy = (gy - iy) / -dy
            tdy = -1.0 / dy
        else:
            sy = 0
            tmy = _INF
            tdy = _INF
        hit = _INF
        while True:
            if tmx < tmy:
                t = tmx
                ix += sx
                tmx += tdx
            else:
                t = tmy
                iy += sy
                tmy += tdy
            if t > limit:
                break
            if ix < 0 or iy < 0 or ix >= nx or iy >= ny or blocked[ix, iy]:
                hit = t * cell_size
                break
        out[k] = hit
    return out


@njit(cache=True)
def traverse_local(side, cell_size, dirx, diry, ranges, cap):
    free = np.zeros((side, side), np.bool_)
    occ = np.zeros((side, side), np.bool_)
    start = side // 2 + 0.5
    for k in range(dirx.shape[0]):
        rng = ranges[k]
        length = min(rng, cap) / cell_size
        dr = -dirx[k]
        dc = -diry[k]
        r = side // 2
        c = side // 2
        if dr > 0:
            sr = 1
            tmr = (r + 1 - start) / dr
            tdr = 1.0 / dr
        elif dr < 0:
            sr = -1
            tmr = (start - r) / -dr
            tdr = -1.0 / dr
        else:
            sr = 0
            tmr = _INF
            tdr = _INF
        if dc > 0:
            sc = 1
            tmc = (c + 1 - start) / dc
            tdc = 1.0 / dc
        elif dc < 0:
            sc = -1
            tmc = (start - c) / -dc
            tdc = -1.0 / dc
        else:
            sc = 0
            tmc = _INF
            tdc = _INF
        free[r, c] = True
        while True:
            if tmr < tmc:
                t = tmr
                r += sr
                tmr += tdr
            else:
                t = tmc
                c += sc
                tmc += tdc
            if t > length or r < 0 or c < 0 or r >= side or c >= side:
                break
            free[r, c] = True
        if rng <= cap:
            tr = int(math.floor(start + dr * rng / cell_size))
            tc = int(math.floor(start + dc * rng / cell_size))
            if 0 <= tr < side and 0 <= tc < side:
                occ[tr, tc] = True
    return free, occ


@njit(cache=True)
def _octile(ax, ay, bx, by):
    dx = abs(ax - bx)
    dy = abs(ay - by)
    return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)


@njit(cache=True)
def astar(passable, sx, sy, gx, gy, weight):
    """Returns (parent array, cost); cost < 0 when the goal is unreachable."""
    nx, ny = passable.shape
    n = nx * ny
    g = np.full(n, _INF)
    parent = np.full(n, -1, np.int64)
    closed = np.zeros(n, np.bool_)
    start = sx * ny + sy
    goal = gx * ny + gy
    g[start] = 0.0
    h0 = _octile(sx, sy, gx, gy)
    heap = [(weight * h0, h0, start)]
    while len(heap) > 0:
        item = heapq.heappop(heap)
        cur = item[2]
        if closed[cur]:
            continue
        if cur == goal:
            return parent, g[cur]
        closed[cur] = True
        cx = cur // ny
        cy = cur % ny
        for ddx in range(-1, 2):
            for ddy in range(-1, 2):
                if ddx == 0 and ddy == 0:
                    continue
                mx = cx + ddx
                my = cy + ddy
                if mx < 0 or my < 0 or mx >= nx or my >= ny or not passable[mx, my]:
                    continue
                if ddx != 0 and ddy != 0:
                    if not passable[cx + ddx, cy] or not passable[cx, cy + ddy]:
                        continue
                    step = SQRT2
                else:
                    step = 1.0
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


@njit(cache=True)
def dijkstra(passable, sx, sy):
    nx, ny = passable.shape
    n = nx * ny
    dist = np.full(n, _INF)
    closed = np.zeros(n, np.bool_)
    start = sx * ny + sy
    dist[start] = 0.0
    heap = [(0.0, start)]
    while len(heap) > 0:
        item = heapq.heappop(heap)
        cur = item[1]
        if closed[cur]:
            continue
        closed[cur] = True
        cx = cur // ny
        cy = cur % ny
        for ddx in range(-1, 2):
            for ddy in range(-1, 2):
                if ddx == 0 and ddy == 0:
                    continue
                mx = cx + ddx
                my = cy + ddy
                if mx < 0 or my < 0 or mx >= nx or my >= ny or not passable[mx, my]:
                    continue
                if ddx != 0 and ddy != 0:
                    if not passable[cx + ddx, cy] or not passable[cx, cy + ddy]:
                        continue
                    step = SQRT2
                else:
                    step = 1.0
                nb = mx * ny + my
                cand = dist[cur] + step
                if cand < dist[nb]:
                    dist[nb] = cand
                    heapq.heappush(heap, (cand, nb))
    return dist.reshape((nx, ny))


@njit(cache=True)
def patch_logits(planes, weights, bias):
    """Zero-padded correlation of ``planes`` (F, V, V) with ``weights`` (C, F, k, k)."""
    nf, v, _ = planes.shape
    nc = weights.shape[0]
    k = weights.shape[2]
    half = k // 2
    out = np.empty((nc, v, v))
    for ch in range(nc):
        for r in range(v):
            for c in range(v):
                acc = bias[ch]
                for f in range(nf):
                    for a in range(k):
                        rr = r + a - half
                        if rr < 0 or rr >= v:
                            continue
                        for b in range(k):
                            cc = c + b - half
                            if cc < 0 or cc >= v:
                                continue
                            acc += weights[ch, f, a, b] * planes[f, rr, cc]
                out[ch, r, c] = acc
    return out


@njit(cache=True)
def scatter_local(valid, occ, exp, cell_size, subsample, px, py, theta, side, ox, oy):
    """Forward-map valid local (sub)cells to global cells; per-cell means of both channels.

    Returns sorted flat global indices with the averaged values.
    """
    v = valid.shape[0]
    h = v // 2
    c = math.cos(theta)
    s = math.sin(theta)
    n = side * side
    acc_o = np.zeros(n)
    acc_e = np.zeros(n)
    count = np.zeros(n, np.int64)
    hits = np.empty(v * v * subsample * subsample, np.int64)
    nh = 0
    for r in range(v):
        for col in range(v):
            if not valid[r, col]:
                continue
            for a in range(subsample):
                for b in range(subsample):
                    f = (h - r) * cell_size + -(((a + 0.5) / subsample - 0.5) * cell_size)
                    l = (h - col) * cell_size + -(((b + 0.5) / subsample - 0.5) * cell_size)
                    wx = px + c * f - s * l
                    wy = py + s * f + c * l
                    ix = int(math.floor((wx - ox) / cell_size))
                    iy = int(math.floor((wy - oy) / cell_size))
                    if ix < 0 or iy < 0 or ix >= side or iy >= side:
                        continue
                    k = ix * side + iy
                    if count[k] == 0:
                        hits[nh] = k
                        nh += 1
                    count[k] += 1
                    acc_o[k] += occ[r, col]
                    acc_e[k] += exp[r, col]
    idx = np.sort(hits[:nh])
    mo = np.empty(nh)
    me = np.empty(nh)
    for i in range(nh):
        k = idx[i]
        mo[i] = min(max(acc_o[k] / count[k], 0.0), 1.0)
        me[i] = min(max(acc_e[k] / count[k], 0.0), 1.0)
    return idx, mo, me
