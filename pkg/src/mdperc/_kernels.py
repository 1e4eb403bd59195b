"""Numba kernels for the hot loops: BFS connectivity, evolution, escape times.

All kernels work on local (array) coordinates; callers translate from lattice
coordinates.  Grids are indexed [ix, iy] with ix along x and iy along y.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Neighbor offsets: N, E, S, W, then NE, SE, SW, NW.
_DX = np.array([0, 1, 0, -1, 1, 1, -1, -1], dtype=np.int64)
_DY = np.array([1, 0, -1, 0, 1, -1, -1, 1], dtype=np.int64)


@njit(cache=True)
def bfs_has_path(vals, window, src, tgt, state, star):
    """True iff a path of `state`-valued sites inside `window` joins src to tgt.

    vals, window, src, tgt: 2D arrays of identical shape (uint8/bool).
    star selects 8-neighbor adjacency, otherwise 4-neighbor.
    """
    w, h = vals.shape
    ndirs = 8 if star else 4
    visited = np.zeros((w, h), dtype=np.uint8)
    qx = np.empty(w * h, dtype=np.int64)
    qy = np.empty(w * h, dtype=np.int64)
    head = 0
    tail = 0
    for x in range(w):
        for y in range(h):
            if src[x, y] and window[x, y] and vals[x, y] == state:
                if tgt[x, y]:
                    return True
                visited[x, y] = 1
                qx[tail] = x
                qy[tail] = y
                tail += 1
    while head < tail:
        x = qx[head]
        y = qy[head]
        head += 1
        for d in range(ndirs):
            nx = x + _DX[d]
            ny = y + _DY[d]
            if nx < 0 or nx >= w or ny < 0 or ny >= h:
                continue
            if visited[nx, ny] or not window[nx, ny] or vals[nx, ny] != state:
                continue
            if tgt[nx, ny]:
                return True
            visited[nx, ny] = 1
            qx[tail] = nx
            qy[tail] = ny
            tail += 1
    return False


@njit(cache=True)
def evolve_inplace(grid, init_grid, rx, ry, accept, rule, vchoice, tie_to_initial):
    """Apply accepted rings in order on a padded grid; returns update count.

    grid: padded state, rim rows/columns are frozen boundary values and are
    never written (ring coordinates always point at interior sites).
    rule: 0 = majority with tie keeping, 1 = voter.
    """
    applied = 0
    for i in range(rx.shape[0]):
        if accept[i] == 0:
            continue
        x = rx[i]
        y = ry[i]
        if rule == 0:
            s = grid[x, y + 1] + grid[x + 1, y] + grid[x, y - 1] + grid[x - 1, y]
            if s >= 3:
                grid[x, y] = 1
            elif s <= 1:
                grid[x, y] = 0
            elif tie_to_initial:
                grid[x, y] = init_grid[x, y]
        else:
            d = vchoice[i]
            grid[x, y] = grid[x + _DX[d], y + _DY[d]]
        applied += 1
    return applied


@njit(cache=True)
def escape_times(rx, ry, rt, w, h):
    """First time each site's past data demand escapes the window.

    Rings must be sorted by increasing time.  A ring at (x, y, s) escapes if
    some nearest neighbor lies outside the grid or already escaped at a time
    <= s.  Returns a (w, h) float64 grid, +inf where the site is certified.
    """
    esc = np.full((w, h), np.inf, dtype=np.float64)
    for i in range(rx.shape[0]):
        x = rx[i]
        y = ry[i]
        if esc[x, y] <= rt[i]:
            continue
        for d in range(4):
            nx = x + _DX[d]
            ny = y + _DY[d]
            if nx < 0 or nx >= w or ny < 0 or ny >= h:
                esc[x, y] = rt[i]
                break
            if esc[nx, ny] <= rt[i]:
                esc[x, y] = rt[i]
                break
    return esc


@njit(cache=True)
def explore_clusters(vals, n, col_local, star, qx_buf, qy_buf):
    """Exploration from one column: queried mask, crossing bit.

    vals: (n, n) values on the crossing square in local coords, with 1 marking
    the explorable state (callers pre-flip for the closed-state variant and
    pre-transpose for the vertical variant).  Queries the column, then
    neighbors of explorable explored sites, until all explorable clusters
    meeting the column are exhausted.  Returns (queried, crossing).
    """
    ndirs = 8 if star else 4
    queried = np.zeros((n, n), dtype=np.uint8)
    explored = np.zeros((n, n), dtype=np.uint8)
    crossing = 0
    for y in range(n):
        queried[col_local, y] = 1
        explored[col_local, y] = 1
    for y0 in range(n):
        if vals[col_local, y0] != 1 or explored[col_local, y0] == 2:
            continue
        # flood one open cluster meeting the column; 2 marks cluster members
        head = 0
        tail = 0
        explored[col_local, y0] = 2
        qx_buf[tail] = col_local
        qy_buf[tail] = y0
        tail += 1
        hit_left = False
        hit_right = False
        while head < tail:
            x = qx_buf[head]
            y = qy_buf[head]
            head += 1
            if x == 0:
                hit_left = True
            if x == n - 1:
                hit_right = True
            for d in range(ndirs):
                nx = x + _DX[d]
                ny = y + _DY[d]
                if nx < 0 or nx >= n or ny < 0 or ny >= n:
                    continue
                queried[nx, ny] = 1
                if explored[nx, ny] == 2:
                    continue
                explored[nx, ny] = 1
                if vals[nx, ny] == 1:
                    explored[nx, ny] = 2
                    qx_buf[tail] = nx
                    qy_buf[tail] = ny
                    tail += 1
        if hit_left and hit_right:
            crossing = 1
    return queried, crossing
