"""Compiled inner loops for the camera and sparse-code blocks.

These are straight ports of small scalar loops whose cost in plain Python is
dominated by interpreter overhead.  Inputs are contiguous float64 arrays.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _mv(M, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = M[i, 0] * v[0] + M[i, 1] * v[1] + M[i, 2] * v[2]
    return out


@njit(cache=True)
def _dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


@njit(cache=True)
def sphere_value(n, A, h, G, s):
    """``s sqrt(n'An + 2h'n) + 0.5 s^2 n'Gn`` (the root is clipped at 0)."""
    N = _dot(n, _mv(A, n)) + 2.0 * _dot(h, n)
    if N < 0.0:
        N = 0.0
    return s * math.sqrt(N) + 0.5 * s * s * _dot(n, _mv(G, n))


@njit(cache=True)
def grid_argmax(grid, A, h, G, s):
    best, arg = -np.inf, 0
    for i in range(grid.shape[0]):
        v = sphere_value(grid[i], A, h, G, s)
        if v > best:
            best, arg = v, i
    return arg


@njit(cache=True)
def newton_on_sphere(n0, A, h, G, s, iters):
    """Riemannian Newton ascent of :func:`sphere_value` from ``n0``.

    Uses a scaled gradient step wherever the tangent Hessian is not negative
    definite and backtracks so the value never decreases.
    Returns ``(n, value)``.
    """
    s2 = s * s
    n = n0 / math.sqrt(_dot(n0, n0))
    val = sphere_value(n, A, h, G, s)
    a = np.empty(3)
    b = np.empty(3)
    cand = np.empty(3)
    for _ in range(iters):
        An = _mv(A, n)
        Gn = _mv(G, n)
        N = _dot(n, An) + 2.0 * _dot(h, n)
        if N <= 1e-300:
            break
        sq = math.sqrt(N)
        gN = 2.0 * (An + h)
        grad = (s / (2.0 * sq)) * gN + s2 * Gn
        radial = _dot(n, grad)
        # tangent basis from the axis least aligned with n
        k = 0
        for i in range(1, 3):
            if abs(n[i]) < abs(n[k]):
                k = i
        e = np.zeros(3)
        e[k] = 1.0
        a[0] = e[1] * n[2] - e[2] * n[1]
        a[1] = e[2] * n[0] - e[0] * n[2]
        a[2] = e[0] * n[1] - e[1] * n[0]
        a /= math.sqrt(_dot(a, a))
        b[0] = n[1] * a[2] - n[2] * a[1]
        b[1] = n[2] * a[0] - n[0] * a[2]
        b[2] = n[0] * a[1] - n[1] * a[0]
        ga, gb = _dot(a, grad), _dot(b, grad)
        if math.hypot(ga, gb) <= 1e-15 * max(abs(val), 1e-300):
            break
        c2 = s / sq
        c3 = s / (4.0 * sq ** 3)
        agn, bgn = _dot(a, gN), _dot(b, gN)
        Aa, Ab, Ga, Gb = _mv(A, a), _mv(A, b), _mv(G, a), _mv(G, b)
        haa = c2 * _dot(a, Aa) - c3 * agn * agn + s2 * _dot(a, Ga) - radial
        hab = c2 * _dot(a, Ab) - c3 * agn * bgn + s2 * _dot(a, Gb)
        hbb = c2 * _dot(b, Ab) - c3 * bgn * bgn + s2 * _dot(b, Gb) - radial
        det = haa * hbb - hab * hab
        if haa < 0.0 and det > 0.0:
            da = -(hbb * ga - hab * gb) / det
            db = -(-hab * ga + haa * gb) / det
        else:
            curv = max(abs(haa) + abs(hab), abs(hbb) + abs(hab), 1e-300)
            da, db = ga / curv, gb / curv
        t = 1.0
        moved = False
        for _ in range(40):
            for i in range(3):
                cand[i] = n[i] + t * (da * a[i] + db * b[i])
            cand /= math.sqrt(_dot(cand, cand))
            cval = sphere_value(cand, A, h, G, s)
            if cval >= val:
                moved = cval > val or not (cand[0] == n[0] and cand[1] == n[1] and cand[2] == n[2])
                n = cand.copy()
                val = cval
                break
            t *= 0.5
        if not moved:
            break
    return n, val


@njit(cache=True)
def lasso_value(gram, corr, yy, c, alpha):
    k = c.shape[0]
    quad = 0.0
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += gram[i, j] * c[j]
        quad += c[i] * acc
    lin = 0.0
    l1 = 0.0
    for i in range(k):
        lin += c[i] * corr[i]
        l1 += abs(c[i])
    return 0.5 * quad - lin + 0.5 * yy + alpha * l1


@njit(cache=True)
def fista(gram, corr, c0, alpha, step, iters, tol):
    """FISTA on ``0.5 c'Gc - corr'c + alpha ||c||_1`` with a fixed step."""
    k = c0.shape[0]
    thresh = alpha * step
    c_prev = c0.copy()
    z = c0.copy()
    c = np.empty(k)
    t = 1.0
    for _ in range(iters):
        for i in range(k):
            g = -corr[i]
            for j in range(k):
                g += gram[i, j] * z[j]
            u = z[i] - step * g
            if u > thresh:
                c[i] = u - thresh
            elif u < -thresh:
                c[i] = u + thresh
            else:
                c[i] = 0.0
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        dd = 0.0
        cc = 0.0
        for i in range(k):
            d = c[i] - c_prev[i]
            z[i] = c[i] + mom * d
            dd += d * d
            cc += c[i] * c[i]
            c_prev[i] = c[i]
        t = t_next
        if math.sqrt(dd) < tol * max(1.0, math.sqrt(cc)):
            break
    return c_prev
