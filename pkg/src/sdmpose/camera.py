"""Weak-perspective projection and the exact camera block update.

The camera block minimises ``0.5 * ||X - A W||_F^2`` over matrices
``A = s * Q`` with ``s >= 0`` and ``Q`` a 2x3 matrix with orthonormal rows.
Writing ``n = q1 x q2`` for the viewing direction, both the in-plane angle
and the scale have closed forms, which leaves the ratio

    F(n) = (n' A n + 2 h' n) / (n' B n)        over unit vectors n

with ``A = ||M||^2 I - M'M``, ``h = m1 x m2``, ``B = tr(G) I - G``,
``M = X W'`` and ``G = W W'``.  The ratio is maximised globally by
Dinkelbach iterations whose inner problem (a quadratic with a linear term
on the unit sphere) is solved exactly from the eigendecomposition.

With the scale held fixed the reduced function of ``n`` is no longer a
ratio.  It is maximised from a spherical grid followed by Riemannian Newton
steps (see :func:`solve_camera_fixed_scale`).
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import grid_argmax, newton_on_sphere
from .core import CameraMatrix, Pose2D, Pose3D, as_joints
from .errors import DegenerateGeometry, DimensionMismatch

DEGENERACY_RTOL = 1e-12
NEWTON_ITERS = 50


def project(y: Pose3D, cam: CameraMatrix, t=None) -> Pose2D:
    """Weak-perspective projection ``X = R* Y + t 1'``."""
    joints = as_joints(y, 3)
    m = cam.m if isinstance(cam, CameraMatrix) else np.asarray(cam, dtype=float)
    x = m @ joints
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.shape != (2,):
            raise DimensionMismatch(f"translation must be a 2-vector, got shape {t.shape}")
        x = x + t[:, None]
    return Pose2D(x)


def _sphere_quadratic_max(H: np.ndarray, h: np.ndarray, hint: np.ndarray | None) -> np.ndarray:
    """Maximise ``n'Hn + 2h'n`` over the unit sphere in R^3.

    Solves the secular equation ``||(mu I - H)^-1 h|| = 1`` for
    ``mu >= lambda_max(H)`` with a bracketed Newton iteration.  In the hard
    case (``h`` orthogonal to the leading eigenvector) two maximisers exist
    and the one closer to ``hint`` is returned.
    """
    lam, V = np.linalg.eigh(H)
    lam = lam[::-1]
    V = V[:, ::-1]
    g = V.T @ h
    gnorm = float(np.sqrt(g @ g))
    l1 = lam[0]
    if abs(g[0]) <= 1e-15 * max(gnorm, 1e-300):
        gaps = l1 - lam[1:]
        if np.all(gaps > 0):
            tail = g[1:] / gaps
            rest = float(tail @ tail)
            if rest <= 1.0:
                base = V[:, 1:] @ tail
                tau = np.sqrt(1.0 - rest)
                cands = [base + tau * V[:, 0], base - tau * V[:, 0]]
                if hint is not None:
                    return min(cands, key=lambda c: float(np.sum((c - hint) ** 2)))
                return cands[0]
        elif gnorm == 0.0:
            return V[:, 0].copy()

    g0, g1, g2 = (float(v) for v in g)
    l0, l1_, l2 = (float(v) for v in lam)
    lo = l0 + abs(g0)
    hi = l0 + gnorm
    mu = lo if lo > l0 else 0.5 * (l0 + hi)
    for _ in range(100):
        d0, d1, d2 = mu - l0, mu - l1_, mu - l2
        z0, z1, z2 = g0 / d0, g1 / d1, g2 / d2
        nn = z0 * z0 + z1 * z1 + z2 * z2
        norm = math.sqrt(nn)
        psi = 1.0 / norm - 1.0
        if psi < 0:
            lo = mu
        else:
            hi = mu
        if abs(psi) <= 4e-16:
            break
        # d(1/||z||)/dmu = (sum g^2/d^3) / ||z||^3
        dpsi = (z0 * z0 / d0 + z1 * z1 / d1 + z2 * z2 / d2) / (nn * norm)
        step = mu - psi / dpsi if dpsi > 0 else 0.5 * (lo + hi)
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if step == mu:
            break
        mu = step
    n = V @ (g / (mu - lam))
    return n / math.sqrt(float(n @ n))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _frame_from_direction(n: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, float]:
    """Best row-orthonormal Q with ``q1 x q2 = n``; returns (Q, tr(Q M'))."""
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    a = _cross(helper, n)
    a /= np.linalg.norm(a)
    b = _cross(n, a)
    u1 = a @ M[0] + b @ M[1]
    u2 = b @ M[0] - a @ M[1]
    rho = float(np.hypot(u1, u2))
    if rho == 0.0:
        return np.vstack([a, b]), 0.0
    c, s = u1 / rho, u2 / rho
    Q = np.vstack([c * a + s * b, -s * a + c * b])
    return Q, rho


def _data_term(A: np.ndarray, G: np.ndarray, M: np.ndarray) -> float:
    # 0.5 ||X - A W||^2 minus the constant 0.5 ||X||^2
    return 0.5 * float(np.sum((A @ G) * A)) - float(np.sum(A * M))


def _optimal_scale(Q: np.ndarray, G: np.ndarray, M: np.ndarray) -> float:
    denom = float(np.sum((Q @ G) * Q))
    num = float(np.sum(Q * M))
    if denom <= 0.0 or num <= 0.0:
        return 0.0
    return num / denom


def solve_camera(X: np.ndarray, W: np.ndarray, previous: np.ndarray | None = None) -> np.ndarray:
    """Array-level camera block update; see :func:`update_camera`."""
    M = X @ W.T
    G = W @ W.T
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    if sv[0] <= 0.0 or sv[1] <= DEGENERACY_RTOL * sv[0]:
        raise DegenerateGeometry(
            f"cross-product X W' is rank deficient (singular values {sv[0]:.3g}, {sv[1]:.3g})"
        )

    Q_proc = U @ Vt
    A_proc = _optimal_scale(Q_proc, G, M) * Q_proc

    hint = None
    if previous is not None and np.linalg.norm(previous) > 0:
        hint = _cross(previous[0], previous[1])
        hint = hint / np.linalg.norm(hint)
    if hint is None:
        hint = _cross(Q_proc[0], Q_proc[1])

    Aq = float(np.sum(M * M)) * np.eye(3) - M.T @ M
    h = _cross(M[0], M[1])
    Bq = np.trace(G) * np.eye(3) - G

    def ratio(n):
        return float(n @ Aq @ n + 2.0 * h @ n) / float(n @ Bq @ n)

    n = _cross(Q_proc[0], Q_proc[1])
    F = ratio(n)
    if previous is not None and hint is not None:
        F_prev = ratio(hint)
        if F_prev > F:
            n, F = hint, F_prev
    for _ in range(60):
        n_new = _sphere_quadratic_max(Aq - F * Bq, h, hint)
        num = float(n_new @ Aq @ n_new + 2.0 * h @ n_new)
        den = float(n_new @ Bq @ n_new)
        gap = num - F * den
        if gap <= 1e-15 * max(abs(num), 1e-300):
            if num / den >= F:
                n = n_new
            break
        n, F = n_new, num / den

    Q, _ = _frame_from_direction(n, M)
    A_best = _optimal_scale(Q, G, M) * Q
    best = _data_term(A_best, G, M)
    for cand in (A_proc, previous):
        if cand is None:
            continue
        val = _data_term(cand, G, M)
        if val < best:
            A_best, best = cand, val
    return np.array(A_best, dtype=float)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_GRID = _fibonacci_sphere(256)


def solve_camera_fixed_scale(X: np.ndarray, W: np.ndarray, scale: float,
                             previous: np.ndarray | None = None) -> np.ndarray:
    """Best camera ``scale * Q`` with Q row-orthonormal (scale held fixed).

    The viewing direction maximises ``s rho(n) + 0.5 s^2 n'Gn`` on the unit
    sphere.  Candidates come from a 256-point spherical grid, the Procrustes
    rotation and the previous camera, and the best few are polished with
    Riemannian Newton steps.
    """
    M = X @ W.T
    G = W @ W.T
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    if sv[0] <= 0.0 or sv[1] <= DEGENERACY_RTOL * sv[0]:
        raise DegenerateGeometry(
            f"cross-product X W' is rank deficient (singular values {sv[0]:.3g}, {sv[1]:.3g})"
        )
    Q_proc = U @ Vt
    Aq = float(np.sum(M * M)) * np.eye(3) - M.T @ M
    h = _cross(M[0], M[1])

    starts = []
    if previous is not None:
        n_prev = _cross(previous[0], previous[1])
        if np.linalg.norm(n_prev) > 0:
            starts.append(n_prev)
    starts.append(_GRID[grid_argmax(_GRID, Aq, h, G, float(scale))])
    starts.append(_cross(Q_proc[0], Q_proc[1]))
    best, best_val = None, -math.inf
    for n0 in starts:
        n, val = newton_on_sphere(np.asarray(n0, dtype=float), Aq, h, G, float(scale), NEWTON_ITERS)
        if best is None or val > best_val + 1e-13 * abs(best_val):
            best, best_val = n, val
    Q, _ = _frame_from_direction(best, M)
    A_best = scale * Q
    best_val = _data_term(A_best, G, M)
    if previous is not None:
        val = _data_term(previous, G, M)
        if val < best_val:
            A_best = previous
    return np.array(A_best, dtype=float)


def update_camera(x: Pose2D, w: Pose3D, previous: CameraMatrix | None = None,
                  scale: float | None = None) -> CameraMatrix:
    """Globally optimal weak-perspective camera for a centred 2D pose.

    Minimises ``0.5 * ||X - R* W||_F^2`` over ``R* = s Q`` (``s >= 0``, Q with
    orthonormal rows).  ``previous`` only breaks ties between equivalent
    optima and is returned if nothing strictly better exists.  With
    ``scale`` given the scale is held fixed and only Q is optimised.

    Raises:
        DegenerateGeometry: if ``X W'`` has numerical rank below two.
    """
    X = as_joints(x, 2)
    W = as_joints(w, 3)
    if X.shape[1] != W.shape[1]:
        raise DimensionMismatch(f"2D pose has {X.shape[1]} joints, 3D pose has {W.shape[1]}")
    prev = previous.m if previous is not None else None
    if scale is not None:
        if scale < 0:
            raise ValueError("scale must be non-negative")
        return CameraMatrix(solve_camera_fixed_scale(X, W, scale, prev))
    return CameraMatrix(solve_camera(X, W, prev))


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
