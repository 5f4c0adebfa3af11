"""Block-alternating inference for the shape decomposition model.

The estimated pose is ``Y = B_u c_u + B_v c_v`` and the objective is

    0.5 * ||X - R* Y||^2 + alpha * ||c_u||_1 + beta * ||c_v||_2^2

which is minimised by cycling over three blocks: the camera ``R*`` (exact,
see :mod:`sdmpose.camera`), the sparse code ``c_u`` (FISTA on a lasso) and
the dense code ``c_v`` (closed-form ridge).  Every block update is guarded
so the recorded objective never increases.

The sparse-representation baseline runs the same loop with one dictionary
and the ``c_v`` block removed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import fista, lasso_value
from .camera import solve_camera, solve_camera_fixed_scale
from .core import CameraMatrix, Codes, Pose2D, Pose3D, PoseDictionary, as_joints, check_pair
from .errors import DegenerateGeometry, DimensionMismatch, NotCentered, SingularSystem

CENTER_TOL = 1e-9
SINGULAR_RTOL = 1e-12


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the alternating solver.

    ``stall_window`` and ``stall_rtol`` implement the extra stopping rule for
    inputs whose residual can never reach ``tol``: the loop ends when the
    objective improved by less than ``stall_rtol`` (relative) over the last
    ``stall_window`` outer iterations.  ``stall_window=0`` disables it.

    ``min_norm_ridge`` makes the ``c_v`` block return the minimum-norm least
    squares solution (the ``beta -> 0+`` limit) instead of raising
    :class:`SingularSystem` when ``beta = 0`` and ``Z'Z`` is singular.

    ``camera_scale`` holds the weak-perspective scale fixed (rows of ``R*``
    orthogonal with this norm).  ``None`` lets the scale float freely, in
    which case the penalties can always be lowered by growing the scale and
    shrinking the codes, so the loop drifts instead of converging.
    """

    alpha: float = 0.4
    beta: float = 20.0
    tol: float = 1e-6
    max_iter: int = 10000
    apg_iters: int = 50
    apg_tol: float = 1e-8
    stall_window: int = 20
    stall_rtol: float = 1e-10
    camera_scale: float | None = 1.0
    min_norm_ridge: bool = False

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1 or self.apg_iters < 1:
            raise ValueError("max_iter and apg_iters must be at least 1")
        if not self.apg_tol > 0:
            raise ValueError("apg_tol must be positive")
        if self.stall_window < 0:
            raise ValueError("stall_window must be non-negative")
        if self.camera_scale is not None and not self.camera_scale > 0:
            raise ValueError("camera_scale must be positive or None")


@dataclass
class SolveReport:
    pose: Pose3D
    camera: CameraMatrix
    codes: Codes
    objective_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    iterations: int = 0
    termination: Termination = Termination.MAX_ITER
    stalled: bool = False

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf


def soft_threshold(v, lam: float) -> np.ndarray:
    """Proximal operator of ``lam * ||.||_1``."""
    if lam < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


# --- array-level kernels ---------------------------------------------------
#
# ``atoms`` arrays have shape (k, 3, P); projected atoms are returned as the
# (2P, k) matrix whose columns are vec(R* B_j).


def _project_atoms(cam: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    return np.matmul(cam, atoms).reshape(atoms.shape[0], -1).T


def _objective(x, cam, atoms_u, atoms_v, c_u, c_v, alpha, beta) -> float:
    y = np.tensordot(c_u, atoms_u, axes=1)
    if atoms_v is not None:
        y = y + np.tensordot(c_v, atoms_v, axes=1)
    r = x - cam @ y
    val = 0.5 * float(np.sum(r * r)) + alpha * float(np.sum(np.abs(c_u)))
    if atoms_v is not None:
        val += beta * float(c_v @ c_v)
    return val


def _fista(phi: np.ndarray, y: np.ndarray, c0: np.ndarray, alpha: float, iters: int, tol: float) -> np.ndarray:
    """FISTA on ``0.5 ||y - phi c||^2 + alpha ||c||_1`` started at ``c0``.

    The result is returned only if it does not increase the lasso objective
    relative to ``c0``.
    """
    gram = phi.T @ phi
    corr = phi.T @ y
    lip = float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0
    if lip <= 0.0:
        return np.zeros_like(c0) if alpha > 0 else c0.copy()
    c = fista(gram, corr, np.ascontiguousarray(c0, dtype=float), float(alpha), 1.0 / lip, int(iters), float(tol))
    yy = float(y @ y)
    if lasso_value(gram, corr, yy, c, alpha) <= lasso_value(gram, corr, yy, c0, alpha):
        return c
    return c0.copy()


def _ridge(z: np.ndarray, rhs: np.ndarray, beta: float, min_norm: bool = False) -> np.ndarray:
    """Minimiser of ``0.5 ||rhs - z c||^2 + beta ||c||^2``."""
    k = z.shape[1]
    lhs = z.T @ z + 2.0 * beta * np.eye(k)
    if beta == 0.0:
        sv = np.linalg.svd(lhs, compute_uv=False)
        if sv[-1] <= SINGULAR_RTOL * max(sv[0], 1e-300):
            if min_norm:
                return np.linalg.lstsq(z, rhs, rcond=math.sqrt(SINGULAR_RTOL))[0]
            raise SingularSystem("Z'Z is singular and beta = 0")
    try:
        return np.linalg.solve(lhs, z.T @ rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


# --- public block updates ---------------------------------------------------


def _unpack(x, cam, dict_u, dict_v, codes):
    X = as_joints(x, 2)
    if X.shape[1] != dict_u.n_joints:
        raise DimensionMismatch(f"2D pose has {X.shape[1]} joints, dictionary has {dict_u.n_joints}")
    check_pair(dict_u, dict_v, codes)
    m = cam.m if isinstance(cam, CameraMatrix) else np.asarray(cam, dtype=float)
    return X, m


def objective_sdm(x: Pose2D, cam: CameraMatrix, dict_u: PoseDictionary, dict_v: PoseDictionary,
                  codes: Codes, cfg: SolverConfig) -> float:
    """Value of the full SDM objective at the given camera and codes."""
    X, m = _unpack(x, cam, dict_u, dict_v, codes)
    return _objective(X, m, dict_u.atoms, dict_v.atoms, codes.c_u, codes.c_v, cfg.alpha, cfg.beta)


def update_cu(x: Pose2D, cam: CameraMatrix, dict_u: PoseDictionary, dict_v: PoseDictionary | None,
              codes: Codes, cfg: SolverConfig) -> np.ndarray:
    """Sparse-code block: FISTA on the lasso in ``c_u`` with everything else fixed."""
    X, m = _unpack(x, cam, dict_u, dict_v, codes)
    y = X.ravel()
    if dict_v is not None:
        y = y - _project_atoms(m, dict_v.atoms) @ codes.c_v
    phi = _project_atoms(m, dict_u.atoms)
    return _fista(phi, y, np.array(codes.c_u), cfg.alpha, cfg.apg_iters, cfg.apg_tol)


def update_cv(x: Pose2D, cam: CameraMatrix, dict_u: PoseDictionary, dict_v: PoseDictionary,
              codes: Codes, cfg: SolverConfig) -> np.ndarray:
    """Dense-code block: exact ridge solution ``(Z'Z + 2 beta I)^-1 Z' r``.

    ``Z`` holds the projected deformation atoms as columns and ``r`` is the
    2D residual left by the global-structure part.
    """
    X, m = _unpack(x, cam, dict_u, dict_v, codes)
    rhs = X.ravel() - _project_atoms(m, dict_u.atoms) @ codes.c_u
    return _ridge(_project_atoms(m, dict_v.atoms), rhs, cfg.beta, cfg.min_norm_ridge)


# --- the alternating loop ---------------------------------------------------


def _run(X, atoms_u, atoms_v, cfg: SolverConfig, cam, c_u, c_v) -> SolveReport:
    alpha, beta = cfg.alpha, cfg.beta
    n_joints = X.shape[1]
    Bu = atoms_u.reshape(atoms_u.shape[0], -1).T
    Bv = atoms_v.reshape(atoms_v.shape[0], -1).T if atoms_v is not None else None
    y = X.ravel()

    def shape(cu, cv):
        w = Bu @ cu
        if Bv is not None:
            w = w + Bv @ cv
        return w.reshape(3, n_joints)

    def value(r, cu, cv):
        val = 0.5 * float(r @ r) + alpha * float(np.abs(cu).sum())
        if Bv is not None:
            val += beta * float(cv @ cv)
        return val

    obj_hist: list[float] = []
    res_hist: list[float] = []
    termination = Termination.MAX_ITER
    stalled = False
    current = value(y - (cam @ shape(c_u, c_v)).ravel(), c_u, c_v)

    for _ in range(cfg.max_iter):
        # camera block
        W = shape(c_u, c_v)
        try:
            if cfg.camera_scale is None:
                cam_new = solve_camera(X, W, cam)
            else:
                cam_new = solve_camera_fixed_scale(X, W, cfg.camera_scale, cam)
        except DegenerateGeometry:
            cam_new = cam
        val = value(y - (cam_new @ W).ravel(), c_u, c_v)
        # strict: a flat objective (zero pose) must not discard the init
        if val < current:
            cam, current = cam_new, val

        # sparse block
        phi_u = _project_atoms(cam, atoms_u)
        phi_v = _project_atoms(cam, atoms_v) if Bv is not None else None
        fit_v = phi_v @ c_v if phi_v is not None else 0.0
        c_u_new = _fista(phi_u, y - fit_v, c_u, alpha, cfg.apg_iters, cfg.apg_tol)
        fit_u = phi_u @ c_u_new
        val = value(y - fit_u - fit_v, c_u_new, c_v)
        if val <= current:
            c_u, current = c_u_new, val
        else:
            fit_u = phi_u @ c_u

        # dense block
        if phi_v is not None:
            c_v_new = _ridge(phi_v, y - fit_u, beta, cfg.min_norm_ridge)
            fit_v_new = phi_v @ c_v_new
            val = value(y - fit_u - fit_v_new, c_u, c_v_new)
            if val <= current:
                c_v, current, fit_v = c_v_new, val, fit_v_new

        r = y - fit_u - fit_v
        res = math.sqrt(float(r @ r))
        obj_hist.append(current)
        res_hist.append(res)
        if res <= cfg.tol:
            termination = Termination.CONVERGED
            break
        w = cfg.stall_window
        if w and len(obj_hist) > w:
            old = obj_hist[-1 - w]
            if old - current < cfg.stall_rtol * abs(old):
                stalled = True
                break

    return SolveReport(
        pose=Pose3D(shape(c_u, c_v)),
        camera=CameraMatrix(cam),
        codes=Codes(c_u, c_v),
        objective_history=obj_hist,
        residual_history=res_hist,
        iterations=len(obj_hist),
        termination=termination,
        stalled=stalled,
    )


def _check_input(x, n_joints: int) -> np.ndarray:
    X = as_joints(x, 2)
    if X.shape[1] != n_joints:
        raise DimensionMismatch(f"2D pose has {X.shape[1]} joints, dictionary has {n_joints}")
    if not np.all(np.isfinite(X)):
        raise NotCentered("2D pose contains non-finite values")
    if np.any(np.abs(X.mean(axis=1)) > CENTER_TOL * max(1.0, float(np.abs(X).max()))):
        raise NotCentered("2D pose must be centred (see center_pose2d)")
    return X


def solve_sdm(x: Pose2D, dict_u: PoseDictionary, dict_v: PoseDictionary, cfg: SolverConfig | None = None,
              init: tuple[CameraMatrix, Codes] | None = None) -> SolveReport:
    """Estimate a 3D pose from a centred 2D pose with the two-dictionary model.

    Without ``init`` the camera starts at ``[[1, 0, 0], [0, 1, 0]]`` and both
    codes at zero.
    """
    cfg = cfg or SolverConfig()
    check_pair(dict_u, dict_v)
    X = _check_input(x, dict_u.n_joints)
    if init is None:
        cam = np.eye(2, 3) * (cfg.camera_scale or 1.0)
        c_u, c_v = np.zeros(dict_u.k), np.zeros(dict_v.k)
    else:
        cam0, codes0 = init
        check_pair(dict_u, dict_v, codes0)
        cam = np.array(cam0.m)
        c_u, c_v = np.array(codes0.c_u), np.array(codes0.c_v)
    return _run(X, dict_u.atoms, dict_v.atoms, cfg, cam, c_u, c_v)


def solve_sr_baseline(x: Pose2D, dictionary: PoseDictionary, alpha: float | None = None,
                      cfg: SolverConfig | None = None) -> SolveReport:
    """Standard sparse-representation lifting (relaxed form, single dictionary).

    ``alpha`` overrides ``cfg.alpha`` when given; the dense code is absent and
    reported as zeros.
    """
    cfg = cfg or SolverConfig()
    if alpha is not None:
        cfg = SolverConfig(**{**cfg.__dict__, "alpha": alpha})
    X = _check_input(x, dictionary.n_joints)
    cam = np.eye(2, 3) * (cfg.camera_scale or 1.0)
    return _run(X, dictionary.atoms, None, cfg, cam, np.zeros(dictionary.k), np.zeros(dictionary.k))
