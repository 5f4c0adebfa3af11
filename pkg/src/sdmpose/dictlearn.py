"""Joint learning of the global-structure and deformation dictionaries.

With the training poses stacked as columns of ``D`` (3P x N) the loss is

    0.5 * ||D - B_u C_u - B_v C_v||_F^2 + gamma * ||C_u||_1 + eta * ||C_v||_F^2

and the four blocks are updated in turn.  The codes take gradient steps
(proximal for the l1 term on ``C_u``).  The dictionaries take projected
gradient steps (atoms centred, Frobenius norm capped at one).  Each step
uses backtracking so the loss never increases.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DictKind, Pose3D, PoseDictionary, as_joints
from .errors import DimensionMismatch, EmptyTrainingSet, NotCentered

log = logging.getLogger(__name__)

CENTER_TOL = 1e-9
MAX_HALVINGS = 30
PROJECT_TOL = 1e-12


class CodeKind(str, enum.Enum):
    SPARSE = "sparse"
    DENSE = "dense"


@dataclass(frozen=True)
class DictLearnConfig:
    gamma: float = 0.01
    eta: float = 1.0
    k: int = 32
    steps: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    tol: float = 1e-6
    max_iter: int = 2000
    seed: int = 0
    window: int = 10

    def __post_init__(self):
        if self.gamma < 0 or self.eta < 0:
            raise ValueError("gamma and eta must be non-negative")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if len(self.steps) != 4 or any(not s > 0 for s in self.steps):
            raise ValueError("steps must be four positive numbers")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


@dataclass(frozen=True)
class CodeMatrix:
    """Codes of the training set, one column per pose (shape k x N)."""

    columns: np.ndarray
    kind: CodeKind = CodeKind.SPARSE

    def __post_init__(self):
        arr = np.array(self.columns, dtype=float)
        if arr.ndim != 2:
            raise DimensionMismatch(f"code matrix must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("code matrix contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "columns", arr)
        object.__setattr__(self, "kind", CodeKind(self.kind))


@dataclass
class TrainReport:
    dict_u: PoseDictionary
    dict_v: PoseDictionary
    codes_u: CodeMatrix
    codes_v: CodeMatrix
    loss_history: list[float] = field(default_factory=list)
    iterations: int = 0


# --- helpers ---------------------------------------------------------------


def _stack(train: Sequence[Pose3D]) -> np.ndarray:
    """Training poses as columns of a (3P, N) matrix; checks centring."""
    if len(train) == 0:
        raise EmptyTrainingSet("training set is empty")
    mats = [as_joints(p, 3) for p in train]
    n_joints = mats[0].shape[1]
    for i, m in enumerate(mats):
        if m.shape[1] != n_joints:
            raise DimensionMismatch(f"training pose {i} has {m.shape[1]} joints, expected {n_joints}")
        if np.any(np.abs(m.mean(axis=1)) > CENTER_TOL * max(1.0, float(np.abs(m).max()))):
            raise NotCentered(f"training pose {i} is not centred")
    return np.stack([m.ravel() for m in mats], axis=1)


def _as_matrix(atoms: np.ndarray) -> np.ndarray:
    return atoms.reshape(atoms.shape[0], -1).T


def _as_atoms(mat: np.ndarray, n_joints: int) -> np.ndarray:
    return mat.T.reshape(-1, 3, n_joints)


def _codes(c, k: int, n: int, what: str) -> np.ndarray:
    arr = c.columns if isinstance(c, CodeMatrix) else np.asarray(c, dtype=float)
    if arr.shape != (k, n):
        raise DimensionMismatch(f"{what} must have shape ({k}, {n}), got {arr.shape}")
    return arr


def _loss(D, Bu, Bv, Cu, Cv, gamma, eta) -> float:
    R = D - Bu @ Cu - Bv @ Cv
    return 0.5 * float(np.sum(R * R)) + gamma * float(np.sum(np.abs(Cu))) + eta * float(np.sum(Cv * Cv))


def _smooth(D, Bu, Bv, Cu, Cv, eta) -> float:
    R = D - Bu @ Cu - Bv @ Cv
    return 0.5 * float(np.sum(R * R)) + eta * float(np.sum(Cv * Cv))


def _project_atoms_matrix(B: np.ndarray, n_joints: int) -> np.ndarray:
    # atoms that are already feasible up to rounding are left untouched so
    # that projecting twice gives bitwise the same result
    atoms = _as_atoms(B, n_joints)
    mean = atoms.mean(axis=2, keepdims=True)
    off = np.max(np.abs(mean), axis=(1, 2)) > PROJECT_TOL
    atoms = np.where(off[:, None, None], atoms - mean, atoms)
    norms = np.sqrt(np.sum(atoms**2, axis=(1, 2)))
    scale = np.where(norms > 1.0 + PROJECT_TOL, 1.0 / np.maximum(norms, 1.0), 1.0)
    return _as_matrix(atoms * scale[:, None, None])


# --- public operations ----------------------------------------------------


def project_dictionary(d: PoseDictionary) -> PoseDictionary:
    """Centre every atom and shrink it onto the unit Frobenius ball."""
    atoms = np.asarray(d.atoms, dtype=float)
    if not np.all(np.isfinite(atoms)):
        raise ValueError("atoms contain non-finite values")
    out = _as_atoms(_project_atoms_matrix(_as_matrix(atoms), atoms.shape[2]), atoms.shape[2])
    return PoseDictionary(out, d.kind)


def project_atoms(atoms: np.ndarray) -> np.ndarray:
    """Array form of :func:`project_dictionary` for raw ``(k, 3, P)`` atoms."""
    atoms = np.asarray(atoms, dtype=float)
    return _as_atoms(_project_atoms_matrix(_as_matrix(atoms), atoms.shape[2]), atoms.shape[2])


def dictlearn_loss(train, dict_u: PoseDictionary, dict_v: PoseDictionary, codes_u, codes_v,
                   cfg: DictLearnConfig) -> float:
    D = _stack(train)
    _check_dicts(D, dict_u, dict_v)
    n = D.shape[1]
    Cu = _codes(codes_u, dict_u.k, n, "codes_u")
    Cv = _codes(codes_v, dict_v.k, n, "codes_v")
    return _loss(D, dict_u.matrix(), dict_v.matrix(), Cu, Cv, cfg.gamma, cfg.eta)


def _check_dicts(D, dict_u, dict_v):
    for d in (dict_u, dict_v):
        if 3 * d.n_joints != D.shape[0]:
            raise DimensionMismatch(f"dictionary has P={d.n_joints}, training poses have P={D.shape[0] // 3}")


def loss_gradients(train, dict_u, dict_v, codes_u, codes_v, cfg: DictLearnConfig):
    """Gradients of the smooth part of the loss.

    Returns ``(g_Cu, g_Cv, g_Bu, g_Bv)``; code gradients have shape (k, N)
    and dictionary gradients have the atom shape (k, 3, P).  The l1 term on
    ``C_u`` is excluded (it is handled by the proximal step).

    Dictionaries may be given as ``PoseDictionary`` or as raw atom arrays so
    gradients can be checked away from the feasible set.
    """
    D = _stack(train)
    au = dict_u.atoms if isinstance(dict_u, PoseDictionary) else np.asarray(dict_u, dtype=float)
    av = dict_v.atoms if isinstance(dict_v, PoseDictionary) else np.asarray(dict_v, dtype=float)
    n_joints = D.shape[0] // 3
    if au.shape[1:] != (3, n_joints) or av.shape[1:] != (3, n_joints):
        raise DimensionMismatch("dictionary atoms do not match the training skeleton")
    n = D.shape[1]
    Cu = _codes(codes_u, au.shape[0], n, "codes_u")
    Cv = _codes(codes_v, av.shape[0], n, "codes_v")
    Bu, Bv = _as_matrix(au), _as_matrix(av)
    R = D - Bu @ Cu - Bv @ Cv
    g_cu = -Bu.T @ R
    g_cv = -Bv.T @ R + 2.0 * cfg.eta * Cv
    g_bu = _as_atoms(-R @ Cu.T, n_joints)
    g_bv = _as_atoms(-R @ Cv.T, n_joints)
    return g_cu, g_cv, g_bu, g_bv


def initial_dictionaries(train, cfg: DictLearnConfig, joint: bool = True):
    """Seeded starting point: data atoms for ``B_u``, small noise for ``B_v``."""
    D = _stack(train)
    n_joints = D.shape[0] // 3
    n = D.shape[1]
    rng = np.random.default_rng(cfg.seed)
    if n < cfg.k:
        log.warning("training set (%d poses) is smaller than the dictionary size (%d)", n, cfg.k)
    idx = rng.choice(n, size=cfg.k, replace=n < cfg.k)
    Bu = D[:, idx].copy()
    if n < cfg.k:
        # repeated picks get a small perturbation so atoms stay distinct
        scale = 0.01 * float(np.median(np.linalg.norm(Bu, axis=0)))
        Bu[:, n:] += rng.normal(0.0, scale, size=Bu[:, n:].shape)
    Bu = _project_atoms_matrix(Bu, n_joints)
    if joint:
        sigma = 0.01 * float(np.median(np.linalg.norm(Bu, axis=0)))
        Bv = _project_atoms_matrix(rng.normal(0.0, sigma, size=Bu.shape), n_joints)
    else:
        Bv = np.zeros_like(Bu)
    return D, Bu, Bv, np.zeros((cfg.k, n)), np.zeros((cfg.k, n))


def learn_dictionaries(train: Sequence[Pose3D], cfg: DictLearnConfig | None = None,
                       joint: bool = True) -> TrainReport:
    """Learn the dictionary pair by alternating backtracked block steps.

    ``joint=False`` learns a single sparse-coding dictionary (the deformation
    blocks stay at zero), which is what the sparse-representation baseline
    uses.

    The loop stops after ``cfg.max_iter`` sweeps or when the loss improved
    by less than ``cfg.tol`` (relative) over the last ``cfg.window`` sweeps.
    """
    cfg = cfg or DictLearnConfig()
    D, Bu, Bv, Cu, Cv = initial_dictionaries(train, cfg, joint)
    n_joints = D.shape[0] // 3
    gamma, eta = cfg.gamma, cfg.eta
    steps = list(cfg.steps)
    current = _loss(D, Bu, Bv, Cu, Cv, gamma, eta)
    history = [current]

    def backtrack(block: int, x, grad, propose, evaluate):
        """Shared line search: returns the accepted point or None."""
        nonlocal current
        f0 = evaluate(x, smooth=True)
        t = 2.0 * steps[block]
        for _ in range(MAX_HALVINGS):
            cand = propose(x, grad, t)
            diff = cand - x
            bound = f0 + float(np.sum(grad * diff)) + float(np.sum(diff * diff)) / (2.0 * t)
            if evaluate(cand, smooth=True) <= bound:
                full = evaluate(cand, smooth=False)
                if full <= current:
                    steps[block] = t
                    current = full
                    return cand
            t *= 0.5
        steps[block] = t
        return None

    for _ in range(cfg.max_iter):
        R = D - Bu @ Cu - Bv @ Cv

        # sparse codes: proximal gradient
        g = -Bu.T @ R
        new = backtrack(
            0, Cu, g,
            lambda x, gr, t: np.sign(x - t * gr) * np.maximum(np.abs(x - t * gr) - gamma * t, 0.0),
            lambda c, smooth: _smooth(D, Bu, Bv, c, Cv, eta) if smooth else _loss(D, Bu, Bv, c, Cv, gamma, eta),
        )
        if new is not None:
            Cu = new

        if joint:
            R = D - Bu @ Cu - Bv @ Cv
            g = -Bv.T @ R + 2.0 * eta * Cv
            new = backtrack(
                1, Cv, g,
                lambda x, gr, t: x - t * gr,
                lambda c, smooth: _smooth(D, Bu, Bv, Cu, c, eta) if smooth else _loss(D, Bu, Bv, Cu, c, gamma, eta),
            )
            if new is not None:
                Cv = new

        R = D - Bu @ Cu - Bv @ Cv
        g = -R @ Cu.T
        new = backtrack(
            2, Bu, g,
            lambda x, gr, t: _project_atoms_matrix(x - t * gr, n_joints),
            lambda b, smooth: _smooth(D, b, Bv, Cu, Cv, eta) if smooth else _loss(D, b, Bv, Cu, Cv, gamma, eta),
        )
        if new is not None:
            Bu = new

        if joint:
            R = D - Bu @ Cu - Bv @ Cv
            g = -R @ Cv.T
            new = backtrack(
                3, Bv, g,
                lambda x, gr, t: _project_atoms_matrix(x - t * gr, n_joints),
                lambda b, smooth: _smooth(D, Bu, b, Cu, Cv, eta) if smooth else _loss(D, Bu, b, Cu, Cv, gamma, eta),
            )
            if new is not None:
                Bv = new

        history.append(current)
        w = cfg.window
        if len(history) > w:
            old = history[-1 - w]
            if old - current < cfg.tol * abs(old):
                break

    iterations = len(history) - 1
    log.info("dictionary learning stopped after %d sweeps, loss %.6g", iterations, current)
    return TrainReport(
        dict_u=PoseDictionary(_as_atoms(Bu, n_joints), DictKind.GLOBAL_STRUCTURE),
        dict_v=PoseDictionary(_as_atoms(Bv, n_joints), DictKind.DEFORMATION),
        codes_u=CodeMatrix(Cu, CodeKind.SPARSE),
        codes_v=CodeMatrix(Cv, CodeKind.DENSE),
        loss_history=history,
        iterations=iterations,
    )
