import numpy as np
import pytest
from hypothesis import given, settings, strategies as st


from sdmpose.core import CameraMatrix, Codes, DictKind, Pose2D, Pose3D, PoseDictionary
from sdmpose.errors import DimensionMismatch, NotCentered, SingularSystem
from sdmpose.solver import (
    SolverConfig, Termination, objective_sdm, soft_threshold, solve_sdm, solve_sr_baseline, update_cu, update_cv,
)

from conftest import centered, random_atoms, random_dict, random_rotation


def gauss_solve(a, b):
    """Naive Gaussian elimination with partial pivoting."""
    a = [list(map(float, row)) + [float(v)] for row, v in zip(a, b)]
    n = len(a)
    for c in range(n):
        piv = max(range(c, n), key=lambda r: abs(a[r][c]))
        a[c], a[piv] = a[piv], a[c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            for j in range(c, n + 1):
                a[r][j] -= f * a[c][j]
    out = [0.0] * n
    for r in reversed(range(n)):
        out[r] = (a[r][n] - sum(a[r][j] * out[j] for j in range(r + 1, n))) / a[r][r]
    return np.array(out)


def instance(rng, k=5, p=16, beta=20.0, alpha=0.4):
    du = random_dict(rng, k, p)
    dv = random_dict(rng, k, p, DictKind.DEFORMATION)
    cam = CameraMatrix(rng.uniform(0.5, 2.0) * random_rotation(rng)[:2])
    x = Pose2D(centered(rng, 2, p))
    codes = Codes(rng.normal(size=k), rng.normal(size=k))
    return x, cam, du, dv, codes, SolverConfig(alpha=alpha, beta=beta)


def projected(cam, d):
    return np.stack([(cam.m @ a).ravel() for a in d.atoms], axis=1)


# --- soft threshold ---------------------------------------------------------


def test_soft_threshold_examples():
    np.testing.assert_array_equal(soft_threshold([3.0, -0.5, 0.0], 1.0), [2.0, 0.0, 0.0])
    v = np.array([0.3, -2.0, 5.5])
    np.testing.assert_array_equal(soft_threshold(v, 0.0), v)
    with pytest.raises(ValueError):
        soft_threshold(v, -1.0)


def test_soft_threshold_grid_oracle(rng):
    v = rng.uniform(-2, 2, size=8)
    grid = np.arange(-3.0, 3.0 + 1e-9, 1e-4)
    for vi, ui in zip(v, soft_threshold(v, 0.3)):
        best = grid[np.argmin(0.5 * (grid - vi) ** 2 + 0.3 * np.abs(grid))]
        assert abs(best - ui) <= 1e-4


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(0, 1e3))
def test_soft_threshold_properties(v, lam):
    u = soft_threshold(v, lam)
    v = np.array(v)
    assert np.all(np.abs(u) <= np.abs(v))
    assert np.all(np.abs(u - v) <= lam * (1 + 1e-12) + 1e-9)
    assert np.all(u * v >= 0)


# --- dense block ------------------------------------------------------------


def test_update_cv_matches_gaussian_elimination(rng):
    for _ in range(100):
        k = int(rng.integers(1, 21))
        x, cam, du, dv, codes, cfg = instance(rng, k=k, beta=float(rng.uniform(0.1, 30)))
        z = projected(cam, dv)
        rhs = x.joints.ravel() - projected(cam, du) @ codes.c_u
        want = gauss_solve(z.T @ z + 2 * cfg.beta * np.eye(k), z.T @ rhs)
        got = update_cv(x, cam, du, dv, codes, cfg)
        np.testing.assert_allclose(got, want, atol=1e-8, rtol=0)
        grad = z.T @ (z @ got - rhs) + 2 * cfg.beta * got
        assert np.linalg.norm(grad) < 1e-8


def test_update_cv_special_cases(rng):
    x, cam, du, dv, codes, cfg = instance(rng, k=3)
    # residual zero -> zero code
    x0 = Pose2D((cam.m @ np.tensordot(codes.c_u, du.atoms, axes=1)))
    np.testing.assert_allclose(update_cv(x0, cam, du, dv, codes, cfg), np.zeros(3), atol=1e-14)
    # one atom: scalar ridge
    dv1 = PoseDictionary(dv.atoms[:1], DictKind.DEFORMATION)
    c1 = Codes(codes.c_u, np.zeros(1))
    z = projected(cam, dv1)[:, 0]
    r = x.joints.ravel() - projected(cam, du) @ codes.c_u
    assert update_cv(x, cam, du, dv1, c1, cfg)[0] == pytest.approx(z @ r / (z @ z + 2 * cfg.beta), rel=1e-12)


def test_update_cv_singular_at_beta_zero(rng):
    x, cam, du, _, _, _ = instance(rng, k=3)
    dv = PoseDictionary(np.repeat(random_atoms(rng, 1, 16), 2, axis=0), DictKind.DEFORMATION)
    codes = Codes(np.zeros(3), np.zeros(2))
    with pytest.raises(SingularSystem):
        update_cv(x, cam, du, dv, codes, SolverConfig(beta=0.0))
    c = update_cv(x, cam, du, dv, codes, SolverConfig(beta=0.0, min_norm_ridge=True))
    assert c[0] == pytest.approx(c[1])


# --- sparse block -----------------------------------------------------------


def lasso(z, y, c, alpha):
    r = y - z @ c
    return 0.5 * r @ r + alpha * np.abs(c).sum()


def coordinate_descent(z, y, alpha, sweeps=20000):
    c = np.zeros(z.shape[1])
    for _ in range(sweeps):
        old = c.copy()
        for j in range(len(c)):
            r = y - z @ c + z[:, j] * c[j]
            c[j] = soft_threshold([z[:, j] @ r], alpha)[0] / (z[:, j] @ z[:, j])
        if np.max(np.abs(c - old)) < 1e-15:
            break
    return c


def test_update_cu_matches_oracles(rng):
    for _ in range(20):
        x, cam, du, dv, codes, _ = instance(rng, k=2, p=3)
        cfg = SolverConfig(alpha=float(rng.uniform(0.01, 0.5)), apg_iters=5000, apg_tol=1e-14)
        z = projected(cam, du)
        y = x.joints.ravel() - projected(cam, dv) @ codes.c_v
        got = lasso(z, y, update_cu(x, cam, du, dv, codes, cfg), cfg.alpha)
        cd = lasso(z, y, coordinate_descent(z, y, cfg.alpha), cfg.alpha)
        assert got <= cd + 1e-6
        # coarse 2-D grid around the coordinate-descent solution
        c0 = coordinate_descent(z, y, cfg.alpha)
        g = np.arange(-0.05, 0.05 + 1e-9, 1e-3)
        vals = [lasso(z, y, c0 + np.array([a, b]), cfg.alpha) for a in g for b in g]
        assert got <= min(vals) + 1e-6


def test_update_cu_recovers_single_atom(rng):
    x, cam, du, dv, codes, _ = instance(rng, k=4)
    truth = np.array([0.0, 1.0, 0.0, 0.0])
    y = cam.m @ (np.tensordot(truth, du.atoms, axes=1) + np.tensordot(codes.c_v, dv.atoms, axes=1))
    cfg = SolverConfig(alpha=1e-6, apg_iters=20000, apg_tol=1e-15)
    got = update_cu(Pose2D(y), cam, du, dv, Codes(np.zeros(4), codes.c_v), cfg)
    np.testing.assert_allclose(got, truth, atol=1e-3)


def test_update_cu_large_alpha_and_guard(rng):
    x, cam, du, dv, codes, _ = instance(rng, k=6)
    np.testing.assert_array_equal(update_cu(x, cam, du, dv, codes, SolverConfig(alpha=1e6)), np.zeros(6))
    cfg = SolverConfig(alpha=0.3, apg_iters=1)
    before = objective_sdm(x, cam, du, dv, codes, cfg)
    after = objective_sdm(x, cam, du, dv, Codes(update_cu(x, cam, du, dv, codes, cfg), codes.c_v), cfg)
    assert after <= before


# --- objective and loop -----------------------------------------------------


def test_objective_cases(rng):
    x, cam, du, dv, codes, cfg = instance(rng, k=3)
    zero = Codes.zeros(3, 3)
    assert objective_sdm(x, cam, du, dv, zero, cfg) == pytest.approx(0.5 * np.sum(x.joints**2))
    y = np.zeros(x.joints.size)
    for j in range(3):
        y += codes.c_u[j] * (cam.m @ du.atoms[j]).ravel() + codes.c_v[j] * (cam.m @ dv.atoms[j]).ravel()
    naive = 0.5 * sum((a - b) ** 2 for a, b in zip(x.joints.ravel(), y))
    naive += cfg.alpha * sum(abs(c) for c in codes.c_u) + cfg.beta * sum(c * c for c in codes.c_v)
    assert objective_sdm(x, cam, du, dv, codes, cfg) == pytest.approx(naive, rel=1e-12)
    perfect = Pose2D(y.reshape(2, -1))
    assert objective_sdm(perfect, cam, du, dv, codes, SolverConfig(alpha=0, beta=0)) == pytest.approx(0, abs=1e-20)


def _input(rng, du, dv, scale=1.0):
    y = np.tensordot(rng.normal(size=du.k), du.atoms, axes=1)
    m = scale * random_rotation(rng)[:2]
    return Pose2D(m @ y), y


def test_loop_contract(rng):
    du, dv = random_dict(rng, 6, 16), random_dict(rng, 6, 16, DictKind.DEFORMATION)
    x, _ = _input(rng, du, dv)
    rep = solve_sdm(x, du, dv, SolverConfig(max_iter=1))
    assert rep.iterations == len(rep.objective_history) == len(rep.residual_history) == 1
    assert rep.termination is Termination.MAX_ITER
    rep = solve_sdm(x, du, dv, SolverConfig(max_iter=300))
    assert np.all(np.diff(rep.objective_history) <= 1e-8)
    np.testing.assert_allclose(rep.pose.joints, np.tensordot(rep.codes.c_u, du.atoms, axes=1)
                               + np.tensordot(rep.codes.c_v, dv.atoms, axes=1))
    again = solve_sdm(x, du, dv, SolverConfig(max_iter=300))
    assert again.objective_history == rep.objective_history
    np.testing.assert_array_equal(again.pose.joints, rep.pose.joints)


def test_default_init_is_identity_and_zero(rng):
    du, dv = random_dict(rng, 4, 16), random_dict(rng, 4, 16, DictKind.DEFORMATION)
    x, _ = _input(rng, du, dv)
    cfg = SolverConfig(max_iter=5)
    init = (CameraMatrix.identity(), Codes.zeros(4, 4))
    a, b = solve_sdm(x, du, dv, cfg), solve_sdm(x, du, dv, cfg, init=init)
    assert a.objective_history == b.objective_history


def test_input_checks(rng):
    du, dv = random_dict(rng, 4, 16), random_dict(rng, 4, 16, DictKind.DEFORMATION)
    with pytest.raises(NotCentered):
        solve_sdm(Pose2D(centered(rng, 2, 16) + 1.0), du, dv)
    with pytest.raises(DimensionMismatch):
        solve_sdm(Pose2D(centered(rng, 2, 15)), du, dv)
    with pytest.raises(DimensionMismatch):
        solve_sdm(Pose2D(centered(rng, 2, 16)), du, random_dict(rng, 4, 15))


def test_atom_recovery(rng):
    du, dv = random_dict(rng, 8, 16), random_dict(rng, 8, 16, DictKind.DEFORMATION)
    y = du.atoms[0] * 10.0
    cam = CameraMatrix(random_rotation(rng)[:2])
    x = Pose2D(cam.m @ y)
    rep = solve_sdm(x, du, dv, SolverConfig(alpha=1e-4, beta=20.0), init=(cam, Codes.zeros(8, 8)))
    from sdmpose.metrics import estimation_error
    assert estimation_error(rep.pose, Pose3D(y)) < 1e-3 * np.linalg.norm(y)


def test_sr_baseline(rng):
    du = random_dict(rng, 8, 16)
    x, y = _input(rng, du, None)
    rep = solve_sr_baseline(x, du, alpha=1e-4)
    assert np.all(rep.codes.c_v == 0) and len(rep.codes.c_v) == 8
    big = solve_sr_baseline(x, du, alpha=1e6)
    assert np.all(big.pose.joints == 0)
    assert big.objective_history[-1] == pytest.approx(0.5 * np.sum(x.joints**2))


def test_sr_converges_in_span(rng):
    du = random_dict(rng, 3, 16)
    y = np.tensordot([2.0, -1.0, 0.5], du.atoms, axes=1)
    x = Pose2D(random_rotation(rng)[:2] @ y)
    rep = solve_sr_baseline(x, du, alpha=0.0, cfg=SolverConfig(tol=1e-6))
    assert rep.termination is Termination.CONVERGED
    assert rep.residual <= 1e-6


def test_large_beta_matches_sr(rng):
    du, dv = random_dict(rng, 6, 16), random_dict(rng, 6, 16, DictKind.DEFORMATION)
    x, _ = _input(rng, du, dv)
    cfg = SolverConfig(alpha=0.1, beta=1e9, max_iter=500)
    a, b = solve_sdm(x, du, dv, cfg), solve_sr_baseline(x, du, cfg=cfg)
    assert np.max(np.abs(a.codes.c_v)) < 1e-6
    assert a.objective_history[-1] == pytest.approx(b.objective_history[-1], abs=1e-4)


def test_block_updates_never_increase(rng):
    for _ in range(100):
        x, cam, du, dv, codes, cfg = instance(rng, k=int(rng.integers(1, 8)))
        f0 = objective_sdm(x, cam, du, dv, codes, cfg)
        cu = update_cu(x, cam, du, dv, codes, cfg)
        f1 = objective_sdm(x, cam, du, dv, Codes(cu, codes.c_v), cfg)
        cv = update_cv(x, cam, du, dv, Codes(cu, codes.c_v), cfg)
        f2 = objective_sdm(x, cam, du, dv, Codes(cu, cv), cfg)
        assert f1 <= f0 + 1e-12 and f2 <= f1 + 1e-12


def test_free_scale_mode_runs(rng):
    du, dv = random_dict(rng, 4, 16), random_dict(rng, 4, 16, DictKind.DEFORMATION)
    x, _ = _input(rng, du, dv, scale=2.0)
    rep = solve_sdm(x, du, dv, SolverConfig(camera_scale=None, max_iter=50))
    assert np.all(np.diff(rep.objective_history) <= 1e-8)
