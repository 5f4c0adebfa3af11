import numpy as np
import pytest

from sdmpose.core import PoseDictionary, DictKind

# criterion number -> one-line verdict, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_atoms(rng, k: int, p: int, norm: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(k, 3, p))
    a -= a.mean(axis=2, keepdims=True)
    a /= np.linalg.norm(a.reshape(k, -1), axis=1)[:, None, None]
    return a * norm


def random_dict(rng, k: int, p: int, kind=DictKind.GLOBAL_STRUCTURE) -> PoseDictionary:
    return PoseDictionary(random_atoms(rng, k, p), kind)


def centered(rng, rows: int, p: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(scale=scale, size=(rows, p))
    return a - a.mean(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
