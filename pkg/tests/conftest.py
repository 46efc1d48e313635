import numpy as np
import pytest
from hypothesis import settings

from cnmc.lattice import make_lattice
from cnmc.specfun import FracParams

settings.register_profile("cnmc", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("cnmc")


@pytest.fixture(scope="session")
def p2():
    return FracParams(2, 0.5)


@pytest.fixture(scope="session")
def z1():
    return make_lattice([[1.0]], 2)


@pytest.fixture(scope="session")
def z2():
    return make_lattice(np.eye(2), 2)


def random_even_shape(N, K, scale, seed):
    from cnmc.sphere import EvenShape

    rng = np.random.default_rng(seed)
    n = EvenShape.zeros(N, K).coeffs.size
    decay = np.array([1.0 / (1 + k) ** 2 for k, _ in EvenShape.zeros(N, K).index])
    return EvenShape(N, K, scale * rng.standard_normal(n) * decay)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    def record(n, ok, detail):
        _ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
