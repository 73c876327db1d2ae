import numpy as np
import pytest

from bundle_uq import training
from bundle_uq.training import TrainConfig


def _tiny(model_id, iterations=400, spd=8, seed=0):
    cfg = TrainConfig(model_id, iterations=iterations, samples_per_dim=spd, lr=3e-2,
                      lr_final=1e-3, seed=seed, hidden=(8,))
    return training.train(cfg)


@pytest.fixture(scope="session")
def tiny_lcdm():
    """A small, quickly trained LCDM bundle for plumbing tests (not accurate)."""
    return _tiny("lcdm", spd=16)


@pytest.fixture(scope="session")
def tiny_cpl():
    return _tiny("cpl", spd=6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -------------------------------------------------------------

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """``record(ok, detail)`` for the test's ``@pytest.mark.criterion(n)``; prints one line."""
    n = request.node.get_closest_marker("criterion").args[0]
    _CRITERIA[n] = (False, "did not reach its check")

    def record(ok: bool, detail: str):
        _CRITERIA[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
