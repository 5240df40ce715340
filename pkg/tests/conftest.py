from __future__ import annotations

import numpy as np
import pytest

import tnfr._fallback as fallback
from tnfr import _backend, linear_fa, smallmat

BACKENDS = ["python"] + (["cython"] if _backend.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = fallback if request.param == "python" else _backend.kernels
    monkeypatch.setattr(smallmat, "kernels", mod)
    monkeypatch.setattr(linear_fa, "kernels", mod)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
