import numpy as np
import pytest

from dkpca import _core

BACKENDS = sorted(_core.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per importable implementation of the hot kernels."""
    monkeypatch.setattr(_core, "_impl", _core.available_backends()[request.param])
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_stiefel(rng, N, s):
    return np.linalg.qr(rng.standard_normal((N, s)))[0]


def spd_with_spectrum(rng, values):
    values = np.asarray(values, dtype=float)
    Q = random_stiefel(rng, values.size, values.size)
    return (Q * values) @ Q.T


# --- acceptance reporting ----------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``record(k, ok, detail)``: log one PASS/FAIL line for acceptance criterion ``k``."""

    def record(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        ACCEPTANCE.setdefault(k, []).append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[k]:
            terminalreporter.write_line(line)
