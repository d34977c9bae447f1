import numpy as np
import pytest

from onionlab.onion import make_scheme


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["ideal", "real"])
def scheme(request):
    return make_scheme(request.param, max_hops=12, message_size=64)


@pytest.fixture
def keyring():
    def make(scheme, n, rng):
        return [scheme.gen(v, rng) for v in range(n)]
    return make


# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(label: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{label:<4} {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
