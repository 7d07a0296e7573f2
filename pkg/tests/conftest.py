import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aspectrec._kernels import available_backends


def pytest_generate_tests(metafunc):
    """Parametrize kernel-equivalence tests over every built backend."""
    if "kernel_backend" in metafunc.fixturenames:
        backends = available_backends()
        metafunc.parametrize("kernel_backend", list(backends.values()),
                             ids=list(backends.keys()))


@pytest.fixture
def force_backend(monkeypatch):
    """Temporarily pin the active kernel backend."""
    from aspectrec import _kernels

    def _set(module):
        monkeypatch.setattr(_kernels, "_active", module)

    return _set


def pytest_terminal_summary(terminalreporter):
    """Surface the acceptance pass lines even without -s."""
    import sys

    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
