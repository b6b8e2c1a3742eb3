import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from descobs.scenarios import builtin  # noqa: E402
from descobs.synthesis import SynthesisOptions, synthesize  # noqa: E402


def _designed(name):
    sc = builtin(name)
    design = synthesize(sc.system, sc.adjacency, sc.path, SynthesisOptions(**sc.options))
    return sc, design


@pytest.fixture(scope="session")
def hydraulic():
    return _designed("hydraulic")


@pytest.fixture(scope="session")
def electrical():
    return _designed("electrical")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
