import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dafsm import dsl  # noqa: E402
from dafsm.solver import default_solver  # noqa: E402

SAMPLES = Path(dsl.__file__).parent / "samples"
HAVE_SOLVER = shutil.which(default_solver()) is not None

needs_solver = pytest.mark.skipif(not HAVE_SOLVER, reason="no SMT solver on PATH")


def sample(name):
    return dsl.load(SAMPLES / f"{name}.daf")


@pytest.fixture
def smp():
    return sample("smp")


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str = ""):
    ACCEPTANCE.append(f"{criterion}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else ""))
    print(ACCEPTANCE[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
