import sys
import warnings
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sicnm.caseio import load_case  # noqa: E402
from sicnm.pfcore import build_problem, initial_state  # noqa: E402

DATA = Path(str(resources.files("sicnm") / "data"))

ACCEPTANCE_LINES: list[str] = []


def case_path(name: str) -> Path:
    return DATA / f"{name}.m"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def case9():
    return load_case(case_path("case9"))


@pytest.fixture(scope="session")
def case14():
    return load_case(case_path("case14"))


@pytest.fixture(scope="session")
def ill_case():
    return load_case(case_path("case27ill"))


@pytest.fixture(scope="session")
def prob9(case9):
    return build_problem(case9)


@pytest.fixture(scope="session")
def prob14(case14):
    return build_problem(case14)


@pytest.fixture(scope="session")
def ill_prob(ill_case):
    return build_problem(ill_case)


@pytest.fixture(scope="session")
def flat9(case9, prob9):
    return initial_state(prob9, case9, "flat")


@pytest.fixture(autouse=True)
def _quiet_overflow():
    # divergent baselines overflow on purpose; the solvers report it as status
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
