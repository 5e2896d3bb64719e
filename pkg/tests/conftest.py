from pathlib import Path

import pytest

from statslice.ir import StmtId, parse_program

FIXTURES = Path(__file__).parent / "fixtures"


def S(n: int) -> StmtId:
    """Fixture numbering s1..s9 of the P1 program."""
    return P1_IDS[n - 1]


P1_IDS = [
    StmtId(0, 0, 0), StmtId(0, 0, 1), StmtId(0, 0, 2), StmtId(0, 0, 3),
    StmtId(0, 1, 0), StmtId(0, 1, 1),
    StmtId(0, 2, 0), StmtId(0, 2, 1),
    StmtId(0, 3, 0),
]


@pytest.fixture(scope="session")
def p1_text() -> str:
    return (FIXTURES / "p1.ir").read_text()


@pytest.fixture(scope="session")
def p1(p1_text):
    return parse_program(p1_text)


@pytest.fixture(scope="session")
def p2():
    return parse_program((FIXTURES / "p2.ir").read_text())


@pytest.fixture(scope="session")
def small_corpus():
    from statslice.evaluation.corpus import generate_corpus

    return generate_corpus(11, 30)


# One line per acceptance criterion, echoed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
