import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from mbpre import build_chain, f1, f2, f3, yaglom_exact  # noqa: E402

settings.register_profile("ci", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("ci")

SEEDS = (11, 23, 37)
MODELS_DIR = Path(__file__).resolve().parent.parent / "models"


@pytest.fixture(scope="session")
def F1():
    return f1()


@pytest.fixture(scope="session")
def F2():
    return f2()


@pytest.fixture(scope="session")
def F3():
    return f3()


@pytest.fixture(scope="session")
def chain_f1():
    return build_chain(f1(), 2)


@pytest.fixture(scope="session")
def chain_f2():
    return build_chain(f2(), 2)


@pytest.fixture(scope="session")
def chain_f3():
    return build_chain(f3(), 40)


@pytest.fixture(scope="session")
def yaglom_f3(chain_f3):
    return yaglom_exact(chain_f3)


# acceptance criteria report: (number, label, passed, detail)
ACCEPTANCE: list = []
ACCEPTANCE_COUNT = 10


def pytest_terminal_summary(terminalreporter):
    if not any(item for item in ACCEPTANCE):
        return
    seen = {num for num, *_ in ACCEPTANCE}
    terminalreporter.section("acceptance criteria")
    merged = {}
    for num, label, ok, detail in ACCEPTANCE:
        prev = merged.get(num)
        merged[num] = (label, ok and (prev is None or prev[1]), detail if prev is None else prev[2] + "; " + detail)
    for num in range(1, ACCEPTANCE_COUNT + 1):
        if num in seen:
            label, ok, detail = merged[num]
            terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {label} ({detail})")
        else:
            terminalreporter.write_line(f"criterion {num:2d} FAIL: not reached")
