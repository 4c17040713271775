import json
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from tan import cli

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "golden_forward.json").read_text())


@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    """The seeded acceptance run: synth corpus + `tan train`, shared by the whole session."""
    root = tmp_path_factory.mktemp("synthetic")
    assert cli.main(["synth", "--out-dir", str(root), "--quiet"]) == 0
    t0 = time.perf_counter()
    code = cli.main(["train", "--config", str(root / "synthetic_config.json"), "--quiet"])
    seconds = time.perf_counter() - t0
    assert code == 0
    return {"root": root, "run": root / "run", "seconds": seconds}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """``with criterion(n, title) as detail:`` records one PASS/FAIL line for the summary."""

    @contextmanager
    def check(number: int, title: str):
        detail: dict = {}
        try:
            yield detail
        except pytest.skip.Exception as exc:
            _CRITERIA.append(f"criterion {number} SKIP  {title}: {exc}")
            raise
        except BaseException as exc:
            _CRITERIA.append(f"criterion {number} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        else:
            info = ", ".join(f"{k}={v}" for k, v in detail.items())
            _CRITERIA.append(f"criterion {number} PASS  {title}" + (f" ({info})" if info else ""))

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
