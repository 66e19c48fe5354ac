import json
from pathlib import Path

import numpy as np
import pytest

from sptrack import LinearDevice, make_tile

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracles.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


def one_by_one(ap=1.2, am=0.8, w=0.0, dw=1e-3, seed=0, tmax=1.0, tmin=1.0):
    t = make_tile(1, 1, LinearDevice(ap, am, tmax, tmin), dw_min=dw, seed=seed)
    t.weights = np.full((1, 1), float(w))
    return t


# acceptance verdicts, echoed again at the end of the run so they show without -s
VERDICTS = {}


@pytest.fixture
def verdict():
    def record(number, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {name}: {detail}"
        VERDICTS[number] = line
        print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
