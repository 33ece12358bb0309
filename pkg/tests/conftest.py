import numpy as np
import pytest

from kernelcal.core_math import BoxDomain
from kernelcal.estimator import ScoreContext
from kernelcal.kernels import KernelSpec
from kernelcal.simulator import Dist, GG1Model, TargetSystem, generate_target_data


@pytest.fixture
def mm1_model():
    return GG1Model(Dist.exp(rate=1.0), Dist.exp(param=0))


@pytest.fixture
def mm1_target():
    return TargetSystem(Dist.exp(rate=1.0), Dist.exp(rate=1.2))


@pytest.fixture
def gg1_model():
    # two free rates: service mu = theta[0], arrival lambda = theta[1]
    return GG1Model(Dist.gamma(0.5, param=1), Dist.exp(param=0), burn_in=10, horizon=20)


@pytest.fixture
def small_ctx(mm1_model, mm1_target):
    data = generate_target_data(mm1_target, 100, np.random.default_rng(3))
    return ScoreContext(data, KernelSpec("riesz"), mm1_model, BoxDomain((1.05,), (5.0,)), 50)


@pytest.fixture
def numeric_csv():
    """Read a report CSV with the wall-clock columns removed."""
    import csv

    from kernelcal.experiments import TIMING_COLUMNS

    def read(path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        keep = [i for i, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
        return [[row[i] for i in keep] for row in rows]

    return read


# -- acceptance reporting ------------------------------------------------------

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Record the outcome of an acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
