import numpy as np
import pytest

from chi2dro.moments import DiscreteDistribution

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.fixture
def acceptance_log():
    """Record one verdict line per acceptance criterion."""

    def log(criterion: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.append((criterion, "PASS" if ok else "FAIL", detail))
        print(f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}")

    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status} {criterion}: {detail}")


def random_distribution(rng: np.random.Generator, k: int, d: int, scale: float = 1.0) -> DiscreteDistribution:
    atoms = rng.normal(scale=scale, size=(k, d))
    w = rng.dirichlet(np.ones(k))
    return DiscreteDistribution(atoms, w / w.sum())


@pytest.fixture
def bern25():
    return DiscreteDistribution([0.0, 1.0], [0.75, 0.25])
