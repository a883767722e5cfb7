import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from casimir_lattice.materials import DielectricModel, MaterialMap

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_eps_map(lat, rng, lo=1.0, hi=10.0):
    """Independent constant permittivity on every link."""
    eps = rng.uniform(lo, hi, lat.n_links)
    models = (MaterialMap.vacuum(lat).models[0],) + tuple(DielectricModel.constant(e) for e in eps)
    return MaterialMap(lat, np.arange(1, lat.n_links + 1, dtype=np.int32), models)


_CRITERIA: dict[int, str] = {}


def pytest_addoption(parser):
    parser.addoption("--runs-dir", default=None,
                     help="directory holding (or receiving) the desk-scale runs used by the acceptance suite")


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
