import time

import pytest

from smurf import FitConfig, SimConfig, fit_em, simulate_raster

# Desk scale: 5 ms bins keep the two-region design (K=400, R=45) tractable on one core.
DESK_SIM = SimConfig(delta_s=0.005, seed=1)
DESK_FIT = FitConfig(n_gibbs_per_iter=2000, burn_in=200, max_em_iters=15, seed=1)

_acceptance_lines = []


@pytest.fixture(scope="session")
def desk_raster():
    return simulate_raster(DESK_SIM)


@pytest.fixture(scope="session")
def desk_fit(desk_raster):
    """The desk-scale fit shared by the acceptance and desk-scale suites, with its wall time."""
    start = time.perf_counter()
    result = fit_em(desk_raster, DESK_FIT)
    return result, time.perf_counter() - start


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""
    def _report(number, passed, detail):
        _acceptance_lines.append(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
