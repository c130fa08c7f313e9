from dataclasses import replace

import numpy as np
import pytest
from hypothesis import settings

from hypradon import CmpGather, RadonImage, RegularGrid2, plan
from hypradon.cli import benchmark_grids, example_spec_path
from hypradon.synthetics import read_event_spec, synth_gather

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# filled by test_acceptance, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def three_event_gather(n: int, freq: float | None = None) -> CmpGather:
    """Bundled three-event synthetic on an ``n x n`` grid over 2.048 s by 2.048 km.

    ``freq`` overrides the wavelet peak frequency, needed on coarse grids.
    """
    dg, _ = benchmark_grids(n)
    events = read_event_spec(example_spec_path())
    if freq is not None:
        events = [replace(ev, freq=freq) for ev in events]
    return synth_gather(dg, events)


@pytest.fixture(scope="session")
def small_plan():
    dg, rg = benchmark_grids(64)
    return plan(dg, rg)


@pytest.fixture(scope="session")
def plan128():
    dg, rg = benchmark_grids(128)
    return plan(dg, rg)


def random_pair(p, seed=0):
    rng = np.random.default_rng(seed)
    f = CmpGather(p.data_grid, rng.standard_normal(p.data_grid.shape))
    g = RadonImage(p.radon_grid, rng.standard_normal(p.radon_grid.shape))
    return f, g


def unit_grids(n: int, tau0=0.3, qmin=0.2, qmax=0.8, nq=None):
    nq = nq or n
    dg = RegularGrid2(n, n, 0.0, 1.0 / (n - 1), 0.0, 1.0 / (n - 1))
    rg = RegularGrid2(n, nq, tau0, (1.0 - tau0) / (n - 1), qmin, (qmax - qmin) / (nq - 1))
    return dg, rg
