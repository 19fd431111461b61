import csv
from pathlib import Path

import pytest

from vacneg.lattice import MASSLESS, CorrelationKernel, FiniteN, LatticeSpec
from vacneg.patches import ObservationProtocol
from vacneg.precision import PrecisionContext
from vacneg.scans import ScanGrid, negativity_scan

DATA = Path(__file__).parent / "data"
ALL_PROTOCOLS = [ObservationProtocol.MeasuredPhi, ObservationProtocol.MeasuredPi, ObservationProtocol.Traced]


def read_golden(name):
    with open(DATA / name, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def ctx():
    return PrecisionContext(512)


@pytest.fixture(scope="session")
def ctx256():
    return PrecisionContext(256)


@pytest.fixture(scope="session")
def massless(ctx):
    return CorrelationKernel(LatticeSpec(MASSLESS), ctx)


@pytest.fixture(scope="session")
def massive(ctx):
    return CorrelationKernel(LatticeSpec(0.3), ctx)


@pytest.fixture(scope="session")
def lattice6(ctx):
    return CorrelationKernel(LatticeSpec(0.3, FiniteN(6)), ctx)


@pytest.fixture(scope="session")
def table1_records(ctx, massless):
    """The full d = 16 massless scan, keyed by (rt, protocol)."""
    rts = list(range(0, 321, 4))
    grid = ScanGrid(16, MASSLESS, ALL_PROTOCOLS, rts, ctx)
    return {(r.rt, r.protocol): r for r in negativity_scan(grid, massless)}
