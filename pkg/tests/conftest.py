import numpy as np
import pytest

from echo_collapse.formats import DEFAULT_CLUSTER, DEFAULT_GTENSORS, data_path
from echo_collapse.geometry import load_cluster
from echo_collapse.spincore import load_gtensors

ACCEPTANCE: dict[str, tuple[bool, str]] = {}

NEIGHBOURS_I = np.array([
    [3.40, -0.66, 3.23, -0.81], [3.46, -3.45, 0.28, 0.00], [3.51, -1.66, -1.88, 2.45],
    [3.62, 2.27, -2.24, -1.72], [3.72, -1.79, 2.15, 2.45], [4.15, -2.79, -2.95, -0.81],
    [4.70, 3.93, -0.37, 2.55], [4.95, -1.66, -1.88, -4.27], [5.10, -1.79, 2.15, -4.27],
    [5.19, 5.06, 0.71, -0.91], [5.46, -1.01, -5.11, 1.64], [5.46, 1.01, 5.11, 1.64],
    [5.50, 3.27, 2.86, -3.36], [5.50, 3.27, 2.86, 3.36], [5.74, 3.93, -0.37, -4.17],
    [5.93, 2.27, -2.24, 5.00], [6.14, -2.44, 5.38, 1.64], [6.27, 2.92, -5.47, -0.91],
    [6.48, -5.71, 2.52, -1.72], [6.48, 5.71, -2.52, -1.72],
])

NEIGHBOURS_II = np.array([
    [3.40, 0.66, -3.23, -0.81], [3.46, 3.45, -0.28, 0.00], [3.51, 1.66, 1.88, 2.45],
    [3.62, -2.27, 2.24, -1.72], [3.72, 1.79, -2.15, 2.45],
])


@pytest.fixture(scope="session")
def gset():
    return load_gtensors(data_path(DEFAULT_GTENSORS))


@pytest.fixture(scope="session")
def cluster500():
    return load_cluster(data_path(DEFAULT_CLUSTER))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
