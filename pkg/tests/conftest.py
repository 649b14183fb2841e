import numpy as np
import pytest

from qnmlab.constants import C0
from qnmlab.materials import NonDispersive, load_preset
from qnmlab.mie import TM, SphereGeometry, find_mie_qnm

# outcome lines of the acceptance criteria, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


# Lowest l = 1 TM roots, located once with scan_mie_roots and
# count_roots_in_contour; Newton refines them in the fixtures.
DIELECTRIC_GUESS = 681259068331649.2 - 378118607851658.7j
DIELECTRIC_SECOND_GUESS = 1337930110751278.5 - 211362039065610.84j


@pytest.fixture(scope="session")
def silver():
    geom = SphereGeometry(40e-9, load_preset("silver-arc10"))
    mode = find_mie_qnm(geom, 1, TM, 2 * np.pi * C0 / (390e-9 + 32e-9j))
    return geom, mode


@pytest.fixture(scope="session")
def dielectric():
    geom = SphereGeometry(500e-9, NonDispersive(4.0, 1.0))
    mode = find_mie_qnm(geom, 1, TM, DIELECTRIC_GUESS)
    return geom, mode


@pytest.fixture(scope="session")
def dielectric_second(dielectric):
    geom, _ = dielectric
    return find_mie_qnm(geom, 1, TM, DIELECTRIC_SECOND_GUESS)
