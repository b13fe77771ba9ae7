import numpy as np
import pytest

from viscontact import discretization as fe
from viscontact.geometry import BedProfile, CavityRoof, build_reference_mesh, deform_mesh


def make_mesh(n_e=16, n_layers=3, r=0.05, H=1.0, grading=1.5, roof=None):
    bed = BedProfile(r)
    ref = build_reference_mesh(n_e, n_layers, H, grading)
    roof = roof if roof is not None else CavityRoof.attached(bed, n_e)
    mesh = deform_mesh(ref, roof, H)
    return mesh, fe.build_spaces(ref), bed, roof


@pytest.fixture
def small_mesh():
    return make_mesh()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance check, echoed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
