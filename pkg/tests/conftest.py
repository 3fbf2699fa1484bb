import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neutral_supply.dcgrid import REFERENCE_STORAGE, dcgrid_network
from neutral_supply.model import StorageCertificate

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def dc_net():
    return dcgrid_network()


@pytest.fixture
def dc_cert(dc_net):
    return StorageCertificate.certify(dc_net, REFERENCE_STORAGE)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
