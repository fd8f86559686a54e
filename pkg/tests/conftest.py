import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rabistark.models import ModelParams

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def fig3_end():
    """End point of the asymmetric Stark passage (g_ij = 1)."""
    return ModelParams.symmetric((1 / 3, 2 / 3), (1.0, 1.0), 1.0, (2 / 3, 1 / 3))


def rng_params(seed, n=2, m=2, stark=True):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, (m, n)) if stark else None
    return ModelParams(rng.uniform(0.1, 1.0, n), rng.uniform(0.5, 1.5, m), rng.uniform(-1, 1, (m, n)), u)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
