import pytest

from smc_ddpg.harness import Hyperparameters, TrackingTask
from smc_ddpg.net import ActorSpec, CriticSpec, layers
from smc_ddpg.plant import MassSpringDamper, SinusoidReference
from smc_ddpg.smc import SurfaceSpec


@pytest.fixture
def task():
    return TrackingTask(MassSpringDamper(), SurfaceSpec(), SinusoidReference())


@pytest.fixture
def generic_task():
    return TrackingTask(MassSpringDamper(), SurfaceSpec(), SinusoidReference(), use_kernel=False)


@pytest.fixture
def hyper():
    return Hyperparameters()


@pytest.fixture
def small_specs():
    return ActorSpec(2, layers(8, 8)), CriticSpec(2, layers(8), layers(8), layers(8))


# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
