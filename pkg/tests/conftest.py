import numpy as np
import pytest

from turbokit.deepturbo import ModelConfig, build_model
from turbokit.training import DESK_MODEL, DESK_PRESET, TrainConfig, train

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240229)


@pytest.fixture(scope="session")
def desk_trained():
    """DeepTurbo desk preset trained once per session: (model, history)."""
    model = build_model(ModelConfig.preset("deepturbo", **DESK_MODEL), seed=0)
    return train(model, TrainConfig(**DESK_PRESET, seed=0))


@pytest.fixture(scope="session")
def criterion():
    def report(number, name, passed, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}  {detail}")
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
