import pytest

from saltda.data import ShiftSpec, synthetic_task
from saltda.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def pinned_task():
    """(source, target_train, test) from the default generator settings, seed 3."""
    return synthetic_task(ShiftSpec(), test_fraction=0.25)


@pytest.fixture(scope="session")
def a5_report(pinned_task):
    source, target, test = pinned_task
    return train(source, target, TrainConfig(seed=0), eval_set=test)
