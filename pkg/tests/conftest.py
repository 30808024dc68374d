import pytest

from plaplace import NoiseSchedule, TrainConfig, draw_gmm, make_rng, sample_gmm, train


@pytest.fixture(scope="session")
def default_gmm():
    """The standard experiment density: 3 equal-weight components, unit variance."""
    return draw_gmm(seed=7)


@pytest.fixture(scope="session")
def schedule():
    return NoiseSchedule.linear()


@pytest.fixture(scope="session")
def trained_model(default_gmm, schedule):
    """Default-recipe model on 1000 mixture draws; shared across tests."""
    data = sample_gmm(default_gmm, 1000, make_rng(0))
    return train(data, schedule, TrainConfig(seed=0))
