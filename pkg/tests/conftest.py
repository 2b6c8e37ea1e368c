import pytest

from fraclab.core.config import DomainSpec, ExperimentConfig, ScheduleSpec
from fraclab.experiments.shared.problem import Problem, build_problem, square_domain
from fraclab.main import discover_experiments


@pytest.fixture(autouse=True)
def preload_experiment_registry():
    """Import every experiment module so registry lookups see the full set."""
    discover_experiments()


@pytest.fixture
def rod_problem() -> Problem:
    """Unit interval, 64 cells, constant coefficients, one bump on [0.5, 0.75]."""
    return build_problem(ExperimentConfig(experiment="solver-crosscheck", domain=DomainSpec(cells=[64])))


@pytest.fixture
def staircase_problem() -> Problem:
    """Unit interval driven by a two-component schedule."""
    config = ExperimentConfig(
        experiment="solver-crosscheck",
        domain=DomainSpec(cells=[32]),
        schedule=ScheduleSpec(components=2, plateaus=[0.0, 1.0]),
    )
    return build_problem(config)


@pytest.fixture
def plate_problem() -> Problem:
    """Unit square, 16 x 16 cells, driven from the left and observed on the right."""
    return build_problem(ExperimentConfig(experiment="solver-crosscheck", domain=square_domain(16)))
