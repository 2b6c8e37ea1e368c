import pytest

from fraclab.core.registry import _EXPERIMENT_REGISTRY, clear_registry, experiment, get_experiment_registry


@pytest.fixture(autouse=True)
def wipe_registry():
    old_registry = _EXPERIMENT_REGISTRY.copy()
    clear_registry()
    yield old_registry
    clear_registry()
    _EXPERIMENT_REGISTRY.update(old_registry)


def test_legitimate_registration():
    def fake_experiment(ctx):
        return None

    fake_experiment.__module__ = "fraclab.experiments.fake"

    decorated = experiment("fake")(fake_experiment)
    registry = get_experiment_registry()

    assert registry["fake"] is decorated
    assert decorated._experiment_name == "fake"


def test_registry_view_is_a_copy():
    get_experiment_registry()["ghost"] = print
    assert "ghost" not in _EXPERIMENT_REGISTRY


def test_duplicate_names_rejected():
    def first(ctx):
        return None

    first.__module__ = "fraclab.experiments.fake"
    experiment("twice")(first)
    with pytest.raises(RuntimeError, match="Duplicate experiment name: twice"):
        experiment("twice")(first)


def test_foreign_module_rejection():
    def injected(ctx):
        return None

    injected.__module__ = "temp_script"

    with pytest.raises(RuntimeError, match="Unauthorized experiment origin: temp_script"):
        experiment("injected")(injected)
    assert "injected" not in get_experiment_registry()


def test_every_shipped_experiment_is_registered(wipe_registry):
    from fraclab.main import ALLOWED_MODULES, discover_experiments

    # modules are imported once, so restore what they registered before the wipe
    _EXPERIMENT_REGISTRY.update(wipe_registry)
    found = discover_experiments()
    assert len(found) == len(ALLOWED_MODULES)
    assert {fn.__module__.rsplit(".", 1)[1] for fn in found.values()} == set(ALLOWED_MODULES)
