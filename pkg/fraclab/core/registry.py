# fraclab/core/registry.py
from collections.abc import Callable

from fraclab.core.logger import LoggerProxy
from fraclab.core.result import ExperimentContext, ExperimentResult

log = LoggerProxy(__name__)

ExperimentFunc = Callable[[ExperimentContext], ExperimentResult]
_EXPERIMENT_REGISTRY: dict[str, ExperimentFunc] = {}

EXPERIMENT_PACKAGE = "fraclab.experiments."


def experiment(name: str) -> Callable[[ExperimentFunc], ExperimentFunc]:
    """
    Decorator registering an experiment runner under its harness name.
    """

    def _decorator(fn: ExperimentFunc) -> ExperimentFunc:
        if name in _EXPERIMENT_REGISTRY:
            raise RuntimeError(f"Duplicate experiment name: {name}")

        module_name = getattr(fn, "__module__", "") or ""
        if not module_name.startswith(EXPERIMENT_PACKAGE):
            log.critical(
                "Rejecting experiment '%s' registered from foreign module '%s'", name, module_name
            )
            raise RuntimeError(f"Unauthorized experiment origin: {module_name}")

        fn._experiment_name = name  # type: ignore[attr-defined]
        _EXPERIMENT_REGISTRY[name] = fn
        return fn

    return _decorator


def get_experiment_registry() -> dict[str, ExperimentFunc]:
    return dict(_EXPERIMENT_REGISTRY)


def clear_registry() -> None:
    _EXPERIMENT_REGISTRY.clear()
