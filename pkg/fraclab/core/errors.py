# fraclab/core/errors.py
"""Exception taxonomy shared by the numerics and the CLI.

Every error carries the process exit code the harness should use when it escapes a run:
2 for configuration and parameter problems, 3 for solver-side failures, 1 for failed
acceptance assertions.
"""

from __future__ import annotations

from collections.abc import Sequence

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class FraclabError(Exception):
    exit_code: int = EXIT_SOLVER


class ConfigError(FraclabError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field_path: str | None = None):
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")


class ParameterError(FraclabError, ValueError):
    exit_code = EXIT_CONFIG


class DomainConstructionError(FraclabError, ValueError):
    exit_code = EXIT_CONFIG


class CoefficientError(FraclabError, ValueError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, nodes: Sequence[int] = ()):
        self.nodes = list(nodes)
        shown = ", ".join(str(n) for n in self.nodes[:10])
        more = f" (+{len(self.nodes) - 10} more)" if len(self.nodes) > 10 else ""
        suffix = f" at nodes [{shown}]{more}" if self.nodes else ""
        super().__init__(f"{message}{suffix}")


class SolverError(FraclabError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        detail = f" (residual {residual:.3e})" if residual is not None else ""
        super().__init__(f"{message}{detail}")


class MittagLefflerOverflowError(FraclabError, OverflowError):
    pass


class SingularInputError(FraclabError, ValueError):
    pass


class UnsupportedOperatorError(FraclabError):
    pass


class TailRiskError(FraclabError):
    def __init__(self, p: float, certificate: float, threshold: float):
        self.p = p
        self.certificate = certificate
        self.threshold = threshold
        super().__init__(
            f"Laplace tail at p={p:g} not certifiable: relative tail {certificate:.3e} "
            f"exceeds {threshold:.1e}; extend the horizon or enable power-law extension"
        )


class InsufficientSignalError(FraclabError):
    def __init__(self, message: str, suggested_horizon: float | None = None):
        self.suggested_horizon = suggested_horizon
        hint = f"; try a horizon of about {suggested_horizon:g}" if suggested_horizon else ""
        super().__init__(f"{message}{hint}")


class PreconditionError(FraclabError, ValueError):
    pass


class PropertyFailure(FraclabError, AssertionError):
    exit_code = EXIT_ASSERTION
