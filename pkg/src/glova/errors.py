"""Exception types shared across the framework."""


class GlovaError(Exception):
    """Base class for all framework errors."""


class ConfigError(GlovaError):
    """Invalid run configuration or benchmark definition."""


class DimensionError(GlovaError):
    """Structural mismatch between a vector and the object consuming it."""


class StateError(GlovaError):
    """Operation invoked before its required state was initialized."""


class EvaluationError(GlovaError):
    """An evaluator failed; carries whatever diagnostics were captured."""

    def __init__(self, message: str, *, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SeedingError(GlovaError):
    """Initial sampling exhausted its budget without a feasible design."""

    def __init__(self, message: str, best_found=None):
        super().__init__(message)
        self.best_found = best_found
