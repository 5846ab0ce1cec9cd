from typing import Any


class LimsetError(Exception):
    """Base class for all errors raised by limset."""


class DimensionError(LimsetError, ValueError):
    pass


class ParameterError(LimsetError, ValueError):
    pass


class InputError(LimsetError, ValueError):
    pass


class CapabilityError(LimsetError):
    """The model does not support the requested operation (e.g. sampling in exact mode)."""


class ClassifierError(LimsetError):
    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(LimsetError):
    def __init__(self, message: str, diagnostics: list[tuple[str, str]] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        lines = [super().__str__()]
        lines.extend(f"  {loc}: {msg}" for loc, msg in self.diagnostics)
        return "\n".join(lines)
