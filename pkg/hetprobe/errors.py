from typing import Any, Dict, List, Optional


class HetprobeError(Exception):
    pass


class InvalidArgumentError(HetprobeError):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigError(HetprobeError):
    def __init__(self, errors: List[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class NumericalError(HetprobeError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        if not self.diagnostics:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{self.message} ({details})"


class UnsupportedConfigurationError(HetprobeError):
    pass
