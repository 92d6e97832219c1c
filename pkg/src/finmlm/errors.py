"""Exception hierarchy shared across the toolkit."""


class FinmlmError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FinmlmError):
    """Invalid configuration or empty/unusable inputs."""


class ContractViolation(FinmlmError):
    """A documented precondition was violated by the caller."""


class InputError(FinmlmError):
    """A file could not be read or parsed; carries the offending path."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message if path is None else f"{message}: {path}")
        self.path = path


class DivergenceError(FinmlmError):
    """Training produced a non-finite loss; names the component that blew up."""

    def __init__(self, component: str, value: float):
        super().__init__(f"non-finite loss in {component}: {value!r}")
        self.component = component
        self.value = value
