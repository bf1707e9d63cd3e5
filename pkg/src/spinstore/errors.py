"""Exception hierarchy shared by all modules."""


class SpinStoreError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(SpinStoreError, ValueError):
    pass


class DegenerateGeometry(SpinStoreError, ValueError):
    """Two sites coincide, so the r^-3 coupling diverges."""


class InvalidGeometry(SpinStoreError, ValueError):
    pass


class InvalidPartition(SpinStoreError, ValueError):
    pass


class InvalidSchedule(SpinStoreError, ValueError):
    pass


class InvalidProtocol(SpinStoreError, ValueError):
    pass


class NumericalError(SpinStoreError, ArithmeticError):
    """An operator broke a structural invariant (Hermiticity, unitarity, ...)."""


class ConfigError(SpinStoreError, ValueError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ResourceGuardError(SpinStoreError, RuntimeError):
    pass
