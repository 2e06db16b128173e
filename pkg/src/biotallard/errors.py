"""Exception hierarchy shared by all modules."""


class BiotAllardError(Exception):
    """Base class for every error raised by the package."""


class InsufficientSamples(BiotAllardError, ValueError):
    pass


class FitDiverged(BiotAllardError, RuntimeError):
    pass


class PositivityViolated(BiotAllardError, ValueError):
    """Fitted relaxation times or weights are not strictly positive."""

    def __init__(self, message, poles=None, residues=None):
        super().__init__(message)
        self.poles = poles
        self.residues = residues


class DimensionMismatch(BiotAllardError, ValueError):
    pass


class InvalidExtent(BiotAllardError, ValueError):
    pass


class SingularSystem(BiotAllardError, RuntimeError):
    pass


class LinearSolveFailed(BiotAllardError, RuntimeError):
    pass


class StabilityBreach(BiotAllardError, RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ResolutionError(BiotAllardError, ValueError):
    pass


class ConfigError(BiotAllardError, ValueError):
    pass


class RuntimeFailure(BiotAllardError, RuntimeError):
    pass
