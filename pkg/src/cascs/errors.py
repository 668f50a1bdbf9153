"""Shared exception types."""


class FormatError(ValueError):
    """A serialized artifact (matrix file, measurement file, ratio map) is malformed."""


class ConvergenceError(RuntimeError):
    """An iterative routine hit its hard safety cap without terminating."""
