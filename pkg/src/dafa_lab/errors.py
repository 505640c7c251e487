"""Exception types raised across the package."""


class DafaLabError(Exception):
    """Base class for all package errors."""


class InvalidTask(DafaLabError, ValueError):
    pass


class InvalidSigma(InvalidTask):
    pass


class NonPositiveMargin(DafaLabError, ValueError):
    """The perturbed class means touch or cross: g <= 0."""


class InvalidOrder(DafaLabError, ValueError):
    pass


class InvalidMargins(DafaLabError, ValueError):
    pass


class InvalidGaps(DafaLabError, ValueError):
    pass


class EmptyArchitecture(DafaLabError, ValueError):
    pass


class DimensionMismatch(DafaLabError, ValueError):
    pass


class InvalidMatrix(DafaLabError, ValueError):
    pass


class ZeroEmbedding(DafaLabError, ValueError):
    pass


class DegenerateRow(DafaLabError, ValueError):
    pass


class EmptyClass(DafaLabError, ValueError):
    pass


class ConfigError(DafaLabError, ValueError):
    pass


class ZeroBaseline(DafaLabError, ValueError):
    pass


class DegenerateInput(DafaLabError, ValueError):
    pass
