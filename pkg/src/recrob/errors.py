"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class CapacityError(InvalidInputError):
    """An exact/enumerative routine was asked for more than it can handle."""


class DegenerateModelError(InvalidInputError):
    """A classifier has no usable decision boundary (e.g. zero weights)."""


class SchemaError(ValueError):
    """A serialized object violates its schema; the message names the field."""


class TrainingError(RuntimeError):
    """Training diverged; the message carries the epoch index."""
