"""Exception hierarchy shared by all layeract modules."""


class LayerActError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(LayerActError):
    """A value violates a documented precondition (non-finite, wrong sign, ...)."""


class ShapeError(LayerActError):
    """Array dimensions do not match the operation's contract."""


class Unsupported(LayerActError):
    """The requested operation is not defined for this activation kind."""


class DivergenceError(LayerActError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class FormatError(LayerActError):
    """A binary file does not conform to its expected layout."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class VersionError(FormatError):
    """A file was written with an incompatible format version."""
