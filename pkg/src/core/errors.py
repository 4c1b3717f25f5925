"""Error types raised across hyperlens."""


class HyperlensError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidInputError(HyperlensError, ValueError):
    """Input has the wrong shape, is empty, or contains non-finite values."""


class InvalidCurvatureError(InvalidInputError):
    pass


class DegenerateInputError(InvalidInputError):
    """Input is well-formed but the requested quantity is undefined for it."""


class InvalidParameterError(InvalidInputError):
    pass


class EmptyChildError(InvalidInputError):
    """A child mask has no set bit, so its inclusion score is undefined."""


class InvalidMetricError(InvalidInputError):
    pass


class IncompleteSceneError(HyperlensError):
    pass


class InsufficientDataError(HyperlensError):
    pass


class InvalidConfigError(HyperlensError, ValueError):
    pass


class BundleFormatError(HyperlensError):
    """A bundle on disk disagrees with its manifest."""


class MissingBlobError(BundleFormatError, FileNotFoundError):
    pass


class DataCorruptionError(BundleFormatError):
    pass
