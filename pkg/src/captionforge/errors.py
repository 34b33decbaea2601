"""Exception types shared across the toolkit."""


class CaptionForgeError(Exception):
    """Base class for every error raised by captionforge."""


class InputError(CaptionForgeError, ValueError):
    """Malformed or missing user input (files, JSON lines, configs)."""


class EmptyCorpus(CaptionForgeError, ValueError):
    pass


class IdOutOfRange(CaptionForgeError, IndexError):
    pass


class MismatchedIds(CaptionForgeError, ValueError):
    pass


class EmptyIdf(CaptionForgeError, ValueError):
    pass


class DimensionMismatch(CaptionForgeError, ValueError):
    pass


class LengthMismatch(CaptionForgeError, ValueError):
    pass


class MismatchedVocab(CaptionForgeError, ValueError):
    pass


class NumericalError(CaptionForgeError, ArithmeticError):
    """Raised when a non-finite value shows up in training or decoding."""
