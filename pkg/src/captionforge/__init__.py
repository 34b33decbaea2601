"""captionforge: caption metrics, hybrid-reward SCST and ensemble decoding."""

__version__ = "0.1.0"
# bumped whenever checkpoint / vocabulary / report layouts change
FORMAT_VERSION = 1

from captionforge.errors import (  # noqa: E402
    CaptionForgeError,
    DimensionMismatch,
    EmptyCorpus,
    EmptyIdf,
    IdOutOfRange,
    InputError,
    LengthMismatch,
    MismatchedIds,
    MismatchedVocab,
    NumericalError,
)

__all__ = [
    "__version__",
    "FORMAT_VERSION",
    "CaptionForgeError",
    "DimensionMismatch",
    "EmptyCorpus",
    "EmptyIdf",
    "IdOutOfRange",
    "InputError",
    "LengthMismatch",
    "MismatchedIds",
    "MismatchedVocab",
    "NumericalError",
]
