"""Error types shared across the toolkit.

Every error carries a short machine-readable ``code`` so the command line
front end can map it to an exit status without string matching.
"""


class NerfSynthError(Exception):
    code = "ERROR"
    #: exit status used by the CLI
    exit_status = 3

    def __init__(self, message=""):
        super().__init__(f"{self.code}: {message}" if message else self.code)


class ExemplarTooSmallError(NerfSynthError, ValueError):
    code = "EXEMPLAR_TOO_SMALL"


class EmptyMaskError(NerfSynthError, ValueError):
    code = "EMPTY_MASK"


class NoCandidatesError(NerfSynthError, ValueError):
    code = "NO_CANDIDATES"


class BoundaryTooLargeError(NerfSynthError, ValueError):
    code = "LB_TOO_LARGE"


class SizeMismatchError(NerfSynthError, ValueError):
    code = "SIZE_MISMATCH"


class ChannelEmptyError(NerfSynthError, ValueError):
    code = "CHANNEL_EMPTY"


class UnknownModeError(NerfSynthError, ValueError):
    code = "UNKNOWN_MODE"


class UnsupportedSurfaceError(NerfSynthError, ValueError):
    code = "UNSUPPORTED_SURFACE"


class BundleFormatError(NerfSynthError, ValueError):
    code = "BAD_FORMAT"


class NumericalError(NerfSynthError, ArithmeticError):
    code = "NUMERICAL_FAILURE"
    exit_status = 4


class NonConvergenceWarning(UserWarning):
    """Raised (as a warning) when a deformation fit ends above its loss threshold."""
