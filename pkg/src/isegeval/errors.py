"""Exception hierarchy shared across the harness."""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""


# --- volume I/O ---------------------------------------------------------


class MalformedFile(HarnessError):
    """File is not a well-formed NIfTI-1 single file."""


class UnsupportedDatatype(HarnessError):
    """NIfTI datatype (or scaling) outside the supported subset."""


class IoError(HarnessError):
    """Filesystem failure while reading or writing a volume."""


class OutOfCrop(HarnessError):
    """Point lies outside the crop box it was to be expressed in."""


# --- metrics ------------------------------------------------------------


class ShapeMismatch(HarnessError):
    """Two grids that must match in shape do not."""


class InsufficientSeries(HarnessError):
    """Metric series too short for the requested statistic."""


class EmptyInput(HarnessError):
    """Operation requires at least one element."""


# --- configuration / planning -------------------------------------------


class ConfigError(HarnessError):
    """Schema violation in a fingerprint or task document.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class NoCommonPrompt(HarnessError):
    """No prompt type is supported by every algorithm under comparison."""


# --- wire protocol ------------------------------------------------------


class ConnectError(HarnessError):
    """Endpoint refused the connection or never answered."""


class ProtocolVersionError(HarnessError):
    """Client and application disagree on the protocol version."""


class ProtocolError(HarnessError):
    """Application sent a reply that violates the message contract."""


class InferenceTimeout(HarnessError):
    """Application did not answer a segmentation request in time."""


class NativeSpaceViolation(HarnessError):
    """Returned mask shape differs from the original image grid.

    The harness never resamples predictions; a wrong-shape response is a
    hard failure.
    """


class ApplicationError(HarnessError):
    """Application answered a request with an error message."""
