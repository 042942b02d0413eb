"""Exception hierarchy shared by the core, the formats and the entry points."""


class HvdFlowError(Exception):
    """Base class for every error raised by this package."""


class GridError(HvdFlowError):
    """Shape mismatch, non-finite values or an image too small for the pyramid."""


class FlowFormatError(HvdFlowError):
    """Malformed .flo file or unsupported image."""


class SolverError(HvdFlowError):
    """The iteration produced non-finite values or could not be stabilised."""


class ConfigError(HvdFlowError):
    """Invalid or unknown configuration."""
