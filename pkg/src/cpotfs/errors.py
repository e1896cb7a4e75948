"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised for invalid frame/channel/layout parameters or mismatched grids."""


class FramingError(ValueError):
    """Raised when a sample stream does not match the frame's CP schedule."""


class DetectionError(RuntimeError):
    """Raised when detection cannot run (e.g. empty channel operator)."""
