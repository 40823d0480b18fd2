"""Exception hierarchy for the engine.

Vision errors are recoverable per-frame conditions (the live loop keeps
running and the UI is told); config and IO errors abort the operation
that raised them.
"""


class EngineError(Exception):
    """Base class for all engine errors."""


# vision

class EmptyRegion(EngineError):
    """A projection or extraction was asked for over zero pixels."""


class NostrilsNotFound(EngineError):
    """Fewer than two qualifying projection minima in the search window."""


class DegeneratePair(EngineError):
    """Both nostril coordinates identical; geometry undefined."""


class TrackingLost(EngineError):
    """Tracker left its sanity envelope; caller must re-initialize."""


class MouthClosed(EngineError):
    """Segmentation mask is empty. Not a failure: features read as zero."""


class InitFailed(EngineError):
    """Initialization gesture produced no usable track state."""


# syrinx

class ConfigError(EngineError):
    """A configuration value violates its documented range or derivation."""


class NumericalBlowup(EngineError):
    """Non-finite synthesis state. Carries the control targets that did it."""

    def __init__(self, msg: str, controls=None):
        super().__init__(msg)
        self.controls = controls


class TooShort(EngineError):
    """Not enough samples for the requested analysis."""


# mapping

class EmptyCapture(EngineError):
    """Calibration capture saw no feature frames."""


class RouteConflict(EngineError):
    """Two routes target the same control; rejected at load time."""


# io

class NotFound(EngineError):
    """Input path missing or empty."""


class MalformedImage(EngineError):
    """Image file violates its format; carries the filename."""


class MixedDimensions(EngineError):
    """Frame sequence changes resolution mid-stream."""


class ConfigParseError(EngineError):
    """Config text rejected; message carries the line number."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class BindError(EngineError):
    """Service could not bind its port."""
