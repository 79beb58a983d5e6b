"""Exception types shared across the toolkit."""


class SceError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SceError):
    """Malformed value or argument (bad shapes, out-of-range fields)."""


class ConfigurationError(SceError):
    """Inconsistent or unusable configuration."""


class AlignmentError(SceError):
    """Signals that must share length/rate/frame grid do not."""


class AudioIoError(SceError):
    """WAV file cannot be read or written as 16-bit PCM mono."""


class StimulusError(SceError):
    """Stimulus construction impossible (e.g. masker too short)."""


class InsufficientDataError(SceError):
    """Not enough observations to compute the requested estimate."""


class StateError(SceError):
    """Operation applied to a state machine in the wrong state."""


class SessionTimeout(SceError):
    """An interactive session was abandoned before completion."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history if history is not None else []
