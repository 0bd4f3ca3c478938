"""Engine-wide exception types."""


class EngineError(Exception):
    """Base class for all engine errors."""


class SingularLogarithmError(EngineError, ValueError):
    """Rotation angle too close to pi: the logarithm branch is ambiguous."""


class DegenerateConfigurationError(EngineError, ValueError):
    """Point set too degenerate (collinear/coincident) for a unique alignment."""


class InvalidStateError(EngineError, RuntimeError):
    """Operation called in a state that does not permit it."""


class DenoiserError(EngineError, RuntimeError):
    """Denoiser step failed; carries the progressive slot index."""

    def __init__(self, slot_index: int, cause: Exception):
        super().__init__(f"denoiser step failed at progressive slot {slot_index}: {cause}")
        self.slot_index = slot_index


class ParseError(EngineError, ValueError):
    """Malformed text record; message names the offending line."""

    def __init__(self, path: str, line_no: int, detail: str):
        super().__init__(f"{path}:{line_no}: {detail}")
        self.path = path
        self.line_no = line_no
