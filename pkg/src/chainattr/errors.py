"""Exception types shared across the package."""


class ChainAttrError(Exception):
    """Base class for all errors raised by this package."""


class PipelineSpecError(ChainAttrError):
    """A pipeline document failed to parse or validate."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class WidthError(ChainAttrError):
    """Vector or stage widths do not line up."""


class ArityError(ChainAttrError):
    """An exhaustive enumeration guard (player/feature count) was exceeded."""


class EfficiencyError(ChainAttrError):
    """An internal efficiency assertion failed (indicates a bug)."""

    def __init__(self, message, stage_index=None):
        self.stage_index = stage_index
        if stage_index is not None:
            message = f"stage {stage_index}: {message}"
        super().__init__(message)


class BaselineMismatchError(ChainAttrError):
    """A request referenced a baseline set the node does not recognize."""


class ProtocolError(ChainAttrError):
    """A wire message was malformed or carried an unsupported version."""
