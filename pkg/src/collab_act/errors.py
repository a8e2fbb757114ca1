"""Exception hierarchy. Every domain failure derives from ``CollabActError``."""


class CollabActError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class NonFinite(CollabActError, ValueError):
    pass


class DimensionMismatch(CollabActError, ValueError):
    pass


class LengthMismatch(CollabActError, ValueError):
    pass


class EmptyOverlap(CollabActError, ValueError):
    pass


class GapExceeded(CollabActError, ValueError):
    def __init__(self, stream, grid_time, gap):
        self.stream = stream
        self.grid_time = grid_time
        self.gap = gap
        super().__init__(
            f"stream {stream!r}: nearest sample is {gap:.4f} s from grid time {grid_time:.4f} s"
        )


class NonUnitQuaternion(CollabActError, ValueError):
    pass


class InsufficientSamples(CollabActError, ValueError):
    pass


class DegenerateData(CollabActError, ValueError):
    pass


class InsufficientData(CollabActError, ValueError):
    pass


class LayoutMismatch(CollabActError, ValueError):
    pass


class EmptyDataset(CollabActError, ValueError):
    pass


class NonFiniteLoss(CollabActError, FloatingPointError):
    pass


class EmptyInput(CollabActError, ValueError):
    pass


class FormatError(CollabActError):
    """Base for container/checkpoint decoding failures."""


class Io(FormatError, OSError):
    pass


class FormatVersionMismatch(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass
