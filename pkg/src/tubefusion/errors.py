"""Exception types shared across the package."""


class TubeFusionError(Exception):
    """Base class for all package errors."""


class ShapeError(TubeFusionError, ValueError):
    pass


class EmptyVideo(TubeFusionError):
    """Video has fewer frames than one segment."""


class NoMotion(TubeFusionError):
    """A segment has no action boxes to build tubes from."""


class SmallCorpus(TubeFusionError):
    """Fewer distinct descriptors than requested codebook centers."""

    def __init__(self, achievable_k, requested_k):
        super().__init__(
            f"only {achievable_k} distinct vectors available for k={requested_k}")
        self.achievable_k = achievable_k
        self.requested_k = requested_k


class DataGap(TubeFusionError):
    """A static feature row is missing for some frame."""

    def __init__(self, frame_index, message=None):
        super().__init__(message or f"no static feature row for frame {frame_index}")
        self.frame_index = frame_index


class NotAHistogram(TubeFusionError, ValueError):
    pass


class Diverged(TubeFusionError):
    def __init__(self, epoch):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch


class ConfigError(TubeFusionError, ValueError):
    pass


class SplitError(TubeFusionError, ValueError):
    pass


class FormatError(TubeFusionError, ValueError):
    """Malformed file contents."""


class DegenerateWarning(UserWarning):
    """An operation hit a degenerate input and used its documented fallback."""
