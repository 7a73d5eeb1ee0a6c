"""Motion-tube activity recognition with static/motion descriptor fusion."""
from . import clustering, core, descriptors, formats, fusion, temporal, trajectory, tubes
from .errors import (ConfigError, DataGap, DegenerateWarning, Diverged, EmptyVideo, FormatError,
                     NoMotion, NotAHistogram, ShapeError, SmallCorpus, SplitError,
                     TubeFusionError)

__version__ = "0.1.0"

__all__ = ["clustering", "core", "descriptors", "formats", "fusion", "temporal", "trajectory",
           "tubes", "ConfigError", "DataGap", "DegenerateWarning", "Diverged", "EmptyVideo",
           "FormatError", "NoMotion", "NotAHistogram", "ShapeError", "SmallCorpus", "SplitError",
           "TubeFusionError"]
