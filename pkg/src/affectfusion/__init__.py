"""Continuous multimodal affect regression: feature encoding, per-dimension
MLP regression, CCC scoring and weighted late fusion."""

from affectfusion.errors import AffectError, NumericError, ValidationError

__version__ = "0.1.0"

DIMENSIONS = ("arousal", "valence", "liking")

__all__ = ["AffectError", "NumericError", "ValidationError", "DIMENSIONS", "__version__"]
