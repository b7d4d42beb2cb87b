"""Exception types raised across the package.

Everything derives from :class:`LoraStyleError` so callers can catch one
base class. Data-shaped problems (bad files, mismatched inputs) and numeric
problems (degenerate fits, non-finite values) are kept as distinct leaves
because the CLI maps them to different exit codes.
"""


class LoraStyleError(Exception):
    """Base class for all errors raised by this package."""


# -- file / input format -------------------------------------------------

class ParseError(LoraStyleError):
    """Malformed safetensors container or unrecognized tensor key."""


class PairingError(LoraStyleError):
    """A low-rank factor is missing its sibling (down without up, or vice versa)."""


class ShapeError(LoraStyleError):
    """Tensor shapes incompatible with a low-rank (A, B) pair."""


class HeterogeneousRankError(LoraStyleError):
    """Layers of one adapter file declare different ranks."""


class ManifestError(LoraStyleError):
    """Dataset manifest fails validation."""


# -- selection / bookkeeping ---------------------------------------------

class EmptySelectionError(LoraStyleError):
    """A sub-network selector matched no layers."""


class LayoutError(LoraStyleError):
    """Weight vectors with different layouts were mixed."""


class AlignmentError(LoraStyleError):
    """Two embeddings do not describe the same samples in the same order."""


class CoverageError(LoraStyleError):
    """A label required on both sides of an operation is missing from one."""


class LengthError(LoraStyleError):
    """Vector or list lengths do not match."""


class SizeError(LoraStyleError):
    """Not enough samples for the requested operation."""


class ConfigError(LoraStyleError):
    """Invalid parameter combination."""


# -- numerics -------------------------------------------------------------

class NumericError(LoraStyleError):
    """Non-finite values where finite ones are required."""


class RankError(LoraStyleError):
    """More principal components requested than the sample count allows."""


class FitError(LoraStyleError):
    """Decomposition failed: zero-variance or rank-deficient data.

    ``available`` carries the usable component count when rank deficiency
    is the cause (0 for zero-variance input).
    """

    def __init__(self, message: str, available: int | None = None):
        super().__init__(message)
        self.available = available


class DegenerateAxisError(LoraStyleError):
    """A calibration axis has no spread to fit against."""

    def __init__(self, message: str, axis: int | None = None):
        super().__init__(message)
        self.axis = axis
