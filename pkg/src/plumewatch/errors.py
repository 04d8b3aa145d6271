"""Exception hierarchy shared across the package."""


class PlumewatchError(Exception):
    """Base class for all package errors."""


class FormatError(PlumewatchError):
    """A file does not conform to the expected on-disk format."""


class IntegrityError(PlumewatchError):
    """Parsed data violates a structural invariant (shape, value range)."""


class InsufficientDataError(PlumewatchError):
    """Too few valid pixels or samples to compute a result."""


class NoReferenceError(PlumewatchError):
    """No eligible reference acquisition for a target scene."""


class ExtrapolationError(PlumewatchError):
    """Requested point lies outside a tabulated grid."""


class RotationRejectedError(PlumewatchError):
    """Plume rotation pushed too much mass off the grid; resample a donor."""


class TrainingDivergedError(PlumewatchError):
    """Loss became non-finite during optimization."""


class FitError(PlumewatchError):
    """Curve fit on degenerate data (e.g. all detected or none)."""


class ConflictError(PlumewatchError):
    """Illegal state transition (e.g. reviewing an already-reviewed alert)."""


class NotFoundError(PlumewatchError):
    """Referenced record, site or file does not exist."""
