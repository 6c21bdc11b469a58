"""Exception types shared across the package."""


class TextTrackError(Exception):
    """Base class for every error raised by texttrack."""


class DegenerateGeometry(TextTrackError, ValueError):
    """Zero-area polygons, non-PSD covariances and similar invalid geometry."""


class ShapeError(TextTrackError, ValueError):
    pass


class LabelError(TextTrackError, ValueError):
    pass


class TrainingDiverged(TextTrackError, RuntimeError):
    pass


class OrderError(TextTrackError, ValueError):
    """Frame indices out of order or duplicate tracklet ids within a frame."""


class EmptyPool(TextTrackError, LookupError):
    pass


class EmptyGroundTruth(TextTrackError, ValueError):
    pass


class SpecError(TextTrackError, ValueError):
    """Infeasible or unknown synthetic scenario."""


class ValidationError(TextTrackError, ValueError):
    """Malformed or inconsistent input files."""
