class FractalCutLocusError(Exception):
    """Root of every error raised by this package."""


# --- Invalid input ---


class InvalidInput(FractalCutLocusError, ValueError):
    pass


class AlphabetOutOfRange(InvalidInput):
    pass


class UnsupportedDimension(InvalidInput):
    pass


class EmptySet(InvalidInput):
    pass


class AmplitudeTooLarge(InvalidInput):
    pass


class OutsideDomain(InvalidInput):
    pass


class DegenerateScales(InvalidInput):
    pass


class PositivityViolated(InvalidInput):
    pass


# --- Ill-posed regimes (k = 2) ---


class IllPosedRegime(FractalCutLocusError, ValueError):
    pass


class DivergentSeries(IllPosedRegime):
    pass


class DegenerateAlpha(IllPosedRegime):
    pass


# --- Geometry ---


class GeometryError(FractalCutLocusError):
    pass


class TangencyViolation(GeometryError):
    pass


class OverlappingHoles(GeometryError):
    pass


class DegenerateCollision(GeometryError):
    def __init__(self, message: str, addresses: tuple[str, str] | None = None):
        super().__init__(message)
        self.addresses = addresses


class OnSeam(GeometryError):
    pass


class NoAdmissibleYb(GeometryError):
    def __init__(self, message: str, feasible: tuple[float, float] | None = None):
        super().__init__(message)
        self.feasible = feasible


class SeamMismatch(GeometryError):
    pass


class BudgetExceeded(FractalCutLocusError):
    pass
