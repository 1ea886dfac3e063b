"""Exception hierarchy.

Every error raised on purpose by the package derives from ``LVSegError`` so
the CLI can map it to an exit code. Input-validation problems derive from
``ValidationError`` (exit 2); problems with the data itself derive from
``DataError`` (exit 3).
"""


class LVSegError(Exception):
    """Base class for package errors."""


class ValidationError(LVSegError, ValueError):
    """Arguments or configuration are invalid."""


class DataError(LVSegError):
    """Input data is malformed, missing or unusable."""


# ingest
class MissingTag(DataError):
    def __init__(self, tag):
        self.tag = tag
        super().__init__(f"required DICOM tag ({tag[0]:04X},{tag[1]:04X}) is missing")


class UnsupportedTransferSyntax(DataError):
    pass


class TruncatedPixelData(DataError):
    pass


class BadMagic(DataError):
    pass


class UnsupportedDatatype(DataError):
    pass


class HeaderDimMismatch(DataError):
    pass


class DegeneratePolygon(ValidationError):
    pass


class ManifestMismatch(DataError):
    pass


class MissingFile(DataError, FileNotFoundError):
    pass


class StudyIOError(DataError, OSError):
    pass


# imgproc
class NonPositiveSpacing(ValidationError):
    pass


class InvalidIop(ValidationError):
    pass


class DegenerateImageWarning(UserWarning):
    """Intensity normalization hit a constant image; output is all zeros."""


# roi
class TooFewFrames(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class DegenerateMap(DataError):
    pass


class NoCircles(DataError):
    pass


class RoiNotFound(DataError):
    pass


class RectOutOfBounds(ValidationError):
    pass


# unet
class InvalidConfig(ValidationError):
    pass


class TooFewPatients(ValidationError):
    pass


class DivergedLoss(LVSegError, FloatingPointError):
    pass


class WeightFileError(DataError, OSError):
    pass


class ConfigMismatch(ValidationError):
    pass


# postproc
class NoSignal(DataError):
    pass


# volume
class TooFewSlices(DataError):
    pass


class NonPositiveEDV(DataError):
    pass


class LengthMismatch(ValidationError):
    pass


class DuplicateLocation(DataError):
    pass


class UnknownSex(DataError):
    pass


class NonSquareMask(ValidationError):
    pass


# evaluation
class EmptyInput(ValidationError):
    pass


class InvalidBands(ValidationError):
    pass


class OutOfRangeClass(ValidationError):
    pass
