# svann-interpretation/utility/exceptions.py

from typing import List, Optional

# Exit codes returned by main.dispatch
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class SvannError(Exception):
    """
    Base error for the toolkit. Mirrors an HTTP error: a machine-readable
    exit code plus a human-readable detail message.
    """
    exit_code: int = EXIT_DATA

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class UsageError(SvannError):
    """Bad flags or an unknown subcommand."""
    exit_code = EXIT_USAGE


class DataError(SvannError):
    """Input data or configuration that cannot be processed."""
    exit_code = EXIT_DATA


# --- Raster container errors ---

class RasterFormatError(DataError):
    pass

class BadMagicError(RasterFormatError):
    pass

class TruncatedPayloadError(RasterFormatError):
    pass

class PayloadLengthMismatchError(RasterFormatError):
    pass

class HeaderDecodeError(RasterFormatError):
    pass


# --- Geometry / bands ---

class GeometryError(DataError):
    pass

class MissingBandError(DataError):
    def __init__(self, band: str):
        super().__init__(f"raster has no band named '{band}'")
        self.band = band


# --- Rules / classification ---

class RuleSetValidationError(DataError):
    def __init__(self, detail: str, pairs: Optional[List[str]] = None):
        super().__init__(detail)
        self.pairs = pairs or []

class ClassificationError(DataError):
    pass


# --- Autodiff / training ---

class TapeError(DataError):
    pass

class TrainingDivergedError(DataError):
    pass
