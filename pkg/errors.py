class ToolkitError(Exception):
    """Base class for every error the toolkit raises on purpose."""
    category = "internal"
    exitCode = 1

    def toPayload(self) -> dict:
        return {"status": "error", "category": self.category, "error": str(self)}


class ConfigError(ToolkitError):
    category = "config"
    exitCode = 2


class CapacityError(ConfigError):
    pass


class DataIoError(ToolkitError):
    category = "io"
    exitCode = 3


class MalformedCsvError(DataIoError):
    def __init__(self, message: str, lineNumber: int = None):
        if lineNumber is not None:
            message = f"line {lineNumber}: {message}"
        super().__init__(message)
        self.lineNumber = lineNumber


class UnknownColumnError(DataIoError):
    pass


class NumericError(ToolkitError):
    category = "numeric"
    exitCode = 4


class ModelDomainError(NumericError):
    pass


class QuadratureError(NumericError):
    pass


class DivergenceError(NumericError):
    pass


class NetworkError(ToolkitError):
    category = "network"
    exitCode = 5


class EndpointUnreachableError(NetworkError):
    pass


class DataQualityError(ToolkitError):
    category = "data-quality"
    exitCode = 6


class EmptyInputError(DataQualityError):
    pass


class DegenerateFitError(DataQualityError):
    pass


class MisalignedSeriesError(DataQualityError):
    pass


class SeriesGapError(DataQualityError):
    pass


class InconsistentHistogramError(DataQualityError):
    pass


class EmptyReferencePoolError(DataQualityError):
    pass


class CohortNotFoundError(DataQualityError):
    pass
