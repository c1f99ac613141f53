"""Exception hierarchy. Every error carries the exit code the CLI reports for it."""
import typing as tp


class AdlensError(RuntimeError):
    exit_code = 1


class ValidationError(AdlensError):
    """Configuration or precondition failure detected before any work."""
    exit_code = 2


class DataError(AdlensError):
    exit_code = 3


class ParseError(DataError):
    """A malformed record, located by file, line and field."""

    def __init__(self, message: str, path: tp.Optional[str] = None,
                 line: tp.Optional[int] = None, field: tp.Optional[str] = None):
        self.reason = message
        self.path = path
        self.line = line
        self.field = field
        location = []
        if path is not None:
            location.append(f"file={path}")
        if line is not None:
            location.append(f"line={line}")
        if field is not None:
            location.append(f"field={field}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)

    def located(self, path: str, line: int) -> "ParseError":
        """Return a copy of this error with the file position filled in."""
        return ParseError(self.reason, path=path, line=line, field=self.field)


class GazetteerError(DataError):
    pass


class AnnotationError(DataError):
    pass


class FeatureError(DataError):
    """Featurization or model introspection is impossible on the given input."""


class ModelLoadingError(AdlensError):
    exit_code = 3


class NumericError(AdlensError):
    exit_code = 4


class RankDeficiencyError(NumericError):
    def __init__(self, dependent_columns: tp.Sequence[int]):
        self.dependent_columns = list(dependent_columns)
        super().__init__(f"design matrix is rank deficient, dependent columns: "
                         f"{self.dependent_columns}")


class DegenerateSeriesError(NumericError):
    pass


class UndefinedResultError(NumericError):
    pass
