"""Exception hierarchy.

Every error carries the process exit code the CLI uses for it:
2 for validation problems, 3 for numeric failures, 4 for I/O.
"""


class EstimandError(Exception):
    exit_code = 1

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class ValidationError(EstimandError):
    exit_code = 2


class NumericError(EstimandError):
    exit_code = 3


class InputOutputError(EstimandError):
    exit_code = 4


# event model
class NegativeTime(ValidationError):
    pass


class EventAfterDeath(ValidationError):
    pass


class DuplicateDeath(ValidationError):
    pass


class EmptyArmLabel(ValidationError):
    pass


class InvalidEvent(ValidationError):
    pass


class DuplicateSubject(ValidationError):
    pass


class CutoffBeforeEntry(ValidationError):
    pass


# estimand specs
class SpecError(ValidationError):
    pass


class MissingAttribute(SpecError):
    pass


class UnknownStrategy(SpecError):
    pass


class OverlapEndpointIntercurrent(SpecError):
    pass


class UnknownSummaryMeasure(SpecError):
    pass


class UnknownPreset(SpecError):
    pass


class UndeclaredEventKind(ValidationError):
    pass


class PrincipalStratumUnsupported(ValidationError):
    pass


class OriginEventMissing(ValidationError):
    pass


class UnknownArm(ValidationError):
    pass


# estimation
class EmptyData(ValidationError):
    pass


class NonPositiveTime(ValidationError):
    pass


class BeyondFollowUp(ValidationError):
    pass


class QOutOfRange(ValidationError):
    pass


class UndefinedQuantile(NumericError):
    pass


class UnknownCause(ValidationError):
    pass


class SingleCauseOnly(ValidationError):
    pass


class NoEvents(NumericError):
    pass


class AllOneArm(ValidationError):
    pass


class SingularInformation(NumericError):
    pass


class DegenerateContrast(NumericError):
    pass


# simulation
class InvalidScenario(ValidationError):
    pass


class TooFewRegimes(ValidationError):
    pass


# planning / io
class HREqualsOne(ValidationError):
    pass


class InvalidProbability(ValidationError):
    pass


class InvalidArgument(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)

    def to_dict(self):
        out = super().to_dict()
        out["line"] = self.line
        out["path"] = None if self.path is None else str(self.path)
        return out


class UnknownSubjectInEvents(ValidationError):
    pass


class SeedRequired(ValidationError):
    pass
