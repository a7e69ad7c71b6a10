"""Exception hierarchy shared by all modules.

Every error carries a short ``kind`` string which the CLI echoes in its
machine-readable error record.
"""


class DirichletError(Exception):
    kind = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        out = {"kind": self.kind, "message": str(self)}
        out.update({k: v for k, v in self.details.items()})
        return out


class ParseError(DirichletError):
    kind = "parse"

    def __init__(self, message, line=None, column=None):
        loc = "" if line is None else f" (line {line}, column {column})"
        super().__init__(message + loc, line=line, column=column)


class ValidationError(DirichletError):
    kind = "validation"


class UnresolvedFeatureError(DirichletError):
    kind = "unresolved_feature"


class ResourceError(DirichletError):
    kind = "resource"


class SolverError(DirichletError):
    kind = "solver"


class IncompleteSpectrumError(DirichletError):
    kind = "incomplete"


class PreconditionError(DirichletError):
    kind = "precondition"


class SingularityError(DirichletError):
    kind = "singular"


class InputOutputError(DirichletError):
    kind = "io"


class UsageError(DirichletError):
    kind = "usage"
