"""Exception hierarchy shared by every lcaforge module."""


class LcaError(Exception):
    """Base class for all domain errors raised by lcaforge."""


class UnknownUnit(LcaError):
    pass


class DimensionMismatch(LcaError):
    pass


class UnknownParameter(LcaError):
    pass


class DivisionByZero(LcaError, ZeroDivisionError):
    pass


class ExprSyntaxError(LcaError):
    """Expression could not be parsed; ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class SchemaError(LcaError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# registry
class NotFound(LcaError):
    pass


class DuplicateVersion(LcaError):
    pass


class Unsatisfiable(LcaError):
    def __init__(self, message, chain=()):
        super().__init__(message)
        self.chain = list(chain)


class DuplicateAdvisoryId(LcaError):
    pass


class DanglingSupersede(LcaError):
    pass


class RegistryLocked(LcaError):
    pass


# graph
class HashMismatch(LcaError):
    pass


# compute
class ComputeError(LcaError):
    pass


class SingularSystem(ComputeError):
    pass


class NonSquare(ComputeError):
    pass


class MissingShortcut(ComputeError):
    pass


class MissingProvider(ComputeError):
    pass


class AllocationRequired(ComputeError):
    pass


class CoefficientSumError(ComputeError):
    pass


class NegativeCoefficient(ComputeError):
    pass


class ConflictingBindings(ComputeError):
    pass


# uncertainty
class EmptySamples(LcaError):
    pass


class SampleFailure(LcaError):
    """An evaluation failed inside a Monte Carlo run."""

    def __init__(self, index, cause):
        super().__init__(f"sample {index} failed: {cause}")
        self.index = index
        self.cause = cause
