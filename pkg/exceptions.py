"""
Workbench error hierarchy
"""


class WorkbenchError(Exception):
    """Base class for every error raised by the workbench"""


class EmptyDomain(WorkbenchError):
    """A grid function is +inf at every grid point"""


class InvalidValue(WorkbenchError):
    """An evaluator produced -inf, NaN, or overflowed"""


class PointOutsideDomain(WorkbenchError):
    """The base point has f(x) = +inf"""


class NoAdmissibleStep(WorkbenchError):
    """Every step x + t*d leaves the grid"""


class NotASubgradient(WorkbenchError):
    """The Fenchel-Young gap of (x, s) exceeds the subgradient tolerance"""


class InsufficientData(WorkbenchError):
    """Too few informative modulus samples to certify"""


class OutsideOpenBox(WorkbenchError):
    """A closed-form Hessian was requested outside (-1, 1)^2"""


class InfeasibleProblem(WorkbenchError):
    """S and dom f do not intersect on the grid"""


class Unbounded(WorkbenchError):
    """A tilted problem only attains its grid minimum on the truncation boundary"""


class BudgetExhausted(WorkbenchError):
    """Witness search ran out of probes"""


class SchemaViolation(WorkbenchError):
    """A file does not match its documented schema"""


class IoFailure(WorkbenchError):
    """Reading or writing an artifact failed"""


class UnknownCatalogEntry(WorkbenchError):
    """No catalog function or constraint set with this id"""
