"""Exception hierarchy shared across the package."""


class PQSmoothError(Exception):
    """Base class for all package errors."""


class CompatibilityError(PQSmoothError, ValueError):
    """Adjacent quadratic pieces do not glue as required.

    ``coefficients`` maps a coefficient name (e.g. ``"beta[0]"``) to the offending
    value of the model-frame difference ``P+ - P-``.
    """

    kind = "compatibility"

    def __init__(self, message, *, feature=None, coefficients=None):
        super().__init__(message)
        self.feature = feature
        self.coefficients = dict(coefficients or {})


class C0Violation(CompatibilityError):
    kind = "C0"


class C1Violation(CompatibilityError):
    kind = "C1"


class VertexJetError(CompatibilityError):
    """Some vertex mismatch does not vanish to second order at the vertex."""

    kind = "vertex-jet"


class JacobianFloorError(PQSmoothError, ValueError):
    def __init__(self, message, *, cell=None, point=None, value=None):
        super().__init__(message)
        self.cell = cell
        self.point = point
        self.value = value


class PlanError(PQSmoothError, ValueError):
    def __init__(self, message, *, edge=None):
        super().__init__(message)
        self.edge = edge


class DomainError(PQSmoothError, ValueError):
    """A point lies outside the closed domain."""


class ContractViolation(PQSmoothError, ValueError):
    """A regional formula was evaluated outside the region it is defined on."""


class BudgetUnreachable(PQSmoothError, RuntimeError):
    def __init__(self, message, *, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SmoothingFailure(PQSmoothError, RuntimeError):
    def __init__(self, message, *, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class HypothesisViolation(PQSmoothError, RuntimeError):
    """The separation inequality failed: the asserted m is wrong or there is a bug."""

    def __init__(self, message, *, witness=None):
        super().__init__(message)
        self.witness = witness


class InstanceFormatError(PQSmoothError, ValueError):
    def __init__(self, message, *, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location
