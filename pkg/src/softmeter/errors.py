"""Exception hierarchy shared by all modules."""


class SoftmeterError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SoftmeterError, ValueError):
    pass


class TraceFormatError(SoftmeterError, ValueError):
    """A trace CSV row could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceValidationError(SoftmeterError, ValueError):
    """Samples violate a value range or the timestamp grid."""


class InsufficientData(SoftmeterError, ValueError):
    pass


class DegenerateDesign(SoftmeterError, ValueError):
    """The regression design matrix is rank deficient."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(
            "design matrix is rank deficient; dependent column(s): "
            + ", ".join(self.columns)
        )


class ModelFormatError(SoftmeterError, ValueError):
    pass


class ModelInvariantError(SoftmeterError, ValueError):
    """A fitted model predicts non-positive power inside the unit hypercube."""


class AttributionOverflow(SoftmeterError, ValueError):
    pass


class ProfileFormatError(SoftmeterError, ValueError):
    pass


class Infeasible(SoftmeterError):
    """No placement satisfies the overcommit limit."""

    def __init__(self, vm_ids, reason="no feasible host"):
        self.vm_ids = tuple(vm_ids)
        super().__init__(f"{reason}: {', '.join(self.vm_ids) or '(none)'}")


class ProtocolError(SoftmeterError, ValueError):
    pass
