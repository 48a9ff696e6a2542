"""Exception hierarchy shared across the package."""


class BayesAttackError(Exception):
    """Base class for all package errors."""


class NumericalError(BayesAttackError, ArithmeticError):
    """A factorization failed even after jitter escalation."""


class BudgetExhausted(BayesAttackError):
    """The query ledger has no queries left."""


class CapabilityError(BayesAttackError):
    """The oracle does not support the requested feedback mode."""


class TransportError(BayesAttackError, OSError):
    """A remote oracle could not be reached or timed out."""


class ProtocolError(BayesAttackError):
    """A remote peer sent a frame that violates the wire protocol."""


class FormatError(BayesAttackError, ValueError):
    """A binary dataset or weight file is malformed."""


class AttackAborted(BayesAttackError):
    """An attack stopped on an oracle failure; ``result`` holds the partial run."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
