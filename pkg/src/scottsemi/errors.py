"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the command line layer can map
failures to process status without inspecting messages.
"""


class ScottSemiError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ParameterError(ScottSemiError, ValueError):
    """Invalid user-supplied parameter (bounds, counts, shapes)."""

    exit_code = 1


class DomainError(ScottSemiError, ValueError):
    """Argument outside the domain where a quantity is defined."""

    exit_code = 1


class ContractError(ScottSemiError):
    """Input violates a structural precondition (symmetry, partition, decay)."""

    exit_code = 1


class ResolutionError(ScottSemiError):
    """Grid too coarse to resolve the relevant length scale."""

    exit_code = 2


class AccuracyError(ScottSemiError):
    """A numerical accuracy self-check failed."""

    exit_code = 2


class BracketError(ScottSemiError):
    """Shooting bracket does not contain a sign change."""

    exit_code = 2


class StiffnessError(ScottSemiError):
    """ODE integration failed (step size underflow)."""

    exit_code = 2


class TruncationError(AccuracyError):
    """Phase-space truncation discards too much Gaussian mass."""


class LMaxError(AccuracyError):
    """Angular-momentum cap reached while channels still bind."""


class CheckFailure(ScottSemiError):
    """A verification check exceeded its tolerance."""

    exit_code = 3
