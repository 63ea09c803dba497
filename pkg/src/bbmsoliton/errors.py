"""Exception taxonomy shared by every stage of the pipeline.

Each class carries an ``exit_code`` so the command line can map failures
to process exit statuses without a lookup table spread across modules.
"""


class BBMError(Exception):
    exit_code = 1


class DSLSyntaxError(BBMError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    exit_code = 7

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifier(BBMError):
    exit_code = 7

    def __init__(self, name, offset=None):
        super().__init__(f"unknown identifier {name!r}")
        self.name = name
        self.offset = offset


class EvalDomainError(BBMError):
    exit_code = 8

    def __init__(self, message, point):
        super().__init__(f"{message} at (x, t) = {point}")
        self.point = point


class ConfigError(BBMError):
    exit_code = 7


class OutOfDomain(BBMError):
    exit_code = 8


class FormUnavailable(BBMError):
    exit_code = 2


class GradientCatastrophe(BBMError):
    exit_code = 3

    def __init__(self, t_break):
        super().__init__(f"characteristics cross at t = {t_break:.6g}")
        self.t_break = t_break


class InadmissibleStart(BBMError):
    exit_code = 4


class PhaseBlowup(BBMError):
    exit_code = 8


class TransversalityLoss(BBMError):
    exit_code = 8

    def __init__(self, t):
        super().__init__(f"characteristics tangent to the curve at t = {t:.6g}")
        self.t = t


class QuadratureFailure(BBMError):
    exit_code = 8


class SolvabilityError(BBMError):
    exit_code = 8


class LinearSolveFailure(BBMError):
    exit_code = 8


class DegenerateFit(BBMError):
    exit_code = 5


class SlopeFailure(BBMError):
    exit_code = 5


class CFLViolation(BBMError):
    exit_code = 6


class GridMismatch(BBMError):
    exit_code = 8
