"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class PmnlError(Exception):
    """Base class; ``code`` is the machine-readable name used in CLI output."""

    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.details = details


class ExponentOutOfRange(PmnlError):
    code = "ExponentOutOfRange"


class NegativeKernel(PmnlError):
    code = "NegativeKernel"


class NegativeInitialData(PmnlError):
    code = "NegativeInitialData"


class InvalidDomain(PmnlError):
    code = "InvalidDomain"


class TooFewCells(PmnlError):
    code = "TooFewCells"


class LayerTooDeep(PmnlError):
    code = "LayerTooDeep"


class OutsideValidityWindow(PmnlError):
    code = "OutsideValidityWindow"


class InvalidBarrier(PmnlError):
    """Parameter tuple violates the inequalities attached to its family."""

    code = "InvalidBarrier"


class FamilyIncompatible(PmnlError):
    code = "FamilyIncompatible"


class SearchExhausted(PmnlError):
    code = "SearchExhausted"


class CflViolation(PmnlError):
    code = "CflViolation"


class NoConvergence(PmnlError):
    code = "NoConvergence"


class NotBlowingUp(PmnlError):
    code = "NotBlowingUp"


class SpecMismatch(PmnlError):
    code = "SpecMismatch"


class ConfigParseError(PmnlError):
    code = "ConfigParseError"


class OrderViolationInInputs(PmnlError):
    code = "OrderViolationInInputs"
