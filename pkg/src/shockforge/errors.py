"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class ShockforgeError(Exception):
    """Base class. ``stage`` names the pipeline stage that raised it."""

    stage = "core"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def as_dict(self) -> dict:
        out = {"error": type(self).__name__, "stage": self.stage, "message": str(self)}
        for key, val in self.details.items():
            out[key] = val if isinstance(val, (int, float, str, bool, type(None))) else repr(val)
        return out


# system
class NonStrictHyperbolicity(ShockforgeError):
    stage = "system"


class InvalidInitialData(ShockforgeError):
    stage = "system"


# normalize
class OutOfBox(ShockforgeError):
    stage = "normalize"


class SingularConstruction(ShockforgeError):
    stage = "normalize"


class NoBlowup(ShockforgeError):
    stage = "normalize"


class DegenerateMinimum(ShockforgeError):
    stage = "normalize"


# charsolve
class EarlyCrossing(ShockforgeError):
    stage = "charsolve"


class StepFailure(ShockforgeError):
    stage = "charsolve"


class BoundaryDataGap(ShockforgeError):
    stage = "charsolve"


class OutOfDomain(ShockforgeError):
    stage = "charsolve"


# singularity
class NoCrossing(ShockforgeError):
    stage = "singularity"


class DegenerateCusp(ShockforgeError):
    stage = "singularity"


class BranchLoss(ShockforgeError):
    stage = "singularity"


class OnEnvelopeTolerance(ShockforgeError):
    stage = "singularity"


class LeftCuspInterior(ShockforgeError):
    stage = "singularity"


class InsufficientRange(ShockforgeError):
    stage = "singularity"


# shockfit
class NewtonDivergence(ShockforgeError):
    stage = "shockfit"


class EntropyViolation(ShockforgeError):
    stage = "shockfit"


class FootOutOfDomain(ShockforgeError):
    stage = "shockfit"


class NoContraction(ShockforgeError):
    stage = "shockfit"


class InsufficientJump(ShockforgeError):
    stage = "shockfit"


# validate
class CFLViolation(ShockforgeError):
    stage = "validate"


class IncompletePipeline(ShockforgeError):
    stage = "validate"


# cli
class ConfigError(ShockforgeError):
    stage = "config"
