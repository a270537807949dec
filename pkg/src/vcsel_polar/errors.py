"""Exception types.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented exit-code contract without a lookup table.
"""


class VcselPolarError(Exception):
    exit_code = 4


class ConfigError(VcselPolarError, ValueError):
    exit_code = 1


class AnisotropyNotAligned(ConfigError):
    """An operation for the e1-aligned model got off-axis anisotropy."""


class BelowThreshold(VcselPolarError):
    exit_code = 2


class UnstableSystem(VcselPolarError):
    exit_code = 3


class UnstablePolarization(UnstableSystem):
    pass


class StepTooLarge(ConfigError):
    pass


class StateDiverged(VcselPolarError):
    pass


class DefectiveMatrix(VcselPolarError):
    pass


class SeriesTooShort(VcselPolarError):
    pass


class FitError(VcselPolarError):
    """Base for fit failures; ``result`` holds the best available fit."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class FitDiverged(FitError):
    pass


class ModelMismatch(FitError):
    pass


class DegenerateSystem(VcselPolarError):
    pass


class IOFailure(VcselPolarError, OSError):
    exit_code = 5
