from __future__ import annotations

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_NUMERICAL = 3


class FlashMaxError(Exception):
    exit_code = EXIT_USAGE


class ConfigError(FlashMaxError):
    pass


class InvalidObservationsError(FlashMaxError):
    pass


class SingularityError(FlashMaxError):
    pass


class UndefinedMetricError(FlashMaxError):
    pass


class RankDeficiencyError(FlashMaxError):
    pass


class InfeasibleAmplitudeError(FlashMaxError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class VerificationError(FlashMaxError):
    exit_code = EXIT_VERIFICATION


class NumericalAbort(FlashMaxError):
    """Training produced a non-finite loss or gradient."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, step: int, epoch: int, loss: float, log=None):
        super().__init__(message)
        self.step = step
        self.epoch = epoch
        self.loss = loss
        self.log = log
