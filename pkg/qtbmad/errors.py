class QTBMError(Exception):
    """Base class for every error raised by qtbmad."""


class InvalidParameter(QTBMError, ValueError):
    pass


class NegativeKineticEnergy(InvalidParameter):
    def __init__(self, energy):
        self.energy = energy
        super().__init__(f"energy {energy!r} eV lies below the source band edge")


class EvanescentDrain(InvalidParameter):
    def __init__(self, energy, bias):
        self.energy = energy
        self.bias = bias
        super().__init__(f"E + V0 = {energy!r} + {bias!r} < 0: drain wave is evanescent")


class DivisionByZero(QTBMError, ZeroDivisionError):
    pass


class SqrtDomain(QTBMError, ValueError):
    pass


class TangentWidthMismatch(QTBMError, ValueError):
    def __init__(self, left: int, right: int):
        super().__init__(f"cannot combine tangents of width {left} and {right}")


class SingularPivot(QTBMError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"Thomas elimination met a vanishing pivot at row {index}")


class ResidualTooLarge(QTBMError):
    def __init__(self, residual: float, bound: float):
        self.residual = residual
        self.bound = bound
        super().__init__(f"solve residual {residual:.3e} exceeds {bound:.3e}")


class NonFiniteLoss(QTBMError):
    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"loss became non-finite at iteration {iteration}")


class AllStartsFailed(QTBMError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(f"all {len(self.errors)} starts failed")


class ConfigError(QTBMError, ValueError):
    def __init__(self, message: str, key: str = ""):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)
