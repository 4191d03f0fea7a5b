class CrdnnError(Exception):
    pass


class ShapeError(CrdnnError, ValueError):
    pass


class ConfigError(CrdnnError, ValueError):
    pass


class InputError(CrdnnError, ValueError):
    pass


class StateError(CrdnnError, RuntimeError):
    pass


class NumericError(CrdnnError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    def __init__(self, epoch: int, learning_rate: float, cost: float):
        super().__init__(
            f"training diverged at epoch {epoch} (learning rate {learning_rate:.3g}, cost {cost})"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.cost = cost


class FormatVersionError(CrdnnError):
    pass
