class ShapeError(ValueError):
    pass


class DomainError(ArithmeticError):
    def __init__(self, message, positions=None):
        super().__init__(message)
        self.positions = positions


class ContractError(RuntimeError):
    pass
