from tensor.errors import ContractError


class GenerationError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    def __init__(self, component, value, step=None):
        where = "" if step is None else f" (pas {step})"
        super().__init__(f"Perte non finie sur la composante '{component}': {value}{where}")
        self.component = component
        self.value = value
        self.step = step


class FreezeViolation(ContractError):
    pass
