import numpy as np

from tensor.errors import ContractError


class Adam:
    """
    Optimiseur Adam sur une liste de paramètres nommés.

    Les paramètres sans gradient après une passe arrière sont laissés
    inchangés et leurs moments ne sont pas mis à jour.
    """

    def __init__(self, parameters, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.parameters = list(parameters)
        if not self.parameters:
            raise ContractError("Adam: aucun paramètre à optimiser")
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.parameters}
        self.v = {name: np.zeros_like(t.data) for name, t in self.parameters}

    @classmethod
    def from_config(cls, parameters, config):
        return cls(parameters, config.learning_rate, config.beta1, config.beta2, config.eps)

    def zero_grad(self):
        for _, tensor in self.parameters:
            tensor.grad = None

    def step(self, scale=1.0):
        """Applique une mise à jour; `scale` divise les gradients accumulés sur un lot."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, tensor in self.parameters:
            if tensor.grad is None:
                continue
            grad = tensor.grad * scale
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            tensor.data = tensor.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
