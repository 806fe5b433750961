import numpy as np

from tensor.tensor import Tensor, no_grad


def numerical_gradient(f, inputs, k, eps):
    base = [t.data.copy() for t in inputs]
    grad = np.zeros_like(base[k])
    flat = grad.reshape(-1)
    for i in range(flat.size):
        values = []
        for sign in (1.0, -1.0):
            shifted = [b.copy() for b in base]
            shifted[k].reshape(-1)[i] += sign * eps
            with no_grad():
                values.append(f(*(Tensor(s) for s in shifted)).item())
        flat[i] = (values[0] - values[1]) / (2.0 * eps)
    return grad


def grad_check(f, x, eps=1e-5):
    """
    Compare le gradient en mode inverse aux différences finies centrées.

    Args:
        f (callable): fonction scalaire de un ou plusieurs tenseurs
        x (Tensor | sequence): point d'évaluation
        eps (float): pas des différences finies

    Returns:
        float: erreur relative maximale, dénominateur max(|analytique|, |numérique|, 1e-8)
    """
    inputs = list(x) if isinstance(x, (list, tuple)) else [x]
    params = [Tensor(t.data.copy() if isinstance(t, Tensor) else t, requires_grad=True) for t in inputs]
    out = f(*params)
    out.backward()

    worst = 0.0
    for k, param in enumerate(params):
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        numeric = numerical_gradient(f, params, k, eps)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        if analytic.size:
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
