"""
Opérations différentiables du moteur de tenseurs

Chaque opération est une sous-classe de `Function` avec sa passe avant
et sa passe arrière. Les opérations binaires suivent la diffusion standard
alignée à droite.
"""

import numpy as np

from tensor.errors import ContractError, DomainError, ShapeError
from tensor.tensor import Function, Tensor, as_tensor

ELEMENTWISE_KINDS = (
    "add", "sub", "mul", "div", "exp", "log", "abs", "relu",
    "sigmoid", "tanh", "square", "sqrt", "min", "max",
)
BINARY_KINDS = ("add", "sub", "mul", "div", "min", "max")


def broadcast_shape(shape_a, shape_b):
    try:
        return np.broadcast_shapes(tuple(shape_a), tuple(shape_b))
    except ValueError:
        raise ShapeError(f"Formes incompatibles pour la diffusion: {tuple(shape_a)} et {tuple(shape_b)}")


def _sigmoid(x):
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


class _Binary(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.a, self.b = a, b
        return self.compute(a, b)


class Add(_Binary):
    def compute(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(_Binary):
    def compute(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(_Binary):
    def compute(self, a, b):
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Div(_Binary):
    def compute(self, a, b):
        zeros = np.argwhere(np.broadcast_to(b, np.broadcast_shapes(a.shape, b.shape)) == 0)
        if len(zeros):
            raise DomainError(f"Division par zéro à {len(zeros)} position(s)", positions=zeros)
        return a / b

    def backward(self, grad):
        return grad / self.b, -grad * self.a / (self.b * self.b)


class Minimum(_Binary):
    def compute(self, a, b):
        self.pick_a = a <= b
        return np.where(self.pick_a, a, b)

    def backward(self, grad):
        return grad * self.pick_a, grad * ~self.pick_a


class Maximum(_Binary):
    def compute(self, a, b):
        self.pick_a = a >= b
        return np.where(self.pick_a, a, b)

    def backward(self, grad):
        return grad * self.pick_a, grad * ~self.pick_a


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return -grad


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return grad * self.out


class Log(Function):
    def forward(self, a):
        bad = np.argwhere(a <= 0)
        if len(bad):
            raise DomainError(f"Logarithme d'une valeur non positive à {len(bad)} position(s)", positions=bad)
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return grad / self.a


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return grad * self.sign


class Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad):
        return grad * self.mask


class Sigmoid(Function):
    def forward(self, a):
        self.out = _sigmoid(a)
        return self.out

    def backward(self, grad):
        return grad * self.out * (1.0 - self.out)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return grad * (1.0 - self.out * self.out)


class Square(Function):
    def forward(self, a):
        self.a = a
        return a * a

    def backward(self, grad):
        return 2.0 * grad * self.a


class Sqrt(Function):
    def forward(self, a):
        bad = np.argwhere(a < 0)
        if len(bad):
            raise DomainError(f"Racine d'une valeur négative à {len(bad)} position(s)", positions=bad)
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        # Sous-gradient nul en 0
        safe = np.where(self.out > 0, self.out, 1.0)
        return np.where(self.out > 0, grad / (2.0 * safe), 0.0)


class PowScalar(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return grad * self.exponent * self.a ** (self.exponent - 1)


class Clamp(Function):
    def forward(self, a, low, high):
        low = -np.inf if low is None else low
        high = np.inf if high is None else high
        self.inside = (a >= low) & (a <= high)
        return np.clip(a, low, high)

    def backward(self, grad):
        return grad * self.inside


_UNARY = {
    "exp": Exp, "log": Log, "abs": Abs, "relu": Relu, "sigmoid": Sigmoid,
    "tanh": Tanh, "square": Square, "sqrt": Sqrt,
}
_BINARY = {"add": Add, "sub": Sub, "mul": Mul, "div": Div, "min": Minimum, "max": Maximum}


def elementwise(kind, a, b=None):
    """
    Applique une opération élément par élément.

    Args:
        kind (str): une des valeurs de ELEMENTWISE_KINDS
        a (Tensor): premier opérande
        b (Tensor, optional): second opérande pour les opérations binaires

    Returns:
        Tensor: résultat à la forme diffusée
    """
    if kind in _BINARY:
        if b is None:
            raise ContractError(f"L'opération {kind} exige deux opérandes")
        return _BINARY[kind].apply(a, b)
    if kind in _UNARY:
        return _UNARY[kind].apply(a)
    raise ContractError(f"Opération élémentaire inconnue: {kind}")


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return Div.apply(a, b)


def neg(a):
    return Neg.apply(a)


def exp(a):
    return Exp.apply(a)


def log(a):
    return Log.apply(a)


def absolute(a):
    return Abs.apply(a)


def relu(a):
    return Relu.apply(a)


def sigmoid(a):
    return Sigmoid.apply(a)


def tanh(a):
    return Tanh.apply(a)


def square(a):
    return Square.apply(a)


def sqrt(a):
    return Sqrt.apply(a)


def minimum(a, b):
    return Minimum.apply(a, b)


def maximum(a, b):
    return Maximum.apply(a, b)


def power(a, exponent):
    return PowScalar.apply(a, exponent=float(exponent))


def clamp(a, low=None, high=None):
    return Clamp.apply(a, low=low, high=high)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul attend deux matrices, reçu {a.shape} et {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"Dimensions internes différentes: {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


def matmul(a, b):
    return MatMul.apply(a, b)


class Einsum(Function):
    """Contraction einsum à une ou deux opérandes avec sortie explicite."""

    def forward(self, *arrays, subscripts):
        inputs, self.output = subscripts.replace(" ", "").split("->")
        self.operands = inputs.split(",")
        if len(self.operands) != len(arrays) or len(arrays) not in (1, 2):
            raise ShapeError(f"einsum '{subscripts}' incompatible avec {len(arrays)} opérande(s)")
        self.arrays = arrays
        try:
            return np.einsum(subscripts, *arrays)
        except ValueError as e:
            raise ShapeError(f"einsum '{subscripts}': {e}")

    def _grad_for(self, k, grad):
        target = self.operands[k]
        others = [(self.operands[j], self.arrays[j]) for j in range(len(self.arrays)) if j != k]
        available = set(self.output).union(*(set(s) for s, _ in others))
        kept = "".join(c for c in target if c in available)
        spec = ",".join([self.output] + [s for s, _ in others]) + "->" + kept
        partial = np.einsum(spec, grad, *(a for _, a in others))
        if kept == target:
            return partial
        # Indices propres à l'opérande: le gradient est diffusé le long de ces axes
        shape = self.arrays[k].shape
        expanded = partial.reshape([shape[i] if c in kept else 1 for i, c in enumerate(target)])
        return np.broadcast_to(expanded, shape).copy()

    def backward(self, grad):
        return tuple(self._grad_for(k, grad) for k in range(len(self.arrays)))


def einsum(subscripts, *operands):
    return Einsum.apply(*operands, subscripts=subscripts)


def _normalize_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    normalized = []
    for axis in axes:
        if not -ndim <= axis < ndim:
            raise ShapeError(f"Axe {axis} hors limites pour un tenseur de rang {ndim}")
        normalized.append(axis % ndim)
    return tuple(sorted(set(normalized)))


class Reduce(Function):
    def forward(self, a, kind, axes, keepdims):
        self.kind = kind
        self.axes = _normalize_axes(axes, a.ndim)
        self.keepdims = keepdims
        self.in_shape = a.shape
        if kind == "sum":
            out = a.sum(axis=self.axes, keepdims=True)
        elif kind == "mean":
            out = a.mean(axis=self.axes, keepdims=True)
        elif kind in ("max", "min"):
            out = a.max(axis=self.axes, keepdims=True) if kind == "max" else a.min(axis=self.axes, keepdims=True)
            hits = (a == out)
            self.weights = hits / hits.sum(axis=self.axes, keepdims=True)
        else:
            raise ContractError(f"Réduction inconnue: {kind}")
        self.kept_shape = out.shape
        return out if keepdims else out.reshape([s for i, s in enumerate(out.shape) if i not in self.axes])

    def backward(self, grad):
        grad = grad.reshape(self.kept_shape)
        if self.kind == "sum":
            return np.broadcast_to(grad, self.in_shape).copy()
        if self.kind == "mean":
            count = np.prod([self.in_shape[i] for i in self.axes]) if self.axes else 1
            return np.broadcast_to(grad / count, self.in_shape).copy()
        return grad * self.weights


def reduce(kind, a, axes=None, keepdims=False):
    """
    Réduit un tenseur le long des axes donnés.

    Args:
        kind (str): "sum", "mean", "max" ou "min"
        a (Tensor): tenseur d'entrée
        axes (int | tuple, optional): axes à réduire (tous par défaut)
        keepdims (bool): conserver les axes réduits de taille 1
    """
    return Reduce.apply(a, kind=kind, axes=axes, keepdims=keepdims)


def total(a):
    return reduce("sum", a)


def mean(a, axes=None, keepdims=False):
    return reduce("mean", a, axes, keepdims)


class Reshape(Function):
    def forward(self, a, shape):
        self.in_shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError(f"Impossible de remodeler {a.shape} en {shape}")

    def backward(self, grad):
        return grad.reshape(self.in_shape)


def reshape(a, shape):
    return Reshape.apply(a, shape=tuple(shape))


class Transpose(Function):
    def forward(self, a, axes):
        if axes is None:
            axes = tuple(reversed(range(a.ndim)))
        if sorted(axes) != list(range(a.ndim)):
            raise ShapeError(f"Permutation {axes} invalide pour un tenseur de rang {a.ndim}")
        self.axes = axes
        return np.transpose(a, axes)

    def backward(self, grad):
        return np.transpose(grad, np.argsort(self.axes))


def transpose(a, axes=None):
    return Transpose.apply(a, axes=None if axes is None else tuple(axes))


class GetItem(Function):
    def forward(self, a, index):
        self.in_shape = a.shape
        self.index = index
        try:
            return np.array(a[index])
        except IndexError as e:
            raise ShapeError(str(e))

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        np.add.at(out, self.index, grad)
        return out


def getitem(a, index):
    return GetItem.apply(a, index=index)


class Take(Function):
    def forward(self, a, indices, axis):
        if not -a.ndim <= axis < a.ndim:
            raise ShapeError(f"Axe {axis} hors limites pour un tenseur de rang {a.ndim}")
        self.in_shape, self.indices, self.axis = a.shape, np.asarray(indices, dtype=np.int64), axis % a.ndim
        return np.take(a, self.indices, axis=self.axis)

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        moved = np.moveaxis(out, self.axis, 0)
        np.add.at(moved, self.indices, np.moveaxis(grad, self.axis, 0))
        return out


def take(a, indices, axis=0):
    return Take.apply(a, indices=indices, axis=axis)


class Concat(Function):
    def forward(self, *arrays, axis):
        ndim = arrays[0].ndim
        if not -ndim <= axis < ndim:
            raise ShapeError(f"Axe {axis} hors limites pour un tenseur de rang {ndim}")
        self.axis = axis % ndim
        self.sizes = [a.shape[self.axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=self.axis)
        except ValueError as e:
            raise ShapeError(f"Concaténation impossible: {e}")

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim + 1
    if not -ndim <= axis < ndim:
        raise ShapeError(f"Axe {axis} hors limites pour un empilement de rang {ndim}")
    axis = axis % ndim
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


class PadEdge(Function):
    """Remplissage par réplication des bords sur les deux derniers axes."""

    def forward(self, a, width):
        self.in_shape, self.width = a.shape, width
        pad = [(0, 0)] * (a.ndim - 2) + [(width, width), (width, width)]
        return np.pad(a, pad, mode="edge")

    def backward(self, grad):
        w = self.width
        h_in, w_in = self.in_shape[-2:]
        rows = np.clip(np.arange(h_in + 2 * w) - w, 0, h_in - 1)
        cols = np.clip(np.arange(w_in + 2 * w) - w, 0, w_in - 1)
        out = np.zeros(self.in_shape[:-2] + (h_in, grad.shape[-1]))
        np.add.at(out, (..., rows, slice(None)), grad)
        final = np.zeros(self.in_shape)
        np.add.at(np.moveaxis(final, -1, 0), cols, np.moveaxis(out, -1, 0))
        return final


def pad(a, width):
    return PadEdge.apply(a, width=int(width))


def where(mask, a, b):
    """Sélection par un masque constant (non différentiable)."""
    mask = np.asarray(mask, dtype=bool)
    return add(mul(a, mask.astype(np.float64)), mul(b, (~mask).astype(np.float64)))


def zeros(shape):
    return Tensor(np.zeros(shape))


def ones(shape):
    return Tensor(np.ones(shape))
