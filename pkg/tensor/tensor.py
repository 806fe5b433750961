"""
Module du moteur de tenseurs

Ce module implémente un tenseur dense en 64 bits avec différentiation
automatique en mode inverse. Chaque opération enregistrée crée un noeud
dans le graphe de calcul; `backward` parcourt ensuite ce graphe dans l'ordre
topologique inverse et accumule les gradients sur les feuilles.
"""

import itertools
from contextlib import contextmanager

import numpy as np

from tensor.errors import ContractError

# Compteur global des noeuds: l'ordre de création est un ordre topologique
_node_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """
    Désactive l'enregistrement du graphe à l'intérieur du bloc.

    Utilisé pour l'inférence et pour les réseaux gelés de l'étape 2.
    """
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled():
    return _grad_enabled


def unbroadcast(grad, shape):
    """Somme les axes diffusés pour ramener `grad` à la forme `shape`."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    Classe de base des opérations différentiables.

    Une sous-classe définit `forward` (sur des tableaux numpy) et `backward`
    qui reçoit le gradient de la sortie et retourne un gradient par entrée
    (None pour une entrée non différentiable).
    """

    def __init__(self, *inputs):
        self.inputs = inputs
        self.seq = next(_node_counter)

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError("Passe avant non implémentée pour cette fonction")

    def backward(self, grad):
        raise NotImplementedError("Passe arrière non implémentée pour cette fonction")

    @classmethod
    def apply(cls, *inputs, **kwargs):
        inputs = tuple(as_tensor(x) for x in inputs)
        func = cls(*inputs)
        out_data = func.forward(*(x.data for x in inputs), **kwargs)
        requires_grad = _grad_enabled and any(x.requires_grad for x in inputs)
        if not requires_grad:
            # Rien à enregistrer: le noeud est abandonné
            return Tensor(out_data)
        return Tensor(out_data, requires_grad=True, node=func)


class Tensor:
    """
    Tableau dense de flottants 64 bits participant au graphe de calcul.

    Attributs:
        data (ndarray): valeurs contiguës en ordre ligne
        requires_grad (bool): si le tenseur demande un gradient
        grad (ndarray): tampon de gradient, même forme que `data`
        node (Function): opération ayant produit ce tenseur (None pour une feuille)
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, node=None, name=None):
        self.data = np.ascontiguousarray(np.array(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = node
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() sur un tenseur de forme {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # Surcharges d'opérateurs -------------------------------------------------
    def __add__(self, other):
        from tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from tensor import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from tensor import ops
        return ops.div(other, self)

    def __neg__(self):
        from tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from tensor import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from tensor import ops
        return ops.getitem(self, index)

    def sum(self, axes=None, keepdims=False):
        from tensor import ops
        return ops.reduce("sum", self, axes, keepdims)

    def mean(self, axes=None, keepdims=False):
        from tensor import ops
        return ops.reduce("mean", self, axes, keepdims)

    def reshape(self, *shape):
        from tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from tensor import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class GraphTape:
    """
    Bande des opérations atteignables depuis une racine.

    Les noeuds sont rangés par numéro de création croissant, ce qui garantit
    que chaque parent précède son enfant.
    """

    def __init__(self, root):
        self.nodes = []
        seen = set()
        stack = [root.node] if root.node is not None else []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            self.nodes.append(node)
            for parent in node.inputs:
                if parent.node is not None and parent.requires_grad:
                    stack.append(parent.node)
        self.nodes.sort(key=lambda n: n.seq)

    def __len__(self):
        return len(self.nodes)

    def reversed(self):
        return reversed(self.nodes)


def backward(root):
    """
    Propage les gradients depuis une racine scalaire.

    Les gradients des feuilles s'accumulent (ils ne sont jamais écrasés),
    ce qui permet le partage de paramètres entre plusieurs têtes.
    """
    if root.data.size != 1:
        raise ContractError(f"backward exige une racine scalaire, forme reçue {root.shape}")
    if not root.requires_grad:
        return

    if root.node is None:
        root.grad = np.ones_like(root.data) if root.grad is None else root.grad + 1.0
        return

    tape = GraphTape(root)
    grads = {id(root.node): np.ones_like(root.data)}
    for node in tape.reversed():
        out_grad = grads.pop(id(node), None)
        if out_grad is None:
            continue
        input_grads = node.backward(out_grad)
        if not isinstance(input_grads, tuple):
            input_grads = (input_grads,)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            grad = unbroadcast(np.asarray(grad, dtype=np.float64), tensor.shape)
            if tensor.node is None:
                tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
            else:
                key = id(tensor.node)
                grads[key] = grad if key not in grads else grads[key] + grad
