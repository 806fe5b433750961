"""
Module des poids des réseaux

NetworkWeights associe un chemin de paramètre ("R.encoder.level0.kernel", ...)
à un Tensor. Les préfixes "D.", "P." et "R." désignent respectivement les
réseaux de profondeur, de paramètres gaussiens et de flot résiduel.
"""

import numpy as np

from nets.depth import depth_param_specs
from nets.gauss_param import gauss_param_specs
from nets.residual_flow import residual_param_specs
from tensor.errors import ContractError
from tensor.tensor import Tensor

NETWORKS = ("D", "P", "R")
SMALL_INIT_GAIN = 0.01


class NetworkWeights:
    """
    Table ordonnée chemin → Tensor, avec la configuration d'architecture et
    l'étape d'entraînement (1, 2, "single" ou None) qui a produit les poids.
    """

    def __init__(self, config, tensors=None, stage=None):
        self.config = config
        self.stage = stage
        self._tensors = {}
        for name, tensor in (tensors or {}).items():
            self.add(name, tensor)

    def add(self, name, tensor):
        if name in self._tensors:
            raise ContractError(f"Paramètre en double: {name}")
        if not np.all(np.isfinite(tensor.data)):
            raise ContractError(f"Paramètre non fini: {name}")
        self._tensors[name] = tensor

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise KeyError(f"Paramètre inconnu: {name}")

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors)

    def names(self, prefix=""):
        return [name for name in self._tensors if name.startswith(prefix)]

    def items(self, prefix=""):
        return [(name, self._tensors[name]) for name in self.names(prefix)]

    def subset(self, *prefixes):
        """Vue partageant les mêmes tenseurs, restreinte aux préfixes donnés."""
        return NetworkWeights(self.config, {
            name: tensor for name, tensor in self._tensors.items()
            if any(name.startswith(p) for p in prefixes)
        }, stage=self.stage)

    def merged(self, other):
        combined = NetworkWeights(self.config, dict(self._tensors), stage=self.stage)
        for name, tensor in other.items():
            combined._tensors[name] = tensor
        return combined

    def set_trainable(self, prefix, trainable):
        for _, tensor in self.items(prefix):
            tensor.requires_grad = trainable
            tensor.grad = None

    def trainable(self):
        return [(name, t) for name, t in self._tensors.items() if t.requires_grad]

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.grad = None

    def copy(self):
        return NetworkWeights(self.config, {
            name: Tensor(t.data.copy(), requires_grad=t.requires_grad, name=name)
            for name, t in self._tensors.items()
        }, stage=self.stage)

    def snapshot(self, prefix=""):
        return {name: t.data.copy() for name, t in self.items(prefix)}

    def check_finite(self):
        for name, tensor in self._tensors.items():
            if not np.all(np.isfinite(tensor.data)):
                raise ContractError(f"Paramètre non fini: {name}")


def parameter_specs(config):
    return depth_param_specs(config) + gauss_param_specs(config) + residual_param_specs(config)


def _initial_value(rng, shape, init):
    if isinstance(init, np.ndarray):
        return init.astype(np.float64).reshape(shape)
    if init == "zero":
        return np.zeros(shape)
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    values = rng.uniform(-bound, bound, size=shape)
    if init == "small":
        return values * SMALL_INIT_GAIN
    if init == "fan_in":
        return values
    raise ValueError(f"Initialisation inconnue: {init}")


def init_weights(config, seed):
    """
    Initialise déterministiquement tous les paramètres de D, P et R.

    Les noyaux suivent une loi uniforme de borne sqrt(6/fan_in); les têtes de
    flot de R sont nulles.

    Args:
        config (ArchitectureConfig): dimensions des réseaux
        seed (int): graine du générateur

    Returns:
        NetworkWeights: poids entraînables
    """
    rng = np.random.default_rng(seed)
    weights = NetworkWeights(config)
    for name, shape, init in parameter_specs(config):
        weights.add(name, Tensor(_initial_value(rng, shape, init), requires_grad=True, name=name))
    return weights


def count_parameters(weights):
    """Nombre de scalaires par réseau (D, P, R) et au total."""
    counts = {net: sum(t.size for _, t in weights.items(f"{net}.")) for net in NETWORKS}
    counts["total"] = sum(counts[net] for net in NETWORKS)
    return counts
