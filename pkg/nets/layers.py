"""
Briques communes des réseaux: déclaration et application des convolutions

Chaque couche est décrite par des spécifications (chemin, forme, initialisation)
puis lue dans un NetworkWeights par son chemin, par exemple
"D.enc1.kernel" et "D.enc1.bias".
"""

from tensor import ops
from tensor.conv import conv2d


def conv_params(prefix, c_in, c_out, k=3, init="fan_in", bias="zero"):
    """Spécifications (chemin, forme, initialisation) d'une convolution avec biais."""
    return [
        (f"{prefix}.kernel", (c_out, c_in, k, k), init),
        (f"{prefix}.bias", (c_out,), bias),
    ]


def conv(x, weights, prefix, activation="relu"):
    """Convolution 'same' (remplissage k//2) suivie d'une activation optionnelle."""
    kernel = weights[f"{prefix}.kernel"]
    bias = weights[f"{prefix}.bias"]
    k = kernel.shape[-1]
    out = conv2d(x, kernel, padding=k // 2) + bias.reshape(bias.shape[0], 1, 1)
    if activation == "relu":
        return ops.relu(out)
    if activation is None:
        return out
    raise ValueError(f"Activation inconnue: {activation}")
