"""
Module du réseau de profondeur D

Petit encodeur-décodeur en U: `pyramid_levels` sous-échantillonnages, autant
de sur-échantillonnages avec connexions de saut, puis une tête sigmoïde
convertie en disparité bornée:
    disparité = 1/d_max + s·(1/d_min − 1/d_max), profondeur = 1/disparité
La profondeur reste donc strictement dans (d_min, d_max) quels que soient les poids.
"""

from nets.config import check_resolution
from nets.layers import conv, conv_params
from tensor import ops
from tensor.conv import downsample2x, upsample2x
from tensor.errors import ShapeError
from tensor.tensor import as_tensor


def depth_param_specs(config):
    specs = conv_params("D.enc0", 3, config.channels(0))
    for level in range(1, config.pyramid_levels + 1):
        specs += conv_params(f"D.enc{level}", config.channels(level - 1), config.channels(level))
    for level in reversed(range(config.pyramid_levels)):
        specs += conv_params(f"D.dec{level}", config.channels(level + 1) + config.channels(level),
                             config.channels(level))
    specs += conv_params("D.head", config.channels(0), 1)
    return specs


def disparity_bounds(config):
    return 1.0 / config.d_max, 1.0 / config.d_min


def depth_forward(weights, image, return_disparity=False):
    """
    Prédit la profondeur d'une image.

    Args:
        weights (NetworkWeights): poids contenant les paramètres "D.*"
        image (Tensor): image (3,H,W) dans [0,1]
        return_disparity (bool): renvoyer aussi la disparité (pour la régularisation)

    Returns:
        Tensor | tuple: profondeur (1,H,W), et éventuellement la disparité (1,H,W)
    """
    config = weights.config
    image = as_tensor(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"Image (3,H,W) attendue, reçu {image.shape}")
    check_resolution(image.shape[1], image.shape[2], config.pyramid_levels)

    skips = [conv(image, weights, "D.enc0")]
    for level in range(1, config.pyramid_levels + 1):
        skips.append(conv(downsample2x(skips[-1]), weights, f"D.enc{level}"))
    x = skips[-1]
    for level in reversed(range(config.pyramid_levels)):
        x = conv(ops.concat([upsample2x(x), skips[level]], axis=0), weights, f"D.dec{level}")
    s = ops.sigmoid(conv(x, weights, "D.head", activation=None))

    low, high = disparity_bounds(config)
    disparity = low + s * (high - low)
    depth = 1.0 / disparity
    return (depth, disparity) if return_disparity else depth


def normalized_inverse_depth(depth, config):
    """Disparité ramenée dans (0,1) à partir de la profondeur."""
    low, high = disparity_bounds(config)
    return (1.0 / as_tensor(depth) - low) * (1.0 / (high - low))
