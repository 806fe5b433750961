import numpy as np

from nets.config import check_resolution
from nets.depth import normalized_inverse_depth
from nets.layers import conv, conv_params
from tensor import ops
from tensor.conv import downsample2x, upsample2x
from tensor.errors import ShapeError
from tensor.tensor import as_tensor

# Biais initiaux de la tête: quaternion identité, petite échelle, gaussiennes plutôt opaques
INITIAL_LOG_SCALE = np.log(0.05)
INITIAL_OPACITY_LOGIT = 2.0


def head_bias(config):
    bias = np.zeros(config.param_channels)
    bias[0] = 1.0
    bias[4:7] = INITIAL_LOG_SCALE
    bias[7] = INITIAL_OPACITY_LOGIT
    return bias


def gauss_param_specs(config):
    c0, c1 = config.channels(0), config.channels(1)
    specs = conv_params("P.enc0", 4, c0)
    specs += conv_params("P.enc1", c0, c1)
    specs += conv_params("P.dec0", c1 + c0, c0)
    specs += conv_params("P.head", c0, config.param_channels, init="small", bias=head_bias(config))
    return specs


def gauss_param_forward(weights, image, depth):
    """
    Cartes brutes (avant activation) des attributs gaussiens par pixel.

    L'entrée est la concaténation de l'image et de la disparité normalisée;
    la sortie a 8 + 3·(L+1)² canaux: rotation (4), échelle (3), opacité (1),
    harmoniques sphériques.
    """
    config = weights.config
    image, depth = as_tensor(image), as_tensor(depth)
    if image.shape[1:] != depth.shape[1:]:
        raise ShapeError(f"Résolutions différentes: image {image.shape}, profondeur {depth.shape}")
    check_resolution(image.shape[1], image.shape[2], config.pyramid_levels)

    x = ops.concat([image, normalized_inverse_depth(depth, config)], axis=0)
    e0 = conv(x, weights, "P.enc0")
    e1 = conv(downsample2x(e0), weights, "P.enc1")
    d0 = conv(ops.concat([upsample2x(e1), e0], axis=0), weights, "P.dec0")
    return conv(d0, weights, "P.head", activation=None)
