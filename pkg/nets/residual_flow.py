"""
Module du réseau de flot résiduel R

Architecture hybride:
  - un encodeur PARTAGÉ par toutes les caméras extrait une pyramide de
    caractéristiques de mouvement à partir de (source déformée, cible, flot rigide);
  - un décodeur PAR CAMÉRA prédit le flot résiduel au niveau le plus grossier,
    puis à chaque niveau plus fin sur-échantillonne l'estimation (×2 en
    amplitude), déforme la source par rigide + estimation et prédit une
    correction.

Aux niveaux fins, la pyramide de la source BRUTE est déformée par
(flot rigide sous-échantillonné + estimation courante); la source déjà
déformée par le flot rigide n'alimente que l'encodeur et le niveau grossier.
Les têtes de flot sont initialisées à zéro, le flot résiduel initial est donc
exactement nul à tous les niveaux.
"""

from geometry.flow import warp_image
from nets.config import check_resolution
from nets.layers import conv, conv_params
from tensor import ops
from tensor.conv import downsample2x, upsample2x
from tensor.errors import ContractError, ShapeError
from tensor.tensor import as_tensor

INPUT_CHANNELS = 8


def residual_param_specs(config):
    levels = config.pyramid_levels
    specs = conv_params("R.encoder.level0", INPUT_CHANNELS, config.channels(0))
    for level in range(1, levels):
        specs += conv_params(f"R.encoder.level{level}", config.channels(level - 1), config.channels(level))
    for camera in range(config.num_cameras):
        for level in range(levels):
            # caractéristiques + source + cible + flot rigide (+ estimation courante hors niveau grossier)
            c_in = config.channels(level) + 3 + 3 + 2 + (0 if level == levels - 1 else 2)
            prefix = f"R.decoder{camera}.level{level}"
            specs += conv_params(f"{prefix}.conv", c_in, config.channels(0))
            specs += conv_params(f"{prefix}.head", config.channels(0), 2, init="zero")
    return specs


def pyramid(x, levels):
    """Versions de `x` aux résolutions H/2^l, l = 0..levels-1."""
    out = [x]
    for _ in range(1, levels):
        out.append(downsample2x(out[-1]))
    return out


def residual_flow_forward(weights, warped_source, target, rigid, camera_index, source):
    """
    Prédit le flot résiduel d'une caméra.

    Args:
        weights (NetworkWeights): poids contenant les paramètres "R.*"
        warped_source (Tensor): source déformée par le flot rigide (3,H,W)
        target (Tensor): image cible (3,H,W)
        rigid (Tensor): flot rigide (2,H,W)
        camera_index (int): sélection du décodeur
        source (Tensor): source brute (3,H,W), déformée à chaque niveau fin

    Returns:
        tuple: (flot résiduel (2,H,W), liste des flots par niveau, du plus fin au plus grossier)
    """
    config = weights.config
    if not 0 <= camera_index < config.num_cameras:
        raise ContractError(f"Indice de caméra {camera_index} hors de [0, {config.num_cameras})")
    warped_source, target, rigid = as_tensor(warped_source), as_tensor(target), as_tensor(rigid)
    source = as_tensor(source)
    if not (warped_source.shape == target.shape == source.shape and rigid.shape == (2,) + target.shape[1:]):
        raise ShapeError(f"Entrées incompatibles: {warped_source.shape}, {source.shape}, {target.shape}, {rigid.shape}")
    levels = config.pyramid_levels
    check_resolution(target.shape[1], target.shape[2], levels)

    features = [conv(ops.concat([warped_source, target, rigid], axis=0), weights, "R.encoder.level0")]
    for level in range(1, levels):
        features.append(conv(downsample2x(features[-1]), weights, f"R.encoder.level{level}"))

    warped_sources = pyramid(warped_source, levels)
    sources = pyramid(source, levels)
    targets = pyramid(target, levels)
    # Un flot sous-échantillonné est divisé par 2 à chaque niveau
    rigids = [r * (0.5 ** level) for level, r in enumerate(pyramid(rigid, levels))]

    outputs = [None] * levels
    flow = None
    for level in reversed(range(levels)):
        prefix = f"R.decoder{camera_index}.level{level}"
        if flow is None:
            inputs = [features[level], warped_sources[level], targets[level], rigids[level]]
            flow = conv(conv(ops.concat(inputs, axis=0), weights, f"{prefix}.conv"),
                        weights, f"{prefix}.head", activation=None)
        else:
            flow = upsample2x(flow) * 2.0
            warped = warp_image(sources[level], rigids[level] + flow)
            inputs = [features[level], warped, targets[level], rigids[level], flow]
            delta = conv(conv(ops.concat(inputs, axis=0), weights, f"{prefix}.conv"),
                         weights, f"{prefix}.head", activation=None)
            flow = flow + delta
        outputs[level] = flow
    return flow, outputs
