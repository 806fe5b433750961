"""
Objectifs composés des deux étapes d'entraînement

    L_render = L2 + λ_p·perceptuel
    L_warp   = L1 + λ_s·(1 − SSIM)/2 + λ_wp·perceptuel
    L_stage1 = λ_loc·L_loc + λ_smooth·L_smooth + λ_render·L_render
    L_stage2 = λ_warp·L_warp + λ_consist·L_consist + λ_render·L_render
"""

from losses.photometric import l1, l2, ssim
from losses.weights import NO_PERCEPTUAL, LossWeights
from tensor.tensor import Tensor, as_tensor

DEFAULT_WEIGHTS = LossWeights()

# Ordre de sommation: les totaux à composantes unitaires valent exactement 0.111 et 0.03001
STAGE1_TERMS = (("loc", "loc"), ("smooth", "smooth"), ("render", "render1"))
STAGE2_TERMS = (("render", "render2"), ("warp", "warp"), ("consist", "consist"))


def render_loss(rendered, gt, hook=NO_PERCEPTUAL, weights=DEFAULT_WEIGHTS):
    loss = l2(rendered, gt)
    if hook.active:
        loss = loss + weights.perceptual_render * hook(rendered, gt)
    return loss


def warp_loss(target, warped, hook=NO_PERCEPTUAL, weights=DEFAULT_WEIGHTS):
    loss = l1(warped, target) + weights.ssim * ((1.0 - ssim(warped, target)) * 0.5)
    if hook.active:
        loss = loss + weights.perceptual_warp * hook(warped, target)
    return loss


def _weighted_total(components, terms, weights):
    total = Tensor(0.0)
    breakdown = {}
    for component, weight_name in terms:
        value = as_tensor(components.get(component, 0.0))
        breakdown[component] = value.item()
        total = total + getattr(weights, weight_name) * value
    breakdown["total"] = total.item()
    return total, breakdown


def stage1_total(components, weights=DEFAULT_WEIGHTS):
    """
    Somme pondérée de l'étape 1.

    Args:
        components (dict): pertes "loc", "smooth", "render" (Tensor ou float)
        weights (LossWeights): pondérations

    Returns:
        tuple: (total Tensor, détail {composante: valeur, "total": valeur})
    """
    return _weighted_total(components, STAGE1_TERMS, weights)


def stage2_total(components, weights=DEFAULT_WEIGHTS):
    """Somme pondérée de l'étape 2 sur les composantes "warp", "consist", "render"."""
    return _weighted_total(components, STAGE2_TERMS, weights)
