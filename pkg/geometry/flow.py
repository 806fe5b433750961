"""
Champs de flot optique

Un champ de flot est un Tensor (2,H,W): canal 0 = déplacement horizontal,
canal 1 = déplacement vertical, en pixels. Le flot rigide est induit par la
profondeur et le mouvement de la caméra; le flot résiduel capte le mouvement
propre des objets.
"""

import numpy as np

from geometry.projection import pixel_grid, project, unproject
from tensor import ops
from tensor.errors import ContractError, ShapeError
from tensor.sampling import bilinear_sample
from tensor.tensor import Tensor, as_tensor


def rigid_flow(depth, cam_src, cam_dst, return_mask=False):
    """
    Flot induit par la géométrie statique entre deux poses de caméra.

    Chaque pixel de `cam_src` est rétro-projeté avec `depth` puis reprojeté
    dans `cam_dst`. Les points passant derrière la caméra cible ont un flot
    nul et sont exclus du masque.

    Args:
        depth (Tensor): profondeur (1,H,W) vue par `cam_src`
        cam_src (PinholeCamera): caméra source
        cam_dst (PinholeCamera): caméra cible, mêmes intrinsèques
        return_mask (bool): renvoyer aussi le masque de validité

    Returns:
        Tensor | tuple: flot (2,H,W), et éventuellement le masque (H,W)
    """
    depth = as_tensor(depth)
    if not cam_src.same_intrinsics(cam_dst):
        raise ContractError("Le flot rigide exige des intrinsèques identiques")
    h, w = cam_src.height, cam_src.width
    if cam_src.same_pose(cam_dst):
        flow = Tensor(np.zeros((2, h, w)))
        mask = np.ones((h, w), dtype=bool)
        return (flow, mask) if return_mask else flow

    points = unproject(depth, cam_src)
    pixels, _, valid = project(points, cam_dst)
    flow = ops.where(valid[None], pixels - pixel_grid(h, w), np.zeros((2, h, w)))
    return (flow, valid) if return_mask else flow


def compose_flow(rigid, residual):
    """Flot total = flot rigide + flot résiduel."""
    rigid, residual = as_tensor(rigid), as_tensor(residual)
    if rigid.shape != residual.shape or rigid.ndim != 3 or rigid.shape[0] != 2:
        raise ShapeError(f"Flots (2,H,W) de même forme attendus, reçu {rigid.shape} et {residual.shape}")
    return rigid + residual


def warp_image(source, flow):
    """
    Déforme `source` par échantillonnage inverse: sortie(p) = source(p + flow(p)).

    Un flot nul redonne exactement l'image source.
    """
    source, flow = as_tensor(source), as_tensor(flow)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ShapeError(f"Flot (2,H,W) attendu, reçu {flow.shape}")
    coords = flow + pixel_grid(flow.shape[1], flow.shape[2])
    return bilinear_sample(source, coords)


def warp_validity(flow):
    """Masque (H,W) des pixels dont la cible p + flow(p) reste dans l'image."""
    data = flow.data if isinstance(flow, Tensor) else np.asarray(flow)
    _, h, w = data.shape
    coords = data + pixel_grid(h, w)
    return (coords[0] >= 0) & (coords[0] <= w - 1) & (coords[1] >= 0) & (coords[1] <= h - 1)


def forward_backward_gap(flow_fwd, flow_bwd):
    """
    Écart de cohérence avant/arrière ‖F_fwd(p) + F_bwd(p + F_fwd(p))‖ par pixel.

    Returns:
        Tensor: carte (1,H,W), nulle pour des flots exactement opposés
    """
    flow_fwd, flow_bwd = as_tensor(flow_fwd), as_tensor(flow_bwd)
    if flow_fwd.shape != flow_bwd.shape:
        raise ShapeError(f"Flots de formes différentes: {flow_fwd.shape} et {flow_bwd.shape}")
    round_trip = flow_fwd + warp_image(flow_bwd, flow_fwd)
    return ops.sqrt(ops.reduce("sum", ops.square(round_trip), axes=0, keepdims=True))
