from geometry.flow import forward_backward_gap, rigid_flow, warp_image
from losses.photometric import photometric_error
from tensor import ops
from tensor.errors import ContractError, ShapeError
from tensor.tensor import as_tensor


def _gradients(x):
    return x[:, :, 1:] - x[:, :, :-1], x[:, 1:, :] - x[:, :-1, :]


def smoothness_loss(disparity, image):
    """
    Régularisation de la disparité sensible aux contours:
    mean(|∂x d̂|·exp(−|∂x I|)) + mean(|∂y d̂|·exp(−|∂y I|)), d̂ = d / (moyenne(d) + 1e-7).
    """
    disparity, image = as_tensor(disparity), as_tensor(image)
    if disparity.shape[1:] != image.shape[1:]:
        raise ShapeError(f"Résolutions différentes: disparité {disparity.shape}, image {image.shape}")
    normalized = disparity / (ops.mean(disparity) + 1e-7)
    disp_x, disp_y = _gradients(normalized)
    img_x, img_y = _gradients(image)
    weight_x = ops.exp(-ops.mean(ops.absolute(img_x), axes=0, keepdims=True))
    weight_y = ops.exp(-ops.mean(ops.absolute(img_y), axes=0, keepdims=True))
    return ops.mean(ops.absolute(disp_x) * weight_x) + ops.mean(ops.absolute(disp_y) * weight_y)


def reprojection_loss(target, sources, depth):
    """
    Perte de reprojection multi-vues (minimum par pixel sur les sources).

    Args:
        target (Tensor): image cible (3,H,W)
        sources (list): couples (image source, (caméra cible, caméra source))
        depth (Tensor): profondeur candidate (1,H,W) de la vue cible

    Returns:
        Tensor: moyenne sur les pixels du minimum des erreurs photométriques
    """
    if not sources:
        raise ContractError("reprojection_loss exige au moins une source")
    target = as_tensor(target)
    errors = []
    for image, (cam_target, cam_source) in sources:
        flow = rigid_flow(depth, cam_target, cam_source)
        errors.append(photometric_error(warp_image(image, flow), target))
    stacked = ops.concat(errors, axis=0)
    return ops.mean(ops.reduce("min", stacked, axes=0))


def consistency_loss(flow_fwd, flow_bwd):
    """Écart avant/arrière moyen, symétrisé sur les deux sens."""
    forward = ops.mean(forward_backward_gap(flow_fwd, flow_bwd))
    backward = ops.mean(forward_backward_gap(flow_bwd, flow_fwd))
    return 0.5 * (forward + backward)
