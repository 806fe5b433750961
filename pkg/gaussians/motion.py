import numpy as np

from geometry.projection import pixel_grid, unproject
from gaussians.construction import maps_to_rows, transform_means
from tensor import ops
from tensor.errors import ContractError
from tensor.sampling import bilinear_sample
from tensor.tensor import as_tensor


def flow_targets(flow, depth_t1, cam_t1):
    """
    Positions monde (H·W, 3) visées par le flot total de chaque pixel.

    La profondeur de l'instant t+1 est échantillonnée au pixel d'arrivée,
    puis rétro-projetée depuis la caméra t+1.
    """
    flow, depth_t1 = as_tensor(flow), as_tensor(depth_t1)
    targets = flow + pixel_grid(flow.shape[1], flow.shape[2])
    sampled = bilinear_sample(depth_t1, targets)
    points = unproject(sampled, cam_t1, pixels=targets, frame="camera")
    return transform_means(maps_to_rows(points), cam_t1.cam_to_world)


def displace_means(cloud, flows, depths_t1, cams_t1, alpha):
    """
    Déplace les moyennes d'un nuage aligné sur les pixels le long du flot total.

    Pour la gaussienne issue du pixel p de la caméra c: μ' = μ + alpha·(X_{t+1} − μ)
    où X_{t+1} est la rétro-projection du pixel p + F_total(p) avec la profondeur
    de t+1. Les autres attributs sont inchangés.

    Args:
        cloud (GaussianCloud): nuage fusionné portant son index de pixels
        flows (list[Tensor]): flot total (2,H,W) par caméra, défini sur la grille de t
        depths_t1 (list[Tensor]): profondeur (1,H,W) par caméra à t+1
        cams_t1 (list[PinholeCamera]): caméras du banc à t+1
        alpha (float): fraction temporelle dans [0, 1]

    Returns:
        GaussianCloud: nuage aux moyennes déplacées
    """
    if cloud.pixel_index is None:
        raise ContractError("displace_means exige un nuage construit par pixel_aligned_cloud")
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha hors de [0, 1]: {alpha}")
    if len(flows) != len(cams_t1) or len(depths_t1) != len(cams_t1):
        raise ContractError("Un flot et une profondeur par caméra sont requis")
    if alpha == 0.0:
        return cloud.replace()

    targets = ops.concat([flow_targets(f, d, c) for f, d, c in zip(flows, depths_t1, cams_t1)], axis=0)
    offsets = np.cumsum([0] + [c.width * c.height for c in cams_t1])
    cam_idx, rows, cols = cloud.pixel_index.T
    widths = np.array([c.width for c in cams_t1])
    positions = offsets[cam_idx] + rows * widths[cam_idx] + cols
    displacement = ops.take(targets, positions, axis=0) - cloud.means
    return cloud.replace(means=cloud.means + alpha * displacement)
