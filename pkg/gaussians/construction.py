"""
Construction des nuages alignés sur les pixels, passage au repère monde et fusion

Chaque pixel d'une caméra produit une gaussienne dont la moyenne est la
rétro-projection de sa profondeur. Les nuages par caméra sont construits dans
le repère caméra, transportés dans le repère monde, puis simplement concaténés.
"""

import numpy as np

from geometry.camera import check_rigid, rotation_to_quaternion
from geometry.projection import unproject
from gaussians.cloud import GaussianCloud, normalize_quaternions, sh_channels
from tensor import ops
from tensor.errors import ContractError, ShapeError
from tensor.tensor import Tensor, as_tensor

MIN_SCALE = 1e-4
DEFAULT_SCENE_EXTENT = 40.0
RIGID_TOLERANCE = 1e-6


def max_scale(cam, scene_extent=DEFAULT_SCENE_EXTENT):
    """Borne supérieure des échelles: 0.5·étendue de la scène / min(fx, fy)."""
    return 0.5 * scene_extent / min(cam.fx, cam.fy)


def param_channels(sh_degree):
    return 8 + sh_channels(sh_degree)


def maps_to_rows(maps):
    """(C,H,W) -> (H·W, C), pixels rangés ligne par ligne."""
    c = maps.shape[0]
    return maps.reshape(c, -1).transpose()


def pixel_aligned_cloud(depth, params, cam, sh_degree, camera_index=0, s_max=None):
    """
    Construit une gaussienne par pixel dans le repère de la caméra.

    Args:
        depth (Tensor): profondeur (1,H,W)
        params (Tensor): cartes brutes (8 + 3·(L+1)², H, W): rotation (4), échelle (3),
            opacité (1), harmoniques sphériques
        cam (PinholeCamera): caméra source
        sh_degree (int): degré L des harmoniques sphériques
        camera_index (int): indice de la caméra dans le banc
        s_max (float, optional): borne des échelles, `max_scale(cam)` par défaut

    Returns:
        GaussianCloud: N = H·W gaussiennes, repère caméra, avec l'index des pixels
    """
    depth, params = as_tensor(depth), as_tensor(params)
    expected = param_channels(sh_degree)
    if params.ndim != 3 or params.shape[0] != expected:
        raise ShapeError(f"Cartes de paramètres à {expected} canaux attendues, reçu {params.shape}")
    if params.shape[1:] != depth.shape[1:]:
        raise ShapeError(f"Résolutions différentes: paramètres {params.shape[1:]}, profondeur {depth.shape[1:]}")
    s_max = max_scale(cam) if s_max is None else s_max

    means = maps_to_rows(unproject(depth, cam, frame="camera"))
    rows = maps_to_rows(params)
    rotations = normalize_quaternions(rows[:, 0:4])
    scales = ops.clamp(ops.exp(rows[:, 4:7]), MIN_SCALE, s_max)
    opacities = ops.sigmoid(rows[:, 7:8])
    sh = rows[:, 8:]

    h, w = depth.shape[1:]
    v, u = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pixel_index = np.column_stack([np.full(h * w, camera_index), v.ravel(), u.ravel()])
    return GaussianCloud(means, rotations, scales, opacities, sh, sh_degree, pixel_index)


def quaternion_left_matrix(q):
    """Matrice 4x4 L telle que q ⊗ p = L·p."""
    a, b, c, d = q
    return np.array([
        [a, -b, -c, -d],
        [b, a, -d, c],
        [c, d, a, -b],
        [d, -c, b, a],
    ])


def transform_means(means, transform):
    """Applique une transformation rigide constante à des moyennes (N,3)."""
    return ops.einsum("ij,nj->ni", Tensor(transform[:3, :3]), means) + transform[:3, 3]


def to_world(cloud, transform):
    """
    Transporte un nuage par une transformation rigide 4x4.

    Les moyennes sont tournées puis translatées, les quaternions multipliés à
    gauche par la rotation; échelles, opacités et couleurs sont inchangées.
    """
    transform = np.asarray(transform, dtype=np.float64)
    try:
        check_rigid(transform, tolerance=RIGID_TOLERANCE)
    except ContractError as e:
        raise ContractError(f"to_world: transformation non rigide ({e})")
    left = quaternion_left_matrix(rotation_to_quaternion(transform[:3, :3]))
    rotations = ops.einsum("ij,nj->ni", Tensor(left), cloud.rotations)
    return cloud.replace(means=transform_means(cloud.means, transform), rotations=rotations)


def fuse(clouds):
    """
    Concatène des nuages (caméra 0 en premier), sans dédoublonnage.

    Raises:
        ContractError: degrés d'harmoniques sphériques différents ou liste vide
    """
    clouds = list(clouds)
    if not clouds:
        raise ContractError("fuse: liste de nuages vide")
    degrees = {c.sh_degree for c in clouds}
    if len(degrees) != 1:
        raise ContractError(f"fuse: degrés d'harmoniques mélangés {sorted(degrees)}")
    if len(clouds) == 1:
        return clouds[0]
    indices = [c.pixel_index for c in clouds]
    return GaussianCloud(
        ops.concat([c.means for c in clouds], axis=0),
        ops.concat([c.rotations for c in clouds], axis=0),
        ops.concat([c.scales for c in clouds], axis=0),
        ops.concat([c.opacities for c in clouds], axis=0),
        ops.concat([c.sh_coeffs for c in clouds], axis=0),
        clouds[0].sh_degree,
        None if any(i is None for i in indices) else np.concatenate(indices, axis=0),
    )
