"""
Projection et rétro-projection sténopé

Les points sont manipulés sous forme de cartes (3,H,W) ou de listes (3,N);
les pixels sont rangés canal 0 = u (colonne), canal 1 = v (ligne), avec les
centres de pixels aux coordonnées entières.
"""

import numpy as np

from tensor import ops
from tensor.errors import ShapeError
from tensor.tensor import Tensor, as_tensor

Z_EPS = 1e-6


def pixel_grid(height, width):
    """Grille (2,H,W) des coordonnées pixel (u, v)."""
    v, u = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return np.stack([u, v])


def camera_rays(cam, pixels=None):
    """
    Directions K⁻¹ (u, v, 1) pour chaque pixel, avec composante z = 1.

    `pixels` peut être un Tensor (2,...) différentiable; sinon la grille
    complète de la caméra est utilisée.
    """
    if pixels is None:
        # Même arithmétique que la branche différentiable ci-dessous
        grid = pixel_grid(cam.height, cam.width)
        rays = np.stack([(grid[0] - cam.cx) * (1.0 / cam.fx), (grid[1] - cam.cy) * (1.0 / cam.fy),
                         np.ones(grid.shape[1:])])
        return Tensor(rays)
    pixels = as_tensor(pixels)
    if pixels.shape[0] != 2:
        raise ShapeError(f"Pixels (2,...) attendus, reçu {pixels.shape}")
    rx = (pixels[0:1] - cam.cx) * (1.0 / cam.fx)
    ry = (pixels[1:2] - cam.cy) * (1.0 / cam.fy)
    return ops.concat([rx, ry, ops.ones((1,) + pixels.shape[1:])], axis=0)


def transform_points(points, transform):
    """Applique une transformation rigide 4x4 (constante) à des points (3,...)."""
    points = as_tensor(points)
    rotation = transform[:3, :3]
    translation = transform[:3, 3].reshape((3,) + (1,) * (points.ndim - 1))
    flat = points.reshape(3, -1) if points.ndim != 2 else points
    moved = ops.einsum("ij,jn->in", Tensor(rotation), flat)
    return moved.reshape(points.shape) + translation


def unproject(depth, cam, pixels=None, frame="world"):
    """
    Rétro-projette une carte de profondeur en points 3D.

    Args:
        depth (Tensor): profondeur (1,H,W) en mètres, strictement positive
        cam (PinholeCamera): caméra associée
        pixels (Tensor, optional): positions pixel (2,H,W) à la place de la grille
        frame (str): "world" ou "camera"

    Returns:
        Tensor: points (3,H,W) dans le repère demandé
    """
    depth = as_tensor(depth)
    if depth.ndim != 3 or depth.shape[0] != 1:
        raise ShapeError(f"Profondeur (1,H,W) attendue, reçu {depth.shape}")
    if pixels is None and depth.shape[1:] != (cam.height, cam.width):
        raise ShapeError(f"Profondeur {depth.shape[1:]} incompatible avec la caméra {cam.height}x{cam.width}")
    points = depth * camera_rays(cam, pixels)
    if frame == "camera":
        return points
    if frame != "world":
        raise ValueError(f"Repère inconnu: {frame}")
    return transform_points(points, cam.cam_to_world)


def project(points, cam):
    """
    Projette des points monde (3,...) dans l'image de `cam`.

    Returns:
        tuple: (pixels (2,...), profondeurs (1,...), masque booléen (...))
        Le masque est faux pour les points derrière la caméra (z <= Z_EPS);
        leurs pixels ne sont pas significatifs.
    """
    points = as_tensor(points)
    if points.shape[0] != 3:
        raise ShapeError(f"Points (3,...) attendus, reçu {points.shape}")
    local = transform_points(points, cam.world_to_cam)
    z = local[2:3]
    valid = z.data[0] > Z_EPS
    safe_z = ops.where(valid[None], z, np.ones_like(z.data))
    u = local[0:1] / safe_z * cam.fx + cam.cx
    v = local[1:2] / safe_z * cam.fy + cam.cy
    return ops.concat([u, v], axis=0), z, valid


def in_image(pixels, cam, margin=0.0):
    """Masque des pixels (2,...) tombant dans l'image (bords inclus)."""
    data = pixels.data if isinstance(pixels, Tensor) else np.asarray(pixels)
    return ((data[0] >= -margin) & (data[0] <= cam.width - 1 + margin)
            & (data[1] >= -margin) & (data[1] <= cam.height - 1 + margin))
