"""
Projection EWA des gaussiennes 3D vers le plan image

Pour chaque gaussienne: moyenne 2D par projection sténopé, covariance 2D
Σ' = J·W·Σ·Wᵀ·Jᵀ + dilation·I (W rotation monde→caméra, J jacobienne de la
projection à la moyenne) et couleur issue des harmoniques sphériques évaluées
dans la direction caméra→moyenne.
"""

from dataclasses import dataclass

import numpy as np

from gaussians.cloud import covariances
from tensor import ops
from tensor.errors import ContractError
from tensor.tensor import Tensor

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199


@dataclass
class ProjectedGaussian:
    """Empreinte image d'une gaussienne (valeurs numpy, pour inspection)."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float


class ProjectedGaussians:
    """
    Empreintes de N gaussiennes, rangées en colonnes différentiables.

    Attributs:
        mean2d (Tensor): (N,2) positions pixel
        cov2d (Tensor): (N,3) coefficients (a, b, c) de la matrice [[a, b], [b, c]]
        color (Tensor): (N,3) couleurs RGB dans [0,1]
        opacity (Tensor): (N,1)
        depth (ndarray): (N,) profondeur caméra
        valid (ndarray): (N,) faux hors de (near, far)
    """

    def __init__(self, mean2d, cov2d, color, opacity, depth, valid):
        self.mean2d = mean2d
        self.cov2d = cov2d
        self.color = color
        self.opacity = opacity
        self.depth = np.asarray(depth, dtype=np.float64)
        self.valid = np.asarray(valid, dtype=bool)

    def __len__(self):
        return self.depth.shape[0]

    def __getitem__(self, i):
        a, b, c = self.cov2d.data[i]
        return ProjectedGaussian(
            mean2d=self.mean2d.data[i].copy(),
            cov2d=np.array([[a, b], [b, c]]),
            depth=float(self.depth[i]),
            color=self.color.data[i].copy(),
            opacity=float(self.opacity.data[i, 0]),
        )

    def to_list(self):
        return [self[i] for i in range(len(self)) if self.valid[i]]

    @classmethod
    def from_arrays(cls, mean2d, cov2d, color, opacity, depth, valid=None):
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.ones(depth.shape, dtype=bool) if valid is None else valid
        cov2d = np.asarray(cov2d, dtype=np.float64)
        if cov2d.ndim == 3:
            cov2d = np.stack([cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]], axis=1)
        opacity = np.asarray(opacity, dtype=np.float64).reshape(-1, 1)
        return cls(Tensor(mean2d), Tensor(cov2d), Tensor(color), Tensor(opacity), depth, valid)


def eval_sh(sh_coeffs, directions, sh_degree):
    """
    Couleur RGB des harmoniques sphériques de degré 0 ou 1.

    Convention 3DGS: couleur = C0·c0 − C1·y·c1 + C1·z·c2 − C1·x·c3 + 0.5,
    bornée à [0,1] (gradient nul hors de l'intervalle).
    """
    result = SH_C0 * sh_coeffs[:, 0:3]
    if sh_degree >= 1:
        x, y, z = (directions[:, i:i + 1] for i in range(3))
        result = (result
                  - SH_C1 * y * sh_coeffs[:, 3:6]
                  + SH_C1 * z * sh_coeffs[:, 6:9]
                  - SH_C1 * x * sh_coeffs[:, 9:12])
    return ops.clamp(result + 0.5, 0.0, 1.0)


def project_gaussians(cloud, cam, cfg):
    """
    Projette un nuage dans la caméra `cam`.

    Args:
        cloud (GaussianCloud): nuage dans le repère monde
        cam (PinholeCamera): caméra de rendu
        cfg (RenderConfig): configuration (near, far, dilation, degré SH)

    Returns:
        ProjectedGaussians: empreintes différentiables et masque de validité
    """
    if cloud.sh_degree < cfg.sh_degree:
        raise ContractError(f"Le nuage est de degré {cloud.sh_degree}, le rendu demande {cfg.sh_degree}")
    n = cloud.num_gaussians
    if n == 0:
        empty = ProjectedGaussians.from_arrays(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)),
                                               np.zeros((0, 1)), np.zeros(0))
        return empty

    view = cam.world_to_cam
    rotation = Tensor(view[:3, :3])
    local = ops.einsum("ij,nj->ni", rotation, cloud.means) + view[:3, 3]
    z = local[:, 2]
    valid = (z.data > cfg.near) & (z.data < cfg.far)
    safe_z = ops.where(valid, z, np.ones(n))
    inv_z = 1.0 / safe_z
    x_over_z = local[:, 0] * inv_z
    y_over_z = local[:, 1] * inv_z
    mean2d = ops.stack([cam.fx * x_over_z + cam.cx, cam.fy * y_over_z + cam.cy], axis=1)

    # Jacobienne (N,2,3) de (x,y,z) -> (u,v)
    zero = Tensor(np.zeros(n))
    jac = ops.stack([
        cam.fx * inv_z, zero, -cam.fx * x_over_z * inv_z,
        zero, cam.fy * inv_z, -cam.fy * y_over_z * inv_z,
    ], axis=1).reshape(n, 2, 3)

    sigma = covariances(cloud.rotations, cloud.scales)
    sigma_cam = ops.einsum("nik,lk->nil", ops.einsum("ij,njk->nik", rotation, sigma), rotation)
    cov = ops.einsum("nik,nlk->nil", ops.einsum("nij,njk->nik", jac, sigma_cam), jac)
    cov2d = ops.stack([cov[:, 0, 0] + cfg.dilation, cov[:, 0, 1], cov[:, 1, 1] + cfg.dilation], axis=1)

    directions = cloud.means - cam.center
    norms = ops.sqrt(ops.reduce("sum", ops.square(directions), axes=1, keepdims=True) + 1e-24)
    color = eval_sh(cloud.sh_coeffs, directions / norms, cfg.sh_degree)

    return ProjectedGaussians(mean2d, cov2d, color, cloud.opacities, z.data.copy(), valid)
