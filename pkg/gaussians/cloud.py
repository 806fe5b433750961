"""
Module du nuage de gaussiennes 3D

Ce module définit le nuage de primitives gaussiennes (moyennes, rotations,
échelles, opacités, coefficients d'harmoniques sphériques) et la construction
différentiable des matrices de covariance Σ = R·diag(s)²·Rᵀ.
"""

import numpy as np

from tensor import ops
from tensor.errors import ContractError, ShapeError
from tensor.tensor import as_tensor


def sh_channels(sh_degree):
    if sh_degree not in (0, 1):
        raise ContractError(f"Degré d'harmoniques sphériques non supporté: {sh_degree}")
    return 3 * (sh_degree + 1) ** 2


class GaussianCloud:
    """
    Ensemble de N primitives gaussiennes dans le repère monde.

    Attributs:
        means (Tensor): moyennes (N,3) en mètres
        rotations (Tensor): quaternions unitaires (N,4), ordre (w, x, y, z)
        scales (Tensor): écarts-types (N,3) le long des axes principaux
        opacities (Tensor): opacités (N,1) dans (0,1)
        sh_coeffs (Tensor): coefficients (N, 3·(L+1)²), rangés base par base (k·3 + canal)
        sh_degree (int): degré L, 0 ou 1
        pixel_index (ndarray): (N,3) entiers (caméra, ligne, colonne) ou None
    """

    def __init__(self, means, rotations, scales, opacities, sh_coeffs, sh_degree, pixel_index=None):
        self.means = as_tensor(means)
        self.rotations = as_tensor(rotations)
        self.scales = as_tensor(scales)
        self.opacities = as_tensor(opacities)
        self.sh_coeffs = as_tensor(sh_coeffs)
        self.sh_degree = int(sh_degree)
        self.pixel_index = None if pixel_index is None else np.asarray(pixel_index, dtype=np.int64)
        self._check_shapes()

    def _check_shapes(self):
        n = self.means.shape[0] if self.means.ndim == 2 else -1
        expected = {
            "means": (self.means, (n, 3)),
            "rotations": (self.rotations, (n, 4)),
            "scales": (self.scales, (n, 3)),
            "opacities": (self.opacities, (n, 1)),
            "sh_coeffs": (self.sh_coeffs, (n, sh_channels(self.sh_degree))),
        }
        for name, (tensor, shape) in expected.items():
            if tensor.shape != shape:
                raise ShapeError(f"{name}: forme {tensor.shape}, {shape} attendue")
        if self.pixel_index is not None and self.pixel_index.shape != (n, 3):
            raise ShapeError(f"pixel_index: forme {self.pixel_index.shape}, {(n, 3)} attendue")

    def __len__(self):
        return self.num_gaussians

    def __repr__(self):
        return f"GaussianCloud(N={self.num_gaussians}, sh_degree={self.sh_degree})"

    @property
    def num_gaussians(self):
        return self.means.shape[0]

    def replace(self, **changes):
        """Copie du nuage avec certains attributs remplacés (les autres sont partagés)."""
        fields = {
            "means": self.means, "rotations": self.rotations, "scales": self.scales,
            "opacities": self.opacities, "sh_coeffs": self.sh_coeffs,
            "sh_degree": self.sh_degree, "pixel_index": self.pixel_index,
        }
        fields.update(changes)
        return GaussianCloud(**fields)

    def detach(self):
        return GaussianCloud(
            self.means.detach(), self.rotations.detach(), self.scales.detach(),
            self.opacities.detach(), self.sh_coeffs.detach(), self.sh_degree,
            None if self.pixel_index is None else self.pixel_index.copy(),
        )

    def numpy(self):
        return {
            "means": self.means.data, "rotations": self.rotations.data, "scales": self.scales.data,
            "opacities": self.opacities.data, "sh_coeffs": self.sh_coeffs.data,
        }

    @classmethod
    def empty(cls, sh_degree=0):
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros((0, 1)),
                   np.zeros((0, sh_channels(sh_degree))), sh_degree)


def quaternion_matrices(quaternions):
    """
    Matrices de rotation (N,3,3) de quaternions unitaires (N,4), différentiables.
    """
    q = as_tensor(quaternions)
    w, x, y, z = (q[:, i] for i in range(4))
    entries = [
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
    ]
    return ops.stack(entries, axis=1).reshape(q.shape[0], 3, 3)


def covariances(rotations, scales):
    """Covariances (N,3,3) de primitives données par quaternions (N,4) et échelles (N,3)."""
    scales = as_tensor(scales)
    m = quaternion_matrices(rotations) * scales.reshape(scales.shape[0], 1, 3)
    return ops.einsum("nij,nkj->nik", m, m)


def covariance(rotation, scale):
    """
    Covariance 3x3 d'une seule primitive: Σ = R·diag(s)·diag(s)·Rᵀ.

    Args:
        rotation (Tensor): quaternion unitaire (4,)
        scale (Tensor): échelles (3,)

    Returns:
        Tensor: matrice (3,3) symétrique définie positive
    """
    rotation, scale = as_tensor(rotation), as_tensor(scale)
    if rotation.shape != (4,) or scale.shape != (3,):
        raise ShapeError(f"Quaternion (4,) et échelle (3,) attendus, reçu {rotation.shape} et {scale.shape}")
    return covariances(rotation.reshape(1, 4), scale.reshape(1, 3)).reshape(3, 3)


def normalize_quaternions(raw, eps=1e-12):
    raw = as_tensor(raw)
    norm = ops.sqrt(ops.reduce("sum", ops.square(raw), axes=-1, keepdims=True) + eps)
    return raw / norm


def random_cloud(n, sh_degree=0, seed=0, extent=1.0, depth=3.0):
    """Nuage aléatoire valide devant une caméra identité (tests et démonstrations)."""
    rng = np.random.default_rng(seed)
    means = np.column_stack([rng.uniform(-extent, extent, n), rng.uniform(-extent, extent, n),
                             rng.uniform(depth - extent, depth + extent, n)])
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scales = rng.uniform(0.05, 0.2, size=(n, 3))
    opacities = rng.uniform(0.2, 0.9, size=(n, 1))
    sh = rng.normal(scale=0.5, size=(n, sh_channels(sh_degree)))
    return GaussianCloud(means, quats, scales, opacities, sh, sh_degree)
