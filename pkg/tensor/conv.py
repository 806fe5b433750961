import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor.errors import ShapeError
from tensor.ops import einsum
from tensor.tensor import Function, as_tensor


class Conv2d(Function):
    """Corrélation croisée (C_in,H,W) x (C_out,C_in,k,k) avec pas et remplissage nul."""

    def forward(self, x, kernels, stride, padding):
        if x.ndim != 3 or kernels.ndim != 4:
            raise ShapeError(f"conv2d attend (C,H,W) et (O,C,k,k), reçu {x.shape} et {kernels.shape}")
        c_out, c_in, k, k2 = kernels.shape
        if k != k2 or k % 2 == 0:
            raise ShapeError(f"Noyau carré de taille impaire attendu, reçu {k}x{k2}")
        if c_in != x.shape[0]:
            raise ShapeError(f"Canaux d'entrée incompatibles: {x.shape[0]} != {c_in}")
        _, h, w = x.shape
        for size in (h, w):
            if (size + 2 * padding - k) % stride != 0 or size + 2 * padding < k:
                raise ShapeError(f"Taille de sortie non entière pour H/W={size}, k={k}, stride={stride}, padding={padding}")

        self.stride, self.padding, self.k = stride, padding, k
        self.in_shape = x.shape
        self.kernels = kernels
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        self.padded_shape = xp.shape
        # (C_in, H', W', k, k)
        self.windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
        return np.einsum("chwij,ocij->ohw", self.windows, kernels, optimize=True)

    def backward(self, grad):
        s, k, p = self.stride, self.k, self.padding
        d_kernels = np.einsum("ohw,chwij->ocij", grad, self.windows, optimize=True)
        d_padded = np.zeros(self.padded_shape)
        h_out, w_out = grad.shape[1:]
        for i in range(k):
            for j in range(k):
                contrib = np.einsum("ohw,oc->chw", grad, self.kernels[:, :, i, j], optimize=True)
                d_padded[:, i:i + s * h_out:s, j:j + s * w_out:s] += contrib
        _, h, w = self.in_shape
        return d_padded[:, p:p + h, p:p + w], d_kernels


def conv2d(x, kernels, stride=1, padding=0):
    """
    Convolution 2D (convention de corrélation croisée).

    Args:
        x (Tensor): entrée (C_in, H, W)
        kernels (Tensor): noyaux (C_out, C_in, k, k), k impair
        stride (int): pas
        padding (int): remplissage par des zéros

    Returns:
        Tensor: sortie (C_out, H', W')
    """
    return Conv2d.apply(x, kernels, stride=int(stride), padding=int(padding))


def _upsample_matrix(n):
    # Centres de pixels alignés à demi-pixel, extrapolation linéaire aux bords
    m = np.zeros((2 * n, n))
    if n == 1:
        m[:, 0] = 1.0
        return m
    for i in range(2 * n):
        src = (i + 0.5) / 2.0 - 0.5
        i0 = int(np.clip(np.floor(src), 0, n - 2))
        frac = src - i0
        m[i, i0] += 1.0 - frac
        m[i, i0 + 1] += frac
    return m


def _downsample_matrix(n):
    if n % 2:
        raise ShapeError(f"downsample2x exige une taille paire, reçu {n}")
    m = np.zeros((n // 2, n))
    for i in range(n // 2):
        m[i, 2 * i] = 0.5
        m[i, 2 * i + 1] = 0.5
    return m


def upsample2x(x):
    """Agrandissement bilinéaire d'un facteur 2 sur les deux derniers axes de (C,H,W)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"upsample2x attend (C,H,W), reçu {x.shape}")
    _, h, w = x.shape
    rows = einsum("Hh,chw->cHw", _upsample_matrix(h), x)
    return einsum("cHw,Ww->cHW", rows, _upsample_matrix(w))


def downsample2x(x):
    """Moyenne sur des blocs 2x2 de (C,H,W)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"downsample2x attend (C,H,W), reçu {x.shape}")
    _, h, w = x.shape
    rows = einsum("Hh,chw->cHw", _downsample_matrix(h), x)
    return einsum("cHw,Ww->cHW", rows, _downsample_matrix(w))
