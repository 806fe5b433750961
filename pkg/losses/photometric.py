"""
Module des pertes photométriques

l1/l2 globales, SSIM globale (fenêtre gaussienne 11x11, σ = 1.5, positions
valides), SSIM locale par pixel (fenêtre boîte 3x3, bords répliqués),
erreur photométrique mixte 0.85·SSIM + 0.15·L1 et PSNR.
"""

import numpy as np

from tensor import ops
from tensor.errors import ContractError, ShapeError
from tensor.tensor import as_tensor

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
PHOTOMETRIC_ALPHA = 0.85


def _check_same(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"Formes différentes: {a.shape} et {b.shape}")
    return a, b


def l1(a, b):
    """Moyenne des écarts absolus."""
    a, b = _check_same(a, b)
    return ops.mean(ops.absolute(a - b))


def l2(a, b):
    """Moyenne des écarts quadratiques."""
    a, b = _check_same(a, b)
    return ops.mean(ops.square(a - b))


def gaussian_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _valid_filter_matrix(n, kernel):
    k = kernel.size
    m = np.zeros((n - k + 1, n))
    for i in range(n - k + 1):
        m[i, i:i + k] = kernel
    return m


def _filter(x, rows, cols):
    return ops.einsum("cHw,wW->cHW", ops.einsum("Hh,chw->cHw", rows, x), cols)


def _ssim_terms(a, b, rows, cols):
    mu_a = _filter(a, rows, cols)
    mu_b = _filter(b, rows, cols)
    var_a = _filter(a * a, rows, cols) - mu_a * mu_a
    var_b = _filter(b * b, rows, cols) - mu_b * mu_b
    cov = _filter(a * b, rows, cols) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return numerator / denominator


def ssim(a, b):
    """
    SSIM moyenne (canaux et positions valides de la fenêtre 11x11).

    Raises:
        ContractError: image plus petite que la fenêtre
    """
    a, b = _check_same(a, b)
    h, w = a.shape[-2:]
    if h < WINDOW_SIZE or w < WINDOW_SIZE:
        raise ContractError(f"SSIM exige au moins {WINDOW_SIZE}x{WINDOW_SIZE} pixels, reçu {h}x{w}")
    window = gaussian_window()
    rows = _valid_filter_matrix(h, window)
    cols = _valid_filter_matrix(w, window).T
    return ops.mean(_ssim_terms(a, b, rows, cols))


def ssim_map(a, b):
    """SSIM locale (C,H,W) sur une fenêtre boîte 3x3 avec bords répliqués."""
    a, b = _check_same(a, b)
    h, w = a.shape[-2:]
    box = np.full(3, 1.0 / 3.0)
    rows = _valid_filter_matrix(h + 2, box)
    cols = _valid_filter_matrix(w + 2, box).T
    return _ssim_terms(ops.pad(a, 1), ops.pad(b, 1), rows, cols)


def photometric_error(a, b):
    """Erreur par pixel (1,H,W): 0.85·(1 − ssim)/2 + 0.15·|a − b|, moyennées sur les canaux."""
    a, b = _check_same(a, b)
    structural = ops.clamp((1.0 - ssim_map(a, b)) * 0.5, 0.0, 1.0)
    absolute = ops.absolute(a - b)
    mixed = PHOTOMETRIC_ALPHA * structural + (1.0 - PHOTOMETRIC_ALPHA) * absolute
    return ops.mean(mixed, axes=0, keepdims=True)


def psnr(a, b):
    """PSNR en dB pour des images dans [0,1]; +inf pour des images identiques."""
    a, b = _check_same(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
