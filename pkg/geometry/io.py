"""
Lecture/écriture des formats de flot (.flo) et de profondeur (.pfm)

Les deux formats stockent des flottants 32 bits: un aller-retour est exact
pour des valeurs représentables en float32.
"""

import re

import numpy as np

from tensor.tensor import Tensor

FLO_MAGIC = 202021.25


def write_flo(flow, filename):
    """Écrit un flot (2,H,W) au format .flo (magic, largeur, hauteur, paires (u, v) entrelacées)."""
    data = flow.data if isinstance(flow, Tensor) else np.asarray(flow)
    if data.ndim != 3 or data.shape[0] != 2:
        raise ValueError(f"Flot (2,H,W) attendu, reçu {data.shape}")
    _, h, w = data.shape
    with open(filename, "wb") as f:
        np.array([FLO_MAGIC], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        np.ascontiguousarray(np.transpose(data, (1, 2, 0)), dtype="<f4").tofile(f)


def read_flo(filename):
    """Lit un fichier .flo et renvoie un Tensor (2,H,W)."""
    with open(filename, "rb") as f:
        magic = np.fromfile(f, dtype="<f4", count=1)
        if magic.size != 1 or magic[0] != np.float32(FLO_MAGIC):
            raise ValueError(f"Fichier .flo invalide (magic incorrect): {filename}")
        dims = np.fromfile(f, dtype="<i4", count=2)
        if dims.size != 2 or np.any(dims <= 0):
            raise ValueError(f"Dimensions .flo invalides: {dims}")
        w, h = int(dims[0]), int(dims[1])
        values = np.fromfile(f, dtype="<f4", count=2 * w * h)
    if values.size != 2 * w * h:
        raise ValueError(f"Fichier .flo tronqué: {values.size} valeurs, {2 * w * h} attendues")
    return Tensor(values.reshape(h, w, 2).transpose(2, 0, 1).astype(np.float64))


def write_pfm(depth, filename):
    """Écrit une carte (1,H,W) ou (H,W) en PFM niveaux de gris, petit-boutiste."""
    data = depth.data if isinstance(depth, Tensor) else np.asarray(depth)
    if data.ndim == 3:
        if data.shape[0] != 1:
            raise ValueError(f"Carte mono-canal attendue, reçu {data.shape}")
        data = data[0]
    h, w = data.shape
    with open(filename, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        # Les lignes PFM sont rangées de bas en haut
        np.ascontiguousarray(np.flipud(data), dtype="<f4").tofile(f)


def read_pfm(filename):
    """Lit un PFM niveaux de gris et renvoie un Tensor (1,H,W)."""
    with open(filename, "rb") as f:
        header = f.readline().rstrip()
        if header != b"Pf":
            raise ValueError(f"PFM niveaux de gris attendu, en-tête {header!r}")
        dim_match = re.match(rb"^(\d+)\s+(\d+)\s*$", f.readline())
        if not dim_match:
            raise ValueError("En-tête PFM malformé")
        w, h = map(int, dim_match.groups())
        scale = float(f.readline().rstrip())
        endian = "<" if scale < 0 else ">"
        values = np.fromfile(f, dtype=endian + "f4", count=w * h)
    if values.size != w * h:
        raise ValueError(f"Fichier PFM tronqué: {values.size} valeurs, {w * h} attendues")
    return Tensor(np.flipud(values.reshape(h, w)).astype(np.float64)[None])
