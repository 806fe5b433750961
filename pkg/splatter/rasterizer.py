"""
Module du rastériseur différentiable

Ce module compose les empreintes gaussiennes d'avant en arrière:
    w_i = a_i·T_i, T_{i+1} = T_i·(1 − a_i), a_i = α_i·g_i(p)
avec g_i(p) = exp(−½·(p − μ_i)ᵀ·Σ_i⁻¹·(p − μ_i)). Les centres de pixels sont
aux coordonnées entières.

Le tri par profondeur est global (stable, égalités départagées par l'indice
d'entrée). Une contribution a_i < `alpha_cutoff` est ignorée tant que la somme
des poids a_i·T_i ignorés au pixel reste sous `alpha_cutoff`; au-delà elle est
composée normalement. Comme |c_i − B_{i+1}| ≤ 1, l'écart à la composition
complète reste sous `alpha_cutoff` + `transmittance_floor` + la queue hors
empreinte. Un pixel s'arrête dès que sa transmittance passe sous
`transmittance_floor`, la contribution qui franchit le seuil étant conservée.

La passe arrière utilise la récurrence arrière→avant
    B_K = fond, B_i = a_i·c_i + (1 − a_i)·B_{i+1}
d'où dC/da_i = T_i·(c_i − B_{i+1}) et dC/dc_i = a_i·T_i, sans division par
(1 − a_i). Les accumulations par gaussienne passent par np.bincount dans un
ordre fixe, ce qui rend le gradient déterministe.
"""

import csv
import os
from dataclasses import asdict, dataclass

import numpy as np

from splatter.projection import project_gaussians
from tensor.errors import ShapeError
from tensor.tensor import Function

SINGULAR_DET = 1e-12
# Seuil des queues ignorées sans comptabilité, en fraction de alpha_cutoff
TAIL_FRACTION = 1.0 / 32.0


@dataclass
class RenderStats:
    """Statistiques d'un rendu: primitives ignorées et nombre moyen de mélanges par pixel."""

    num_gaussians: int = 0
    skipped_singular: int = 0
    culled: int = 0
    mean_blended: float = 0.0

    def to_row(self, **context):
        row = dict(context)
        row.update(asdict(self))
        return row


def append_render_stats(stats, filename, **context):
    """Ajoute une ligne au journal CSV des statistiques de rendu."""
    row = stats.to_row(**context)
    new_file = not os.path.exists(filename)
    with open(filename, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(row.keys()))
        if new_file:
            writer.writeheader()
        writer.writerow(row)


def _conics(cov2d):
    a, b, c = cov2d[:, 0], cov2d[:, 1], cov2d[:, 2]
    det = a * c - b * b
    safe = np.where(det > SINGULAR_DET, det, 1.0)
    return np.stack([c / safe, -b / safe, a / safe], axis=1), det


def _pixel_pairs(mean2d, cov2d, opacity, order, width, height, alpha_cutoff):
    """
    Paires (rang de profondeur, pixel) couvertes par chaque gaussienne.

    Sans coupure, chaque gaussienne couvre toute l'image. Sinon, la boîte
    englobe l'ellipse dᵀΣ⁻¹d ≤ 2·ln(α/(TAIL_FRACTION·coupure)), hors de laquelle
    α·g < TAIL_FRACTION·coupure. Ce n'est pas la boîte fixe à 3σ: l'empreinte
    dépend de l'opacité, et une gaussienne d'opacité inférieure à ce seuil ne
    touche aucun pixel. Les pixels de la boîte sous la coupure passent par le
    budget d'omission du rastériseur.
    """
    count = order.size
    if alpha_cutoff > 0.0:
        floor = TAIL_FRACTION * alpha_cutoff
        alpha = opacity[order, 0]
        level = 2.0 * np.log(np.maximum(alpha, 1e-300) / floor)
        level = np.where(alpha > floor, level, -1.0)
        extent_x = np.sqrt(np.maximum(level, 0.0) * cov2d[order, 0])
        extent_y = np.sqrt(np.maximum(level, 0.0) * cov2d[order, 2])
        mx, my = mean2d[order, 0], mean2d[order, 1]
        x0 = np.clip(np.ceil(mx - extent_x), 0, width).astype(np.int64)
        x1 = np.clip(np.floor(mx + extent_x) + 1, 0, width).astype(np.int64)
        y0 = np.clip(np.ceil(my - extent_y), 0, height).astype(np.int64)
        y1 = np.clip(np.floor(my + extent_y) + 1, 0, height).astype(np.int64)
        bw = np.where(level >= 0, np.maximum(x1 - x0, 0), 0)
        bh = np.where(level >= 0, np.maximum(y1 - y0, 0), 0)
    else:
        x0 = np.zeros(count, dtype=np.int64)
        y0 = np.zeros(count, dtype=np.int64)
        bw = np.full(count, width, dtype=np.int64)
        bh = np.full(count, height, dtype=np.int64)

    sizes = bw * bh
    total = int(sizes.sum())
    ranks = np.repeat(np.arange(count), sizes)
    starts = np.repeat(np.cumsum(sizes) - sizes, sizes)
    local = np.arange(total) - starts
    widths = np.maximum(bw[ranks], 1)
    px = x0[ranks] + local % widths
    py = y0[ranks] + local // widths
    culled = int(np.count_nonzero(sizes == 0))
    return ranks, px, py, culled


def _layer_groups(layer):
    """Indices des paires regroupées par couche (k-ième gaussienne de chaque pixel)."""
    if layer.size == 0:
        return []
    by_layer = np.argsort(layer, kind="stable")
    bounds = np.searchsorted(layer[by_layer], np.arange(int(layer.max()) + 2))
    return [by_layer[bounds[k]:bounds[k + 1]] for k in range(len(bounds) - 1)]


class Rasterize(Function):
    """
    Rendu (4,H,W): trois canaux de couleur puis l'opacité accumulée.

    Entrées différentiables: mean2d (N,2), cov2d (N,3), color (N,3), opacity (N,1).
    """

    def forward(self, mean2d, cov2d, color, opacity, depth, valid, cfg, stats):
        n = mean2d.shape[0]
        h, w = cfg.height, cfg.width
        self.n, self.h, self.w = n, h, w
        self.background = np.array(list(cfg.background) + [0.0])
        self.stats = stats
        stats.num_gaussians = n

        conic, det = _conics(cov2d)
        usable = valid & (det > SINGULAR_DET)
        self.stats.skipped_singular = int(np.count_nonzero(valid & ~(det > SINGULAR_DET)))
        candidates = np.flatnonzero(usable)
        order = candidates[np.argsort(depth[candidates], kind="stable")]

        ranks, px, py, culled = _pixel_pairs(mean2d, cov2d, opacity, order, w, h, cfg.alpha_cutoff)
        self.stats.culled = culled
        gid = order[ranks]
        dx = px - mean2d[gid, 0]
        dy = py - mean2d[gid, 1]
        power = -0.5 * (conic[gid, 0] * dx * dx + 2.0 * conic[gid, 1] * dx * dy + conic[gid, 2] * dy * dy)
        g = np.exp(np.minimum(power, 0.0))
        a = opacity[gid, 0] * g
        keep = a >= TAIL_FRACTION * cfg.alpha_cutoff if cfg.alpha_cutoff > 0.0 else np.ones(a.shape, dtype=bool)

        pixel = (py * w + px)[keep]
        ranks, gid, dx, dy, g, a = ranks[keep], gid[keep], dx[keep], dy[keep], g[keep], a[keep]
        # Ordre de composition: pixel puis profondeur
        sort = np.lexsort((ranks, pixel))
        pixel, gid, dx, dy, g, a = pixel[sort], gid[sort], dx[sort], dy[sort], g[sort], a[sort]

        num_pixels = h * w
        counts = np.bincount(pixel, minlength=num_pixels)
        group_start = np.cumsum(counts) - counts
        layer = np.arange(pixel.size) - group_start[pixel]

        colors4 = np.concatenate([color, np.ones((n, 1))], axis=1)
        transmittance = np.ones(num_pixels)
        done = np.zeros(num_pixels, dtype=bool)
        omitted = np.zeros(num_pixels)
        accum = np.zeros((num_pixels, 4))
        t_before = np.zeros(pixel.size)
        used = np.zeros(pixel.size, dtype=bool)
        for at_layer in _layer_groups(layer):
            active = at_layer[~done[pixel[at_layer]]]
            if active.size == 0:
                continue
            if cfg.alpha_cutoff > 0.0:
                weight = a[active] * transmittance[pixel[active]]
                skip = (a[active] < cfg.alpha_cutoff) & (omitted[pixel[active]] + weight <= cfg.alpha_cutoff)
                omitted[pixel[active[skip]]] += weight[skip]
                active = active[~skip]
            p = pixel[active]
            t = transmittance[p]
            t_before[active] = t
            used[active] = True
            accum[p] += (a[active] * t)[:, None] * colors4[gid[active]]
            transmittance[p] = t * (1.0 - a[active])
            if cfg.transmittance_floor > 0.0:
                done[p] |= transmittance[p] < cfg.transmittance_floor

        self.stats.mean_blended = float(used.sum()) / num_pixels
        self.pairs = (pixel[used], gid[used], dx[used], dy[used], g[used], a[used], t_before[used], layer[used])
        self.conic = conic
        self.colors4 = colors4
        self.opacity = opacity[:, 0]
        self.final_t = transmittance

        out = accum + transmittance[:, None] * self.background[None, :]
        out[:, 3] = 1.0 - transmittance
        return out.T.reshape(4, h, w)

    def backward(self, grad):
        n, h, w = self.n, self.h, self.w
        pixel, gid, dx, dy, g, a, t_before, layer = self.pairs
        grad_pix = grad.reshape(4, h * w).T

        d_a = np.zeros(pixel.size)
        back = np.tile(self.background, (h * w, 1))
        for idx in reversed(_layer_groups(layer)):
            p = pixel[idx]
            c = self.colors4[gid[idx]]
            behind = back[p]
            d_a[idx] = t_before[idx] * np.einsum("pc,pc->p", grad_pix[p], c - behind)
            back[p] = a[idx, None] * c + (1.0 - a[idx, None]) * behind

        weights = a * t_before
        d_color = np.stack([
            np.bincount(gid, weights=weights * grad_pix[pixel, ch], minlength=n) for ch in range(3)
        ], axis=1)

        d_opacity = np.bincount(gid, weights=d_a * g, minlength=n)[:, None]
        d_power = d_a * self.opacity[gid] * g
        q00, q01, q11 = self.conic[gid, 0], self.conic[gid, 1], self.conic[gid, 2]
        # d/dμ de la puissance = Q·d
        d_mean = np.stack([
            np.bincount(gid, weights=d_power * (q00 * dx + q01 * dy), minlength=n),
            np.bincount(gid, weights=d_power * (q01 * dx + q11 * dy), minlength=n),
        ], axis=1)
        # Gradient par rapport à la conique symétrique Q, puis dΣ = −Q·G·Q
        g00 = np.bincount(gid, weights=-0.5 * d_power * dx * dx, minlength=n)
        g01 = np.bincount(gid, weights=-0.5 * d_power * dx * dy, minlength=n)
        g11 = np.bincount(gid, weights=-0.5 * d_power * dy * dy, minlength=n)
        big_q = np.stack([self.conic[:, 0], self.conic[:, 1], self.conic[:, 1], self.conic[:, 2]], axis=1).reshape(n, 2, 2)
        big_g = np.stack([g00, g01, g01, g11], axis=1).reshape(n, 2, 2)
        d_sigma = -np.einsum("nij,njk,nkl->nil", big_q, big_g, big_q)
        d_cov = np.stack([d_sigma[:, 0, 0], 2.0 * d_sigma[:, 0, 1], d_sigma[:, 1, 1]], axis=1)
        return d_mean, d_cov, d_color, d_opacity


def rasterize(projected, cfg, return_stats=False):
    """
    Compose les empreintes projetées en une image.

    Args:
        projected (ProjectedGaussians): sortie de project_gaussians
        cfg (RenderConfig): taille, fond, seuils
        return_stats (bool): renvoyer aussi les RenderStats

    Returns:
        tuple: (image (3,H,W), alpha_map (1,H,W)) et éventuellement les statistiques
    """
    if projected.mean2d.ndim != 2 or projected.mean2d.shape[1] != 2:
        raise ShapeError(f"mean2d (N,2) attendu, reçu {projected.mean2d.shape}")
    stats = RenderStats()
    out = Rasterize.apply(projected.mean2d, projected.cov2d, projected.color, projected.opacity,
                          depth=projected.depth, valid=projected.valid, cfg=cfg, stats=stats)
    image, alpha = out[0:3], out[3:4]
    if return_stats:
        return image, alpha, stats
    return image, alpha


def rasterize_oracle(projected, cfg):
    """
    Rendu de référence non différentiable: toutes les gaussiennes, dans
    l'ordre exact de profondeur, sans coupure ni arrêt anticipé.

    Returns:
        ndarray: image (3,H,W)
    """
    h, w = cfg.height, cfg.width
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    image = np.zeros((3, h, w))
    transmittance = np.ones((h, w))
    mean2d, cov2d = projected.mean2d.data, projected.cov2d.data
    color, opacity = projected.color.data, projected.opacity.data[:, 0]
    candidates = np.flatnonzero(projected.valid)
    for i in candidates[np.argsort(projected.depth[candidates], kind="stable")]:
        a_, b_, c_ = cov2d[i]
        det = a_ * c_ - b_ * b_
        if det <= SINGULAR_DET:
            continue
        dx = xs - mean2d[i, 0]
        dy = ys - mean2d[i, 1]
        power = -0.5 * (c_ * dx * dx - 2.0 * b_ * dx * dy + a_ * dy * dy) / det
        contribution = opacity[i] * np.exp(np.minimum(power, 0.0))
        image += contribution * transmittance * color[i][:, None, None]
        transmittance = transmittance * (1.0 - contribution)
    return image + transmittance * np.asarray(cfg.background)[:, None, None]


def render(cloud, cam, cfg, return_alpha=False, return_stats=False):
    """
    Point d'entrée du rendu: projection puis composition.

    Returns:
        Tensor | tuple: image (3,H,W), suivie selon les options de l'alpha
        (1,H,W) et des RenderStats
    """
    projected = project_gaussians(cloud, cam, cfg)
    image, alpha, stats = rasterize(projected, cfg, return_stats=True)
    result = (image,)
    if return_alpha:
        result += (alpha,)
    if return_stats:
        result += (stats,)
    return result[0] if len(result) == 1 else result
