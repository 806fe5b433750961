"""
Inférence en une passe et rendu de l'image intermédiaire

Une seule passe avant par échantillon, sans optimisation: profondeurs, flots
rigides, résiduels et totaux par caméra et par sens, nuage fusionné à t et
nuage déplacé à t+1. L'image intermédiaire est rendue en déplaçant le nuage
d'une fraction alpha du flot total, depuis la pose de caméra interpolée.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from gaussians.motion import displace_means
from gaussians.ply import save_ply
from geometry.camera import interpolate_camera
from geometry.io import write_flo, write_pfm
from pipeline.trainer import check_sample, predict_flows, render_config, static_predictions
from splatter.image_io import write_png16, write_ppm
from splatter.rasterizer import render
from tensor.tensor import no_grad

FLOW_KINDS = ("rigid", "residual", "total")
DIRECTIONS = ("fwd", "bwd")


@dataclass
class InferenceResult:
    depth_t: list
    depth_t1: list
    flows: list
    cloud_t: object
    cloud_t1: object
    seconds: float

    @property
    def num_cameras(self):
        return len(self.depth_t)

    def flow(self, kind, direction, c):
        return getattr(self.flows[c], f"{kind}_{direction}")

    def residual_magnitude(self, c, direction="fwd"):
        """Norme (H,W) du flot résiduel de la caméra `c`."""
        residual = self.flow("residual", direction, c).data
        return np.sqrt(np.sum(residual ** 2, axis=0))


def infer(sample, weights, use_residual=True):
    """
    Passe avant complète sur un échantillon.

    Args:
        sample (SceneSample): images et caméras aux instants t et t+1
        weights (NetworkWeights): poids de D, P et R
        use_residual (bool): faux pour le modèle statique (flot résiduel nul)

    Returns:
        InferenceResult: toutes les sorties intermédiaires

    Raises:
        ShapeError: résolution ou nombre de caméras incompatible avec les poids
    """
    check_sample(weights, sample)
    start = time.perf_counter()
    with no_grad():
        prediction = static_predictions(weights, sample)
        flows = [predict_flows(weights, sample, c, prediction.depth_t[c], prediction.depth_t1[c], use_residual)
                 for c in range(sample.num_cameras)]
        displaced = displace_means(prediction.cloud_t, [f.total_fwd for f in flows], prediction.depth_t1,
                                   sample.cameras_t1, alpha=1.0)
    seconds = time.perf_counter() - start
    return InferenceResult(prediction.depth_t, prediction.depth_t1, flows, prediction.cloud_t, displaced, seconds)


def render_midframe(sample, weights, result=None, alpha=0.5, use_residual=True):
    """
    Rend l'instant t + alpha pour chaque caméra.

    Le nuage de t est déplacé de alpha·(X_{t+1} − μ) et rendu depuis la caméra
    interpolée entre t et t+1 (translation linéaire, mélange normalisé des
    quaternions).

    Returns:
        list[Tensor]: une image (3,H,W) par caméra
    """
    result = result or infer(sample, weights, use_residual=use_residual)
    with no_grad():
        moved = displace_means(result.cloud_t, [f.total_fwd for f in result.flows], result.depth_t1,
                               sample.cameras_t1, alpha=alpha)
        images = []
        for cam_t, cam_t1 in zip(sample.cameras_t, sample.cameras_t1):
            cam = interpolate_camera(cam_t, cam_t1, alpha)
            images.append(render(moved, cam, render_config(weights, cam)))
    return images


def export_inference(result, sample, weights, directory, midframes=None):
    """
    Écrit les sorties d'inférence: profondeurs PFM, flots .flo, nuages PLY,
    rendus PPM et PNG 16 bits.

    Returns:
        list[str]: fichiers écrits
    """
    os.makedirs(directory, exist_ok=True)
    written = []

    def target(name):
        path = os.path.join(directory, name)
        written.append(path)
        return path

    with no_grad():
        for c in range(result.num_cameras):
            write_pfm(result.depth_t[c], target(f"depth_t_c{c}.pfm"))
            write_pfm(result.depth_t1[c], target(f"depth_t1_c{c}.pfm"))
            for kind in FLOW_KINDS:
                for direction in DIRECTIONS:
                    write_flo(result.flow(kind, direction, c), target(f"flow_{kind}_{direction}_c{c}.flo"))
            cam = sample.cameras_t[c]
            image = render(result.cloud_t, cam, render_config(weights, cam))
            write_ppm(image, target(f"render_t_c{c}.ppm"))
            write_png16(image, target(f"render_t_c{c}.png"))
        for c, image in enumerate(midframes or []):
            write_ppm(image, target(f"render_mid_c{c}.ppm"))
            write_png16(image, target(f"render_mid_c{c}.png"))
    save_ply(result.cloud_t, target("cloud_t.ply"))
    save_ply(result.cloud_t1, target("cloud_t1.ply"))
    print(f"Inference: {len(written)} fichiers écrits dans {directory}")
    return written
