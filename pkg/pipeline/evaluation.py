import os

import numpy as np
import pandas as pd

from losses.geometric import consistency_loss
from losses.metrics import depth_metrics
from losses.photometric import psnr, ssim
from pipeline.inference import infer, render_midframe
from tensor.tensor import as_tensor, no_grad

METRIC_COLUMNS = ["psnr", "ssim", "abs_rel", "sq_rel", "rmse", "mean_consistency_gap"]


def camera_metrics(pred_image, gt_image, pred_depth, gt_depth, consistency_gap=0.0, depth_mask=None):
    """
    Métriques d'une caméra: PSNR et SSIM de l'image, erreurs de profondeur
    et écart de cohérence des flots.
    """
    pred_image, gt_image = as_tensor(pred_image), as_tensor(gt_image)
    with no_grad():
        record = {"psnr": psnr(pred_image, gt_image), "ssim": ssim(pred_image, gt_image).item()}
    record.update(depth_metrics(pred_depth, gt_depth, depth_mask))
    record["mean_consistency_gap"] = float(consistency_gap)
    return record


def aggregate(records):
    """Moyenne de chaque métrique sur les enregistrements (un PSNR infini reste infini)."""
    frame = pd.DataFrame(records)
    if frame.empty:
        return {column: float("nan") for column in METRIC_COLUMNS}
    return {column: float(np.mean(frame[column].to_numpy(dtype=np.float64))) for column in METRIC_COLUMNS}


def evaluate_sample(sample, weights, use_residual=True):
    result = infer(sample, weights, use_residual=use_residual)
    midframes = render_midframe(sample, weights, result=result)
    records = []
    for c in range(sample.num_cameras):
        flows = result.flows[c]
        with no_grad():
            gap = consistency_loss(flows.total_fwd, flows.total_bwd).item()
        record = {"sample": sample.name, "camera": c}
        record.update(camera_metrics(midframes[c], sample.images_mid[c], result.depth_t[c],
                                     sample.depth_t[c], gap))
        static = ~sample.dynamic_t[c]
        magnitude = result.residual_magnitude(c)
        record["residual_static"] = float(magnitude[static].mean()) if static.any() else 0.0
        record["residual_dynamic"] = float(magnitude[~static].mean()) if (~static).any() else 0.0
        records.append(record)
    return records


def evaluate(dataset, weights, use_residual=True, output=None, label=None):
    """
    Évalue un jeu de validation.

    Args:
        dataset (list[SceneSample]): échantillons tenus à l'écart de l'entraînement
        weights (NetworkWeights): poids complets
        use_residual (bool): faux pour le modèle statique
        output (str, optional): fichier JSON Lines des métriques par caméra
        label (str, optional): nom de la variante, recopié dans chaque ligne

    Returns:
        tuple: (métriques agrégées, DataFrame des métriques par caméra)
    """
    records = []
    for sample in dataset:
        records.extend(evaluate_sample(sample, weights, use_residual))
    frame = pd.DataFrame(records)
    if label is not None:
        frame.insert(0, "variant", label)
    summary = aggregate(records)
    if output:
        directory = os.path.dirname(output)
        if directory:
            os.makedirs(directory, exist_ok=True)
        frame.to_json(output, orient="records", lines=True)
        print(f"Evaluation: {len(frame)} lignes écrites dans {output}")
    return summary, frame
