"""
Module d'entraînement en deux étapes

Étape 1: seuls les réseaux de profondeur D et de paramètres gaussiens P sont
entraînés, sous l'hypothèse d'un monde statique (L_loc, L_smooth, L_render).
Étape 2: D et P sont gelés et seul le réseau de flot résiduel R est entraîné
(L_warp, L_consist, L_render sur le nuage déplacé). La variante en une étape
entraîne D, P et R ensemble sur toutes les pertes.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from tqdm import tqdm

from gaussians.construction import fuse, pixel_aligned_cloud, to_world
from gaussians.motion import displace_means
from geometry.camera import interpolate_camera
from geometry.flow import compose_flow, rigid_flow, warp_image
from losses.geometric import consistency_loss, reprojection_loss, smoothness_loss
from losses.objectives import render_loss, stage1_total, stage2_total, warp_loss
from losses.weights import NO_PERCEPTUAL
from nets.config import check_resolution
from nets.depth import depth_forward
from nets.gauss_param import gauss_param_forward
from nets.residual_flow import residual_flow_forward
from nets.weights import init_weights
from pipeline.errors import DivergenceError, FreezeViolation
from pipeline.optimizer import Adam
from splatter.config import RenderConfig
from splatter.rasterizer import render
from tensor.errors import ContractError, ShapeError
from tensor.tensor import Tensor, no_grad

FROZEN_PREFIXES = ("D.", "P.")


@dataclass
class StaticPrediction:
    """Sorties de D et P pour un échantillon: profondeurs, disparités et nuage fusionné à t."""

    depth_t: list
    disparity_t: list
    depth_t1: list
    cloud_t: object


@dataclass
class FlowPrediction:
    """Flots d'une caméra dans les deux sens temporels."""

    rigid_fwd: Tensor
    rigid_bwd: Tensor
    residual_fwd: Tensor
    residual_bwd: Tensor
    total_fwd: Tensor
    total_bwd: Tensor


@dataclass
class TrainingResult:
    weights: object
    history: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def history_frame(self):
        return pd.DataFrame(self.history)

    def epoch_means(self, column="total"):
        frame = self.history_frame()
        if frame.empty or column not in frame:
            return pd.Series(dtype=float)
        return frame.groupby("epoch")[column].mean()


def render_config(weights, cam):
    return RenderConfig.for_camera(cam, sh_degree=weights.config.sh_degree)


def check_sample(weights, sample):
    config = weights.config
    if (sample.height, sample.width) != (config.height, config.width):
        raise ShapeError(f"Résolution {sample.height}x{sample.width} différente de celle des poids "
                         f"{config.height}x{config.width}")
    if sample.num_cameras > config.num_cameras:
        raise ShapeError(f"{sample.num_cameras} caméras pour {config.num_cameras} décodeurs de flot")
    check_resolution(sample.height, sample.width, config.pyramid_levels)


def _average(values):
    total = values[0]
    for value in values[1:]:
        total = total + value
    return total * (1.0 / len(values))


def static_predictions(weights, sample, need_t1=True):
    """Profondeurs par caméra (t et t+1) et nuage fusionné de l'instant t, repère monde."""
    depth_t, disparity_t, depth_t1, clouds = [], [], [], []
    for c, cam in enumerate(sample.cameras_t):
        image = sample.image_t(c)
        depth, disparity = depth_forward(weights, image, return_disparity=True)
        params = gauss_param_forward(weights, image, depth)
        cloud = pixel_aligned_cloud(depth, params, cam, weights.config.sh_degree, camera_index=c)
        clouds.append(to_world(cloud, cam.cam_to_world))
        depth_t.append(depth)
        disparity_t.append(disparity)
        if need_t1:
            depth_t1.append(depth_forward(weights, sample.image_t1(c)))
    return StaticPrediction(depth_t, disparity_t, depth_t1, fuse(clouds))


def predict_flows(weights, sample, c, depth_t, depth_t1, use_residual=True):
    """
    Flots rigide, résiduel et total de la caméra `c`.

    Le flot avant est défini sur la grille de t (t → t+1) et le flot arrière
    sur celle de t+1 (t+1 → t). R reçoit la source déjà déformée par le flot
    rigide, la cible, le flot rigide et la source brute.
    """
    cam_t, cam_t1 = sample.cameras_t[c], sample.cameras_t1[c]
    image_t, image_t1 = sample.image_t(c), sample.image_t1(c)
    rigid_fwd = rigid_flow(depth_t, cam_t, cam_t1)
    rigid_bwd = rigid_flow(depth_t1, cam_t1, cam_t)
    if use_residual:
        residual_fwd, _ = residual_flow_forward(
            weights, warp_image(image_t1, rigid_fwd), image_t, rigid_fwd, c, source=image_t1)
        residual_bwd, _ = residual_flow_forward(
            weights, warp_image(image_t, rigid_bwd), image_t1, rigid_bwd, c, source=image_t)
    else:
        residual_fwd = Tensor(np.zeros(rigid_fwd.shape))
        residual_bwd = Tensor(np.zeros(rigid_bwd.shape))
    return FlowPrediction(rigid_fwd, rigid_bwd, residual_fwd, residual_bwd,
                          compose_flow(rigid_fwd, residual_fwd), compose_flow(rigid_bwd, residual_bwd))


def stage1_components(weights, sample, config, prediction=None, hook=NO_PERCEPTUAL, recorder=None):
    """
    Pertes de l'étape 1 moyennées sur les caméras.

    Returns:
        dict: "loc", "smooth", "render" (Tensors)
    """
    prediction = prediction or static_predictions(weights, sample, need_t1=False)
    cams_t, cams_t1 = sample.cameras_t, sample.cameras_t1
    n = sample.num_cameras
    loc, smooth, rendered = [], [], []
    for c in range(n):
        target = sample.image_t(c)
        sources = [(sample.image_t1(c), (cams_t[c], cams_t1[c]))]
        if config.spatial_sources and n > 1:
            for neighbour in sorted({(c - 1) % n, (c + 1) % n} - {c}):
                sources.append((sample.image_t(neighbour), (cams_t[c], cams_t[neighbour])))
        loc.append(reprojection_loss(target, sources, prediction.depth_t[c]))
        smooth.append(smoothness_loss(prediction.disparity_t[c], target))
        image, stats = render(prediction.cloud_t, cams_t[c], render_config(weights, cams_t[c]), return_stats=True)
        if recorder is not None:
            recorder.record_render(stats, sample=sample.name, camera=c, frame="t")
        rendered.append(render_loss(image, target, hook, config.loss_weights))
    return {"loc": _average(loc), "smooth": _average(smooth), "render": _average(rendered)}


def stage2_components(weights, sample, config, prediction=None, hook=NO_PERCEPTUAL, recorder=None,
                      use_residual=True, frozen=True):
    """
    Pertes de l'étape 2 moyennées sur les caméras.

    Avec `frozen`, D et P sont évalués sans graphe. L_warp est la moyenne des
    deux sens temporels; L_render compare le rendu du nuage déplacé (alpha = 1)
    depuis la caméra t+1 à l'image t+1. Avec `config.mid_supervision`, le rendu
    alpha = 0.5 comparé à l'image intermédiaire est moyenné dans L_render.

    Returns:
        tuple: (dict "warp", "consist", "render", liste des FlowPrediction)
    """
    if prediction is None:
        if frozen:
            with no_grad():
                prediction = static_predictions(weights, sample)
        else:
            prediction = static_predictions(weights, sample)
    n = sample.num_cameras
    flows, warp, consist = [], [], []
    for c in range(n):
        flow = predict_flows(weights, sample, c, prediction.depth_t[c], prediction.depth_t1[c], use_residual)
        image_t, image_t1 = sample.image_t(c), sample.image_t1(c)
        backward_term = warp_loss(image_t1, warp_image(image_t, flow.total_bwd), hook, config.loss_weights)
        forward_term = warp_loss(image_t, warp_image(image_t1, flow.total_fwd), hook, config.loss_weights)
        warp.append(0.5 * (backward_term + forward_term))
        consist.append(consistency_loss(flow.total_fwd, flow.total_bwd))
        flows.append(flow)

    displaced = displace_means(prediction.cloud_t, [f.total_fwd for f in flows], prediction.depth_t1,
                               sample.cameras_t1, alpha=1.0)
    rendered = []
    for c, cam in enumerate(sample.cameras_t1):
        image, stats = render(displaced, cam, render_config(weights, cam), return_stats=True)
        if recorder is not None:
            recorder.record_render(stats, sample=sample.name, camera=c, frame="t+1")
        rendered.append(render_loss(image, sample.image_t1(c), hook, config.loss_weights))
    if config.mid_supervision:
        halfway = displace_means(prediction.cloud_t, [f.total_fwd for f in flows], prediction.depth_t1,
                                 sample.cameras_t1, alpha=0.5)
        for c, (cam_t, cam_t1) in enumerate(zip(sample.cameras_t, sample.cameras_t1)):
            cam = interpolate_camera(cam_t, cam_t1, 0.5)
            image = render(halfway, cam, render_config(weights, cam))
            rendered[c] = 0.5 * (rendered[c] + render_loss(image, sample.image_mid(c), hook, config.loss_weights))
    components = {"warp": _average(warp), "consist": _average(consist), "render": _average(rendered)}
    return components, flows


def check_divergence(breakdown, step=None):
    for component, value in breakdown.items():
        if not np.isfinite(value):
            raise DivergenceError(component, value, step)


def check_freeze(weights):
    for name, tensor in weights.items():
        if name.startswith(FROZEN_PREFIXES) and tensor.grad is not None:
            raise FreezeViolation(f"Gradient apparu sur le paramètre gelé {name}")


def _optimize(weights, dataset, config, parameters, loss_fn, label, recorder=None, after_backward=None):
    """
    Boucle commune: ordre des échantillons tiré de la graine, accumulation
    sur `batch_size` échantillons, un pas d'Adam par lot.
    """
    if not dataset:
        raise ContractError("Jeu d'entraînement vide")
    for sample in dataset:
        check_sample(weights, sample)
    optimizer = Adam.from_config(parameters, config)
    optimizer.zero_grad()
    rng = np.random.default_rng(config.seed)
    history = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        bar = tqdm(order, desc=f"Stage {label} epoch {epoch}/{config.epochs}", disable=not config.progress)
        pending = 0
        for position, index in enumerate(bar, start=1):
            sample = dataset[index]
            total, breakdown = loss_fn(sample)
            check_divergence(breakdown, step)
            total.backward()
            if after_backward is not None:
                after_backward()
            pending += 1
            if pending == config.batch_size or position == len(order):
                optimizer.step(scale=1.0 / pending)
                optimizer.zero_grad()
                pending = 0
            record = {"stage": label, "epoch": epoch, "step": step, "sample": sample.name}
            record.update(breakdown)
            history.append(record)
            if recorder is not None:
                recorder.record_step(record)
            bar.set_postfix(loss=f"{breakdown['total']:.4f}")
            step += 1
    weights.check_finite()
    return history


def train_stage1(dataset, config, weights=None, recorder=None, hook=NO_PERCEPTUAL):
    """
    Entraîne D et P sous l'hypothèse d'un monde statique.

    Args:
        dataset (list[SceneSample]): échantillons d'entraînement
        config (TrainConfig): paramètres (stage = 1)
        weights (NetworkWeights, optional): poids de départ, initialisés depuis la graine sinon
        recorder (TrainingRecorder, optional): journal des pas
        hook (PerceptualHook): terme perceptuel optionnel

    Returns:
        TrainingResult: poids marqués étape 1 et historique des pertes
    """
    if config.stage != 1:
        raise ContractError(f"train_stage1 exige stage = 1, reçu {config.stage}")
    weights = weights or init_weights(config.architecture, config.seed)
    weights.set_trainable("D.", True)
    weights.set_trainable("P.", True)
    weights.set_trainable("R.", False)
    parameters = weights.items("D.") + weights.items("P.")
    start = time.time()

    def loss_fn(sample):
        return stage1_total(stage1_components(weights, sample, config, hook=hook, recorder=recorder),
                            config.loss_weights)

    history = _optimize(weights, dataset, config, parameters, loss_fn, 1, recorder)
    weights.stage = 1
    weights.set_trainable("R.", True)
    if recorder is not None:
        recorder.end_run()
    manifest = {"stage": 1, "epochs": config.epochs, "seed": config.seed, "steps": len(history),
                "duration_s": round(time.time() - start, 3)}
    print(f"Stage 1 terminé: {len(history)} pas, perte finale {history[-1]['total']:.5f}")
    return TrainingResult(weights, history, manifest)


def train_stage2(dataset, frozen, config, recorder=None, hook=NO_PERCEPTUAL):
    """
    Entraîne R seul, D et P étant gelés.

    Args:
        dataset (list[SceneSample]): échantillons d'entraînement
        frozen (NetworkWeights): poids issus de l'étape 1 (ou d'une étape 2 à reprendre)
        config (TrainConfig): paramètres (stage = 2)

    Returns:
        TrainingResult: poids marqués étape 2 (D et P inchangés) et historique

    Raises:
        FreezeViolation: gradient apparu sur D ou P, ou paramètre gelé modifié
    """
    if config.stage != 2:
        raise ContractError(f"train_stage2 exige stage = 2, reçu {config.stage}")
    if frozen.stage not in (1, 2):
        raise ContractError(f"train_stage2 exige des poids d'étape 1, reçu l'étape {frozen.stage}")
    if not config.use_residual:
        raise ContractError("train_stage2 sans flot résiduel n'a rien à entraîner")
    weights = frozen
    for prefix in FROZEN_PREFIXES:
        weights.set_trainable(prefix, False)
    weights.set_trainable("R.", True)
    before = {prefix: weights.snapshot(prefix) for prefix in FROZEN_PREFIXES}
    start = time.time()

    def loss_fn(sample):
        components, _ = stage2_components(weights, sample, config, hook=hook, recorder=recorder)
        return stage2_total(components, config.loss_weights)

    history = _optimize(weights, dataset, config, weights.items("R."), loss_fn, 2, recorder,
                        after_backward=lambda: check_freeze(weights))
    for prefix, values in before.items():
        for name, data in values.items():
            if not np.array_equal(weights[name].data, data):
                raise FreezeViolation(f"Paramètre gelé modifié pendant l'étape 2: {name}")
    weights.stage = 2
    if recorder is not None:
        recorder.end_run()
    manifest = {"stage": 2, "epochs": config.epochs, "seed": config.seed, "steps": len(history),
                "duration_s": round(time.time() - start, 3)}
    print(f"Stage 2 terminé: {len(history)} pas, perte finale {history[-1]['total']:.5f}")
    return TrainingResult(weights, history, manifest)


def single_stage_loss(weights, sample, config, hook=NO_PERCEPTUAL, recorder=None):
    """Somme des objectifs des deux étapes, D, P et R étant entraînés ensemble."""
    prediction = static_predictions(weights, sample)
    total1, breakdown1 = stage1_total(
        stage1_components(weights, sample, config, prediction, hook, recorder), config.loss_weights)
    components2, _ = stage2_components(weights, sample, config, prediction, hook, recorder, frozen=False)
    total2, breakdown2 = stage2_total(components2, config.loss_weights)
    breakdown = {
        "loc": breakdown1["loc"], "smooth": breakdown1["smooth"],
        "warp": breakdown2["warp"], "consist": breakdown2["consist"],
        "render": breakdown1["render"] + breakdown2["render"],
        "total": breakdown1["total"] + breakdown2["total"],
    }
    return total1 + total2, breakdown


def train_single_stage(dataset, config, weights=None, recorder=None, hook=NO_PERCEPTUAL):
    """
    Variante sans séparation statique/dynamique: toutes les pertes dès le départ,
    sur 2 × `config.epochs` époques pour un budget égal aux deux étapes.
    """
    weights = weights or init_weights(config.architecture, config.seed)
    for prefix in ("D.", "P.", "R."):
        weights.set_trainable(prefix, True)
    joint = config.replace(epochs=2 * config.epochs)
    start = time.time()
    history = _optimize(weights, dataset, joint, weights.trainable(),
                        lambda sample: single_stage_loss(weights, sample, joint, hook, recorder),
                        "single", recorder)
    weights.stage = "single"
    if recorder is not None:
        recorder.end_run()
    manifest = {"stage": "single", "epochs": joint.epochs, "seed": config.seed, "steps": len(history),
                "duration_s": round(time.time() - start, 3)}
    print(f"Entraînement en une étape terminé: {len(history)} pas")
    return TrainingResult(weights, history, manifest)
