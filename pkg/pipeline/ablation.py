"""
Comparaison des variantes d'entraînement sur l'image intermédiaire

    full          étape 1 puis étape 2 complète
    no_residual   étape 1 seule, flot résiduel désactivé à l'inférence
    single_stage  D, P et R entraînés ensemble sur toutes les pertes
    no_warp_loss  étape 2 avec λ_warp = 0

Les variantes partagent la même graine et les mêmes poids d'étape 1.
"""

import os

import pandas as pd

from pipeline.evaluation import evaluate
from pipeline.trainer import train_single_stage, train_stage1, train_stage2

VARIANTS = ("full", "no_residual", "single_stage", "no_warp_loss")


def run_ablations(train_set, val_set, config, variants=VARIANTS, output_dir=None):
    """
    Entraîne et évalue chaque variante.

    Args:
        train_set (list[SceneSample]): échantillons d'entraînement
        val_set (list[SceneSample]): échantillons de validation
        config (TrainConfig): paramètres communs (le champ stage est ignoré)
        variants (tuple): sous-ensemble de VARIANTS
        output_dir (str, optional): dossier recevant ablation.csv et les métriques JSONL

    Returns:
        DataFrame: une ligne par variante avec les métriques agrégées
    """
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"Variantes inconnues: {sorted(unknown)}")

    def metrics_file(name):
        return os.path.join(output_dir, f"metrics_{name}.jsonl") if output_dir else None

    rows = []
    stage1 = None
    if set(variants) & {"full", "no_residual", "no_warp_loss"}:
        stage1 = train_stage1(train_set, config.replace(stage=1)).weights

    for name in variants:
        print(f"Ablation: variante {name}")
        use_residual = True
        if name == "full":
            weights = train_stage2(train_set, stage1.copy(), config.replace(stage=2)).weights
        elif name == "no_residual":
            weights, use_residual = stage1, False
        elif name == "no_warp_loss":
            silenced = config.replace(stage=2, loss_weights=config.loss_weights.replace(warp=0.0).to_dict())
            weights = train_stage2(train_set, stage1.copy(), silenced).weights
        else:
            weights = train_single_stage(train_set, config.replace(stage=1)).weights
        summary, _ = evaluate(val_set, weights, use_residual=use_residual, output=metrics_file(name), label=name)
        rows.append({"variant": name, **summary})

    table = pd.DataFrame(rows)
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        table.to_csv(os.path.join(output_dir, "ablation.csv"), index=False)
    return table
