import os

import pandas as pd

from pipeline.synthetic import load_dataset


def load_ablation_table(filename):
    if not os.path.exists(filename):
        print(f"Table d'ablation introuvable: {filename}")
        return pd.DataFrame()

    try:
        return pd.read_csv(filename)
    except Exception as e:
        print(f"Erreur lors du chargement de la table d'ablation: {e}")
        return pd.DataFrame()


class DataLoader:
    def __init__(self, data_dir=None):
        self.data_dir = data_dir or os.path.join("data", "synthetic")

    def split_dir(self, split):
        return os.path.join(self.data_dir, split)

    def has_split(self, split):
        return os.path.isdir(self.split_dir(split))

    def load_split(self, split):
        directory = self.split_dir(split) if self.has_split(split) else self.data_dir
        samples, world = load_dataset(directory)
        print(f"Jeu '{split}': {len(samples)} échantillons chargés depuis {directory}")
        return samples, world

    def load_train(self):
        return self.load_split("train")[0]

    def load_val(self):
        return self.load_split("val")[0]

    def sample_table(self, split="train"):
        try:
            samples, _ = self.load_split(split)
        except ValueError as e:
            print(f"Erreur lors du chargement de {split}: {e}")
            return pd.DataFrame()

        rows = []
        for sample in samples:
            rows.append({
                'name': sample.name,
                'scene_seed': sample.scene_seed,
                'cameras': sample.num_cameras,
                'dynamic_fraction': float(sample.dynamic_t.mean()),
                'mean_depth': float(sample.depth_t.mean()),
                'mean_flow': float(abs(sample.flow_fwd).mean()),
            })
        return pd.DataFrame(rows)
