"""
Module de traitement des journaux d'entraînement et d'évaluation

Ce module relit les CSV écrits par TrainingRecorder, le journal des
statistiques de rendu et les métriques JSON Lines de l'évaluation, et en
tire les séries utilisées par les figures et les rapports.
"""

import os

import numpy as np
import pandas as pd

LOSS_COLUMNS = ['loc', 'smooth', 'warp', 'consist', 'render', 'total']


class DataProcessor:
    """
    Accès aux journaux d'un dossier d'exécutions.
    """

    def __init__(self, data_dir=None):
        """
        Args:
            data_dir (str, optional): dossier des journaux, "data/runs" par défaut
        """
        self.data_dir = data_dir or os.path.join("data", "runs")

    def get_run_files(self):
        """
        Liste les CSV d'exécution (run_*.csv) du dossier, triés par nom.
        """
        files = []
        if os.path.exists(self.data_dir):
            for file in sorted(os.listdir(self.data_dir)):
                if file.startswith("run_") and file.endswith(".csv"):
                    files.append(os.path.join(self.data_dir, file))
        return files

    def _read_csv(self, filename):
        if not os.path.exists(filename):
            return pd.DataFrame()
        try:
            if os.path.getsize(filename) == 0:
                return pd.DataFrame()
            return pd.read_csv(filename)
        except Exception as e:
            print(f"Erreur lors du chargement de {filename}: {e}")
            return pd.DataFrame()

    def load_run_history(self):
        """
        Historique global des exécutions (runs_history.csv).

        Returns:
            DataFrame: une ligne par exécution, vide en cas d'erreur
        """
        return self._read_csv(os.path.join(self.data_dir, "runs_history.csv"))

    def load_steps(self, run_id=None):
        """
        Pas enregistrés de toutes les exécutions ou d'une seule.

        Args:
            run_id (str, optional): identifiant d'exécution; toutes sinon

        Returns:
            DataFrame: une ligne par pas, pertes en float
        """
        frames = []
        for file in self.get_run_files():
            if run_id and f"run_{run_id}.csv" != os.path.basename(file):
                continue
            frame = self._read_csv(file)
            if not frame.empty:
                frames.append(frame)
        if not frames:
            return pd.DataFrame()
        steps = pd.concat(frames, ignore_index=True)
        for column in LOSS_COLUMNS:
            if column in steps.columns:
                steps[column] = pd.to_numeric(steps[column], errors='coerce')
        return steps

    def epoch_losses(self, run_id=None):
        """
        Moyenne des pertes par époque.

        Returns:
            DataFrame: index (run_id, epoch), une colonne par composante présente
        """
        steps = self.load_steps(run_id)
        if steps.empty:
            return pd.DataFrame()
        columns = [c for c in LOSS_COLUMNS if c in steps.columns and steps[c].notna().any()]
        return steps.groupby(['run_id', 'epoch'])[columns].mean()

    def loss_reduction(self, run_id, column='total'):
        """
        Rapport perte moyenne de la dernière époque / perte moyenne de la première.

        Returns:
            float: rapport, NaN si l'exécution est introuvable
        """
        epochs = self.epoch_losses(run_id)
        if epochs.empty or column not in epochs.columns:
            return float('nan')
        series = epochs[column].droplevel(0)
        first = series.iloc[0]
        return float(series.iloc[-1] / first) if first != 0 else float('nan')

    def load_render_stats(self):
        return self._read_csv(os.path.join(self.data_dir, "render_stats.csv"))

    def get_render_summary(self):
        """
        Résumé des statistiques de rendu: primitives singulières ignorées et
        nombre moyen de mélanges par pixel.
        """
        stats = self.load_render_stats()
        if stats.empty:
            return {'renders': 0, 'skipped_singular': 0, 'mean_blended': 0.0}
        return {
            'renders': len(stats),
            'skipped_singular': int(stats['skipped_singular'].sum()),
            'mean_blended': float(stats['mean_blended'].mean()),
        }

    @staticmethod
    def load_metrics(filename):
        """
        Relit un fichier de métriques JSON Lines.

        Returns:
            DataFrame: une ligne par caméra évaluée, vide en cas d'erreur
        """
        if not os.path.exists(filename):
            print(f"Fichier de métriques introuvable: {filename}")
            return pd.DataFrame()
        try:
            return pd.read_json(filename, orient='records', lines=True)
        except Exception as e:
            print(f"Erreur lors du chargement des métriques: {e}")
            return pd.DataFrame()

    @staticmethod
    def residual_localization(metrics):
        """
        Rapport flot résiduel moyen sur pixels statiques / pixels dynamiques.

        Returns:
            float: rapport, NaN sans pixel dynamique
        """
        if metrics.empty or 'residual_dynamic' not in metrics.columns:
            return float('nan')
        dynamic = metrics['residual_dynamic'].to_numpy(dtype=np.float64)
        static = metrics['residual_static'].to_numpy(dtype=np.float64)
        dynamic_mean = dynamic[dynamic > 0].mean() if np.any(dynamic > 0) else 0.0
        if dynamic_mean == 0.0:
            return float('nan')
        return float(static.mean() / dynamic_mean)
