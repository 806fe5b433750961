"""
Module d'enregistrement des exécutions d'entraînement

Ce module enregistre chaque pas d'optimisation (pertes détaillées par
composante) dans un fichier CSV par exécution, ajoute les statistiques de
rendu au journal render_stats.csv et écrit un résumé de l'exécution dans
l'historique global runs_history.csv.
"""

import csv
import os
from datetime import datetime

from splatter.rasterizer import append_render_stats

STEP_COLUMNS = [
    'run_id',       # Identifiant de l'exécution
    'stage',        # Étape d'entraînement (1, 2 ou single)
    'epoch',        # Époque, à partir de 1
    'step',         # Numéro de pas global
    'sample',       # Nom de l'échantillon traité
    'loc',          # Perte de localisation (étape 1)
    'smooth',       # Régularisation de la disparité (étape 1)
    'warp',         # Perte de déformation (étape 2)
    'consist',      # Cohérence avant/arrière (étape 2)
    'render',       # Perte de rendu
    'total',        # Somme pondérée
    'timestamp'     # Horodatage du pas
]

HISTORY_COLUMNS = ['run_id', 'stage', 'start_time', 'end_time', 'total_steps', 'final_loss', 'duration_s']


class TrainingRecorder:
    """
    Enregistreur des pas d'une exécution d'entraînement.

    Les pas sont gardés en mémoire puis écrits par paquets dans le CSV de
    l'exécution; `end_run` vide le tampon et ajoute la ligne de résumé.
    """

    def __init__(self, run_dir=None, run_id=None, stage=1, auto_save=True, save_interval=10):
        """
        Args:
            run_dir (str, optional): dossier des journaux, "data/runs" par défaut
            run_id (str, optional): identifiant de l'exécution, dérivé de l'étape et de la date sinon
            stage: étape d'entraînement inscrite sur chaque ligne
            auto_save (bool): écrire automatiquement toutes les `save_interval` lignes
            save_interval (int): taille des paquets d'écriture
        """
        self.start = datetime.now()
        self.start_time = self.start.strftime("%Y-%m-%d_%H-%M-%S")
        self.stage = stage
        self.run_id = run_id or f"stage{stage}_{self.start_time}"
        self.steps = []
        self.step_count = 0
        self.last_total = None
        self.auto_save = auto_save
        self.save_interval = save_interval

        self.data_dir = run_dir or os.path.join("data", "runs")
        os.makedirs(self.data_dir, exist_ok=True)
        self.filename = os.path.join(self.data_dir, f"run_{self.run_id}.csv")
        self.render_log = os.path.join(self.data_dir, "render_stats.csv")

        self._create_file()
        print(f"TrainingRecorder initialized. Recording to: {self.filename}")

    def _create_file(self):
        with open(self.filename, 'w', newline='') as file:
            csv.writer(file).writerow(STEP_COLUMNS)

    def record_step(self, record):
        """
        Enregistre un pas: `record` contient epoch, step, sample et les pertes.

        Returns:
            dict: la ligne enregistrée
        """
        self.step_count += 1
        row = {column: '' for column in STEP_COLUMNS}
        row.update({key: value for key, value in record.items() if key in row})
        row['run_id'] = self.run_id
        row['stage'] = self.stage
        row['timestamp'] = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        self.steps.append(row)
        if record.get('total') is not None:
            self.last_total = record['total']

        if self.auto_save and self.step_count % self.save_interval == 0:
            self.save_steps()
        return row

    def record_render(self, stats, **context):
        """Ajoute les statistiques d'un rendu au journal render_stats.csv."""
        try:
            append_render_stats(stats, self.render_log, run_id=self.run_id, **context)
        except Exception as e:
            print(f"Error saving render stats: {e}")

    def save_steps(self):
        if not self.steps:
            return

        try:
            with open(self.filename, 'a', newline='') as file:
                writer = csv.DictWriter(file, fieldnames=STEP_COLUMNS)
                writer.writerows(self.steps)
            self.steps = []
        except Exception as e:
            print(f"Error saving steps: {e}")

    def end_run(self, final_loss=None):
        """
        Finalise l'exécution et l'ajoute à l'historique global.

        Returns:
            str: chemin du CSV de l'exécution, ou None en cas d'erreur
        """
        self.save_steps()
        final_loss = self.last_total if final_loss is None else final_loss
        end = datetime.now()
        results_file = os.path.join(self.data_dir, "runs_history.csv")
        file_exists = os.path.isfile(results_file)

        try:
            with open(results_file, 'a', newline='') as file:
                writer = csv.writer(file)
                if not file_exists:
                    writer.writerow(HISTORY_COLUMNS)
                writer.writerow([
                    self.run_id,
                    self.stage,
                    self.start_time,
                    end.strftime("%Y-%m-%d %H:%M:%S"),
                    self.step_count,
                    final_loss,
                    round((end - self.start).total_seconds(), 3),
                ])
            print(f"Run {self.run_id} ended after {self.step_count} steps. Final loss: {final_loss}")
            return self.filename
        except Exception as e:
            print(f"Error saving run result: {e}")
            return None

    @staticmethod
    def load_run(filename):
        """
        Relit le CSV d'une exécution.

        Returns:
            list: un dictionnaire par pas, pertes converties en float (None si absentes)
        """
        steps = []
        try:
            with open(filename, 'r', newline='') as file:
                for row in csv.DictReader(file):
                    step = dict(row)
                    step['epoch'] = int(row['epoch'])
                    step['step'] = int(row['step'])
                    for key in ('loc', 'smooth', 'warp', 'consist', 'render', 'total'):
                        step[key] = float(row[key]) if row[key] != '' else None
                    steps.append(step)
            return steps
        except Exception as e:
            print(f"Error loading run: {e}")
            return []
