import datetime
import hashlib
import json
import os
import subprocess

import numpy as np
import pandas as pd


def get_current_date_time():
    now = datetime.datetime.now()
    return now.strftime("%Y-%m-%d_%H-%M-%S")

def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Type non sérialisable en JSON: {type(value).__name__}")

def export_data_to_json(data, filename):
    with open(filename, 'w') as f:
        json.dump(data, f, indent=4, default=_json_default)

def import_data_from_json(filename):
    if os.path.exists(filename):
        with open(filename, 'r') as f:
            return json.load(f)
    return None

def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)

def config_hash(data):
    return hashlib.sha1(canonical_json(data).encode("utf-8")).hexdigest()

def git_describe():
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    if result.returncode != 0 or not result.stdout.strip():
        return "unknown"
    return result.stdout.strip()

def write_manifest(directory, command, config, seed, metrics=None, extra=None):
    manifest = {
        'command': command,
        'config': config,
        'seed': seed,
        'git_describe': git_describe(),
        'config_hash': config_hash(config),
        'created_at': get_current_date_time(),
        'metrics': metrics or {},
    }
    if extra:
        manifest.update(extra)
    os.makedirs(directory, exist_ok=True)
    export_data_to_json(manifest, os.path.join(directory, "manifest.json"))
    return manifest

def get_run_statistics(runs_dir=os.path.join("data", "runs")):
    stats = {
        'total_runs': 0,
        'stage1_runs': 0,
        'stage2_runs': 0,
        'best_final_loss': None,
        'avg_duration_s': 0.0
    }

    history_file = os.path.join(runs_dir, "runs_history.csv")

    if not os.path.exists(history_file):
        return stats

    try:
        history = pd.read_csv(history_file)

        stats['total_runs'] = len(history)

        stats['stage1_runs'] = len(history[history['stage'].astype(str) == '1'])
        stats['stage2_runs'] = len(history[history['stage'].astype(str) == '2'])

        stats['best_final_loss'] = float(history['final_loss'].min())
        stats['avg_duration_s'] = float(history['duration_s'].mean())

    except Exception as e:
        print(f"Erreur lors de la récupération des statistiques: {e}")

    return stats
