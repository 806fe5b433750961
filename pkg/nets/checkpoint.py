"""
Archives de points de contrôle

Une archive zip contient une entrée "<chemin>.tnsr" par paramètre (format
binaire du module tensor) et un manifeste JSON lisible: configuration
d'architecture, empreinte de configuration, étape, époque, graine. Les
entrées portent une date fixe, deux sauvegardes des mêmes poids sont donc
identiques octet pour octet.
"""

import json
import zipfile

from nets.config import ArchitectureConfig
from nets.weights import NetworkWeights
from tensor.serialization import tensor_from_bytes, tensor_to_bytes
from utils.helpers import config_hash

MANIFEST = "manifest.json"
SUFFIX = ".tnsr"
ENTRY_DATE = (1980, 1, 1, 0, 0, 0)


def _write_entry(archive, name, payload):
    info = zipfile.ZipInfo(name, date_time=ENTRY_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    archive.writestr(info, payload)


def save_checkpoint(weights, filename, stage=None, epoch=None, seed=None, extra=None):
    """Écrit tous les paramètres de `weights` et leur manifeste dans une archive zip."""
    manifest = {
        "architecture": weights.config.to_dict(),
        "config_hash": config_hash(weights.config.to_dict()),
        "stage": weights.stage if stage is None else stage,
        "epoch": epoch,
        "seed": seed,
        "parameters": weights.names(),
        "trainable": [name for name, _ in weights.trainable()],
    }
    if extra:
        manifest.update(extra)
    with zipfile.ZipFile(filename, "w") as archive:
        _write_entry(archive, MANIFEST, json.dumps(manifest, indent=4))
        for name, tensor in weights.items():
            _write_entry(archive, name + SUFFIX, tensor_to_bytes(tensor))
    print(f"Checkpoint: {len(weights)} paramètres écrits dans {filename}")
    return manifest


def load_checkpoint(filename):
    """
    Relit une archive écrite par `save_checkpoint`.

    Returns:
        tuple: (NetworkWeights, manifeste)
    """
    with zipfile.ZipFile(filename, "r") as archive:
        manifest = json.loads(archive.read(MANIFEST).decode("utf-8"))
        config = ArchitectureConfig.from_dict(manifest["architecture"])
        trainable = set(manifest.get("trainable", []))
        weights = NetworkWeights(config, stage=manifest.get("stage"))
        for name in manifest["parameters"]:
            tensor = tensor_from_bytes(archive.read(name + SUFFIX), requires_grad=name in trainable)
            tensor.name = name
            weights.add(name, tensor)
    if config_hash(config.to_dict()) != manifest.get("config_hash"):
        raise ValueError(f"Empreinte de configuration incohérente dans {filename}")
    return weights, manifest
