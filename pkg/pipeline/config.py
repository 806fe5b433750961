from dataclasses import asdict, dataclass, field, fields

import numpy as np

from losses.weights import LossWeights
from nets.config import ArchitectureConfig
from pipeline.errors import GenerationError
from tensor.errors import ContractError
from utils.helpers import export_data_to_json, import_data_from_json


def _check_keys(cls, values, label):
    unknown = set(values) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"Clés inconnues dans {label}: {sorted(unknown)}")


@dataclass
class TrainConfig:
    """
    Paramètres d'une exécution d'entraînement.

    Attributs:
        stage (int): 1 (D et P) ou 2 (R, D et P gelés)
        epochs (int): nombre d'époques
        learning_rate (float): pas d'Adam
        batch_size (int): échantillons accumulés par pas d'optimisation
        seed (int): graine d'initialisation et de mélange des échantillons
        loss_weights (LossWeights): pondérations des pertes
        beta1, beta2, eps (float): moments d'Adam
        spatial_sources (bool): ajouter les caméras voisines comme sources de L_loc
        use_residual (bool): faux pour l'ablation sans flot résiduel
        mid_supervision (bool): ajouter à L_render le rendu alpha = 0.5 comparé à l'image intermédiaire de référence
        progress (bool): afficher les barres de progression tqdm
        architecture (ArchitectureConfig): dimensions des réseaux
    """

    stage: int = 1
    epochs: int = 6
    learning_rate: float = 1e-4
    batch_size: int = 1
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    spatial_sources: bool = False
    use_residual: bool = True
    mid_supervision: bool = False
    progress: bool = True
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights.from_dict(self.loss_weights)
        if isinstance(self.architecture, dict):
            self.architecture = ArchitectureConfig.from_dict(self.architecture)
        if self.stage not in (1, 2):
            raise ContractError(f"Étape 1 ou 2 attendue, reçu {self.stage}")
        if self.epochs <= 0 or self.learning_rate <= 0:
            raise ContractError(f"epochs et learning_rate doivent être positifs, reçu {self.epochs}, {self.learning_rate}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size doit valoir au moins 1, reçu {self.batch_size}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0):
            raise ContractError("Moments d'Adam invalides")

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return TrainConfig.from_dict(values)

    def to_dict(self):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["loss_weights"] = self.loss_weights.to_dict()
        values["architecture"] = self.architecture.to_dict()
        return values

    @classmethod
    def from_dict(cls, values):
        _check_keys(cls, values, "la configuration d'entraînement")
        return cls(**values)

    def save(self, filename):
        export_data_to_json(self.to_dict(), filename)

    @classmethod
    def load(cls, filename):
        values = import_data_from_json(filename)
        if values is None:
            raise ValueError(f"Configuration introuvable: {filename}")
        return cls.from_dict(values)


@dataclass
class SyntheticWorldConfig:
    """
    Monde synthétique: une pièce texturée, des boîtes statiques, des objets
    mobiles à vitesse constante et un banc de caméras en mouvement propre.

    Repère monde: x vers l'avant du véhicule, y à gauche, z vers le haut.
    Les vitesses sont en mètres par image. `objects` remplace le tirage
    aléatoire des objets lorsqu'il est fourni: liste de dictionnaires
    {"kind": "box"|"sphere", "center": [x,y,z], "size": [sx,sy,sz] ou
    "radius": r, "velocity": [vx,vy,vz]}.
    """

    num_cameras: int = 4
    height: int = 64
    width: int = 96
    fov_deg: float = 90.0
    camera_height: float = 1.5
    rig_radius: float = 0.1
    rig_start: tuple = (-2.0, 0.0)
    ego_velocity: tuple = (0.4, 0.0, 0.0)
    ego_yaw_rate: float = 0.0
    room_half_length: float = 12.0
    room_half_width: float = 8.0
    room_height: float = 4.0
    num_static_boxes: int = 3
    num_dynamic: int = 2
    object_speed: float = 0.3
    texture_cell: float = 0.5
    texture_seed: int = 0
    samples_per_scene: int = 2
    d_min: float = 0.5
    d_max: float = 40.0
    train_seeds: tuple = (0, 1, 2, 3, 4, 5, 6, 7)
    val_seeds: tuple = (8, 9, 10)
    objects: list = None

    def __post_init__(self):
        self.rig_start = tuple(float(v) for v in self.rig_start)
        self.ego_velocity = tuple(float(v) for v in self.ego_velocity)
        self.train_seeds = tuple(int(s) for s in self.train_seeds)
        self.val_seeds = tuple(int(s) for s in self.val_seeds)
        if len(self.rig_start) != 2 or len(self.ego_velocity) != 3:
            raise GenerationError("rig_start (x, y) et ego_velocity (vx, vy, vz) attendus")
        if self.num_cameras < 1 or self.height <= 0 or self.width <= 0:
            raise GenerationError(f"Banc invalide: {self.num_cameras} caméras, {self.height}x{self.width}")
        if not 0.0 < self.fov_deg < 170.0:
            raise GenerationError(f"Champ de vue invalide: {self.fov_deg}")
        if not 0.0 < self.camera_height < self.room_height:
            raise GenerationError("Les caméras doivent être entre le sol et le plafond")
        if self.samples_per_scene < 1 or self.texture_cell <= 0:
            raise GenerationError("samples_per_scene et texture_cell doivent être positifs")
        if not 0.0 < self.d_min < self.d_max:
            raise GenerationError(f"Il faut 0 < d_min < d_max, reçu {self.d_min}, {self.d_max}")
        diagonal = (4 * self.room_half_length ** 2 + 4 * self.room_half_width ** 2 + self.room_height ** 2) ** 0.5
        if diagonal >= self.d_max:
            raise GenerationError(f"La pièce ({diagonal:.1f} m) dépasse la portée des caméras ({self.d_max} m)")

    @property
    def focal(self):
        return 0.5 * self.width / float(np.tan(np.radians(self.fov_deg) / 2.0))

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return SyntheticWorldConfig.from_dict(values)

    def to_dict(self):
        values = asdict(self)
        for key in ("rig_start", "ego_velocity", "train_seeds", "val_seeds"):
            values[key] = list(values[key])
        return values

    @classmethod
    def from_dict(cls, values):
        _check_keys(cls, values, "la configuration du monde synthétique")
        return cls(**values)

    def save(self, filename):
        export_data_to_json(self.to_dict(), filename)

    @classmethod
    def load(cls, filename):
        values = import_data_from_json(filename)
        if values is None:
            raise ValueError(f"Configuration introuvable: {filename}")
        return cls.from_dict(values)
