from dataclasses import asdict, dataclass, fields

from tensor.errors import ContractError


@dataclass
class RenderConfig:
    """
    Paramètres du rendu par splatting.

    Attributs:
        width, height (int): taille de l'image en pixels
        background (tuple): couleur de fond RGB dans [0,1] (noir par défaut)
        near, far (float): plage de profondeur acceptée, en mètres
        sh_degree (int): degré des harmoniques sphériques (0 ou 1)
        alpha_cutoff (float): contribution minimale α·g d'une gaussienne
        transmittance_floor (float): seuil d'arrêt anticipé de la transmittance
        dilation (float): régularisation ajoutée à la covariance 2D, en px²
    """

    width: int
    height: int
    background: tuple = (0.0, 0.0, 0.0)
    near: float = 0.1
    far: float = 100.0
    sh_degree: int = 1
    alpha_cutoff: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    dilation: float = 0.3

    def __post_init__(self):
        self.background = tuple(float(v) for v in self.background)
        if len(self.background) != 3 or not all(0.0 <= v <= 1.0 for v in self.background):
            raise ContractError(f"Fond RGB dans [0,1] attendu, reçu {self.background}")
        if not 0.0 < self.near < self.far:
            raise ContractError(f"Il faut 0 < near < far, reçu near={self.near}, far={self.far}")
        if self.width <= 0 or self.height <= 0:
            raise ContractError(f"Taille d'image invalide: {self.width}x{self.height}")
        if self.sh_degree not in (0, 1):
            raise ContractError(f"Degré d'harmoniques non supporté: {self.sh_degree}")
        # Les seuils nuls désactivent coupure et arrêt anticipé (rendu de référence)
        for name in ("alpha_cutoff", "transmittance_floor"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ContractError(f"{name} doit être dans [0,1), reçu {value}")
        if self.dilation < 0:
            raise ContractError(f"Dilatation négative: {self.dilation}")

    @classmethod
    def for_camera(cls, cam, **overrides):
        return cls(width=cam.width, height=cam.height, **overrides)

    def exact(self):
        """Copie sans coupure ni arrêt anticipé."""
        values = self.to_dict()
        values.update(alpha_cutoff=0.0, transmittance_floor=0.0)
        return RenderConfig.from_dict(values)

    def to_dict(self):
        values = asdict(self)
        values["background"] = list(self.background)
        return values

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"Clés inconnues dans la configuration de rendu: {sorted(unknown)}")
        return cls(**values)
