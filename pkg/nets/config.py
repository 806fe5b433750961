from dataclasses import asdict, dataclass, fields

from tensor.errors import ContractError, ShapeError


@dataclass
class ArchitectureConfig:
    """
    Dimensions des réseaux D, P et R.

    Les largeurs de canaux et le nombre de niveaux sont des choix d'échelle
    réduite; seule la structure (encodeur partagé, décodeurs par caméra,
    raffinement pyramidal) est fixée.
    """

    base_channels: int = 16
    pyramid_levels: int = 3
    num_cameras: int = 4
    sh_degree: int = 1
    d_min: float = 0.5
    d_max: float = 40.0
    height: int = 64
    width: int = 96

    def __post_init__(self):
        if self.pyramid_levels < 2:
            raise ContractError(f"pyramid_levels doit valoir au moins 2, reçu {self.pyramid_levels}")
        if not 0.0 < self.d_min < self.d_max:
            raise ContractError(f"Il faut 0 < d_min < d_max, reçu {self.d_min}, {self.d_max}")
        if self.num_cameras < 1 or self.base_channels < 1:
            raise ContractError("num_cameras et base_channels doivent être positifs")
        if self.sh_degree not in (0, 1):
            raise ContractError(f"Degré d'harmoniques non supporté: {self.sh_degree}")
        check_resolution(self.height, self.width, self.pyramid_levels)

    @property
    def param_channels(self):
        return 8 + 3 * (self.sh_degree + 1) ** 2

    def channels(self, level):
        """Largeur des cartes de caractéristiques au niveau `level` (0 = pleine résolution)."""
        return self.base_channels * min(2 ** level, 4)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"Clés inconnues dans la configuration d'architecture: {sorted(unknown)}")
        return cls(**values)


def check_resolution(height, width, levels):
    factor = 2 ** levels
    if height % factor or width % factor:
        raise ShapeError(f"Résolution {height}x{width} non divisible par 2^{levels} = {factor}")
