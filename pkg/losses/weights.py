from dataclasses import asdict, dataclass, fields

from tensor.errors import ContractError
from tensor.tensor import Tensor


@dataclass
class LossWeights:
    """
    Pondérations des objectifs d'entraînement.

    Étape 1: loc, smooth, render1. Étape 2: warp, consist, render2.
    Termes internes: perceptual_render (λ_p dans L_render), ssim (λ_s dans
    L_warp), perceptual_warp (λ_wp dans L_warp).
    """

    loc: float = 0.1
    smooth: float = 0.001
    render1: float = 0.01
    warp: float = 0.02
    consist: float = 1e-5
    render2: float = 0.01
    perceptual_render: float = 0.05
    ssim: float = 0.1
    perceptual_warp: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ContractError(f"Pondération négative: {f.name}={getattr(self, f.name)}")

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return LossWeights(**values)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"Clés inconnues dans les pondérations: {sorted(unknown)}")
        return cls(**values)


class PerceptualHook:
    """
    Terme perceptuel optionnel: fonction scalaire différentiable de deux images.

    Sans fonction, le terme vaut exactement 0 et n'est pas ajouté aux pertes.
    """

    def __init__(self, fn=None):
        self.fn = fn

    @property
    def active(self):
        return self.fn is not None

    def __call__(self, a, b):
        if self.fn is None:
            return Tensor(0.0)
        return self.fn(a, b)


NO_PERCEPTUAL = PerceptualHook()
