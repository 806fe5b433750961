"""
Export/import PLY binaire des nuages de gaussiennes

Les propriétés suivent la nomenclature des visualiseurs 3DGS courants:
x y z, rot_0..3, scale_0..2, opacity, f_dc_0..2 et f_rest_* pour le degré 1.

Deux conventions:
  - par défaut, valeurs activées en double précision (aller-retour exact);
  - `viewer=True`: float32, échelles en log et opacités en logit, comme les
    fichiers produits par l'entraînement 3DGS.
"""

import numpy as np
from plyfile import PlyData, PlyElement

from gaussians.cloud import GaussianCloud, sh_channels


def attribute_names(sh_degree):
    names = ["x", "y", "z"]
    names += [f"rot_{i}" for i in range(4)]
    names += [f"scale_{i}" for i in range(3)]
    names += ["opacity"]
    names += [f"f_dc_{i}" for i in range(3)]
    names += [f"f_rest_{i}" for i in range(sh_channels(sh_degree) - 3)]
    return names


def _sh_to_ply(sh, sh_degree):
    # Stockage interne base par base (k·3 + canal); f_rest est rangé canal par canal
    n = sh.shape[0]
    bases = (sh_degree + 1) ** 2
    per_basis = sh.reshape(n, bases, 3)
    f_dc = per_basis[:, 0, :]
    f_rest = per_basis[:, 1:, :].transpose(0, 2, 1).reshape(n, -1)
    return f_dc, f_rest


def _sh_from_ply(f_dc, f_rest, sh_degree):
    n = f_dc.shape[0]
    bases = (sh_degree + 1) ** 2
    rest = f_rest.reshape(n, 3, bases - 1).transpose(0, 2, 1)
    return np.concatenate([f_dc[:, None, :], rest], axis=1).reshape(n, -1)


def save_ply(cloud, filename, viewer=False):
    """Écrit `cloud` dans un PLY binaire petit-boutiste."""
    values = cloud.numpy()
    scales = values["scales"]
    opacities = values["opacities"]
    if viewer:
        scales = np.log(scales)
        opacities = np.log(opacities / (1.0 - opacities))
    f_dc, f_rest = _sh_to_ply(values["sh_coeffs"], cloud.sh_degree)
    attributes = np.concatenate(
        (values["means"], values["rotations"], scales, opacities, f_dc, f_rest), axis=1
    )
    dtype = "f4" if viewer else "f8"
    dtype_full = [(name, dtype) for name in attribute_names(cloud.sh_degree)]
    elements = np.empty(attributes.shape[0], dtype=dtype_full)
    for column, name in enumerate(attribute_names(cloud.sh_degree)):
        elements[name] = attributes[:, column]
    PlyData([PlyElement.describe(elements, "vertex")], byte_order="<").write(filename)


def load_ply(filename, viewer=False):
    """Relit un nuage écrit par `save_ply` (même convention `viewer`)."""
    plydata = PlyData.read(filename)
    vertex = plydata["vertex"]
    names = [p.name for p in vertex.properties]
    rest_names = sorted((n for n in names if n.startswith("f_rest_")), key=lambda n: int(n.split("_")[-1]))
    if len(rest_names) == 0:
        sh_degree = 0
    elif len(rest_names) == 9:
        sh_degree = 1
    else:
        raise ValueError(f"Nombre de coefficients f_rest non supporté: {len(rest_names)}")

    def column(*keys):
        return np.stack([np.asarray(vertex[k], dtype=np.float64) for k in keys], axis=1)

    means = column("x", "y", "z")
    rotations = column(*(f"rot_{i}" for i in range(4)))
    scales = column(*(f"scale_{i}" for i in range(3)))
    opacities = column("opacity")
    f_dc = column(*(f"f_dc_{i}" for i in range(3)))
    f_rest = column(*rest_names) if rest_names else np.zeros((len(means), 0))
    if viewer:
        scales = np.exp(scales)
        opacities = 1.0 / (1.0 + np.exp(-opacities))
    sh = _sh_from_ply(f_dc, f_rest, sh_degree)
    return GaussianCloud(means, rotations, scales, opacities, sh, sh_degree)
