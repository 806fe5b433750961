"""
Module du modèle de caméra sténopé

Ce module définit la caméra sténopé (intrinsèques + pose caméra→monde),
les conversions quaternion/rotation, l'interpolation de pose utilisée pour
la synthèse de l'image intermédiaire, et la lecture/écriture des fichiers
de configuration du banc de caméras.
"""

import numpy as np

from tensor.errors import ContractError

ROTATION_TOLERANCE = 1e-9


def quaternion_to_rotation(q):
    """Matrice de rotation d'un quaternion (w, x, y, z), normalisé au préalable."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quaternion(rotation):
    """Quaternion unitaire (w, x, y, z) d'une matrice de rotation, avec w >= 0."""
    m = np.asarray(rotation, dtype=np.float64)
    trace = np.trace(m)
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def check_rigid(transform, tolerance=ROTATION_TOLERANCE):
    """Vérifie qu'une matrice 4x4 est une transformation rigide (rotation propre + translation)."""
    transform = np.asarray(transform, dtype=np.float64)
    if transform.shape != (4, 4):
        raise ContractError(f"Transformation 4x4 attendue, reçu {transform.shape}")
    rotation = transform[:3, :3]
    if np.max(np.abs(rotation @ rotation.T - np.eye(3))) > tolerance:
        raise ContractError("Bloc de rotation non orthonormé")
    if abs(np.linalg.det(rotation) - 1.0) > tolerance:
        raise ContractError("Le déterminant de la rotation doit valoir +1")
    if np.max(np.abs(transform[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > tolerance:
        raise ContractError("Dernière ligne de la transformation invalide")
    return transform


def make_pose(rotation, translation):
    pose = np.eye(4)
    pose[:3, :3] = rotation
    pose[:3, 3] = translation
    return pose


class PinholeCamera:
    """
    Caméra sténopé: intrinsèques en pixels et pose caméra→monde en mètres.

    Le repère caméra suit la convention x à droite, y vers le bas, z vers l'avant.
    """

    def __init__(self, fx, fy, cx, cy, width, height, cam_to_world=None):
        if fx <= 0 or fy <= 0:
            raise ContractError(f"Focales strictement positives attendues, reçu fx={fx}, fy={fy}")
        self.fx, self.fy = float(fx), float(fy)
        self.cx, self.cy = float(cx), float(cy)
        self.width, self.height = int(width), int(height)
        pose = np.eye(4) if cam_to_world is None else np.array(cam_to_world, dtype=np.float64)
        self.cam_to_world = check_rigid(pose)

    def __repr__(self):
        return (f"PinholeCamera(fx={self.fx}, fy={self.fy}, cx={self.cx}, cy={self.cy}, "
                f"size={self.width}x{self.height})")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def rotation(self):
        return self.cam_to_world[:3, :3]

    @property
    def translation(self):
        return self.cam_to_world[:3, 3]

    @property
    def center(self):
        return self.translation

    @property
    def world_to_cam(self):
        inverse = np.eye(4)
        inverse[:3, :3] = self.rotation.T
        inverse[:3, 3] = -self.rotation.T @ self.translation
        return inverse

    def same_intrinsics(self, other):
        return (self.fx, self.fy, self.cx, self.cy, self.width, self.height) == \
               (other.fx, other.fy, other.cx, other.cy, other.width, other.height)

    def same_pose(self, other):
        return np.array_equal(self.cam_to_world, other.cam_to_world)

    def with_pose(self, cam_to_world):
        return PinholeCamera(self.fx, self.fy, self.cx, self.cy, self.width, self.height, cam_to_world)

    def scaled(self, factor):
        """Caméra équivalente pour une image redimensionnée d'un facteur `factor`."""
        return PinholeCamera(
            self.fx * factor, self.fy * factor,
            (self.cx + 0.5) * factor - 0.5, (self.cy + 0.5) * factor - 0.5,
            int(round(self.width * factor)), int(round(self.height * factor)),
            self.cam_to_world,
        )

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "cam_to_world": self.cam_to_world.tolist(),
        }

    @classmethod
    def from_dict(cls, values):
        return cls(values["fx"], values["fy"], values["cx"], values["cy"],
                   values["width"], values["height"], values.get("cam_to_world"))


def nlerp(q0, q1, alpha):
    """Mélange linéaire normalisé de deux quaternions (chemin le plus court)."""
    q0 = np.asarray(q0, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    if np.dot(q0, q1) < 0:
        q1 = -q1
    q = (1.0 - alpha) * q0 + alpha * q1
    return q / np.linalg.norm(q)


def interpolate_camera(cam_a, cam_b, alpha):
    """
    Interpole la pose entre deux caméras de mêmes intrinsèques.

    La translation est interpolée linéairement et la rotation par mélange
    normalisé des quaternions. Des poses identiques donnent exactement `cam_a`.

    Args:
        cam_a (PinholeCamera): caméra à l'instant t
        cam_b (PinholeCamera): caméra à l'instant t+1
        alpha (float): fraction temporelle dans [0, 1]

    Returns:
        PinholeCamera: caméra à l'instant t + alpha
    """
    if not cam_a.same_intrinsics(cam_b):
        raise ContractError("Interpolation entre caméras d'intrinsèques différentes")
    if cam_a.same_pose(cam_b) or alpha == 0.0:
        return cam_a.with_pose(cam_a.cam_to_world)
    if alpha == 1.0:
        return cam_a.with_pose(cam_b.cam_to_world)
    q = nlerp(rotation_to_quaternion(cam_a.rotation), rotation_to_quaternion(cam_b.rotation), alpha)
    t = (1.0 - alpha) * cam_a.translation + alpha * cam_b.translation
    return cam_a.with_pose(make_pose(quaternion_to_rotation(q), t))


def write_rig(cameras, filename):
    """Écrit un banc de caméras dans un fichier texte clé-valeur."""
    with open(filename, "w") as f:
        for index, cam in enumerate(cameras):
            f.write(f"camera {index}\n")
            for key in ("fx", "fy", "cx", "cy"):
                f.write(f"{key} {getattr(cam, key)!r}\n")
            f.write(f"width {cam.width}\n")
            f.write(f"height {cam.height}\n")
            f.write("cam_to_world " + " ".join(repr(float(v)) for v in cam.cam_to_world.ravel()) + "\n")
            f.write("\n")


def read_rig(filename):
    """Lit un banc de caméras écrit par `write_rig`."""
    cameras = []
    current = None
    with open(filename, "r") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, *values = line.split()
            if key == "camera":
                if current is not None:
                    cameras.append(_camera_from_fields(current))
                current = {}
                continue
            if current is None:
                raise ValueError(f"Ligne {line_number}: clé '{key}' hors d'un bloc camera")
            current[key] = values
    if current is not None:
        cameras.append(_camera_from_fields(current))
    return cameras


def _camera_from_fields(fields):
    try:
        pose = np.array([float(v) for v in fields["cam_to_world"]]).reshape(4, 4)
        return PinholeCamera(
            float(fields["fx"][0]), float(fields["fy"][0]),
            float(fields["cx"][0]), float(fields["cy"][0]),
            int(fields["width"][0]), int(fields["height"][0]), pose,
        )
    except KeyError as e:
        raise ValueError(f"Champ manquant dans le fichier de banc: {e}")
