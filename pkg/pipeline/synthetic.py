"""
Module du monde synthétique

Ce module génère des scènes multi-caméras avec une vérité terrain analytique.
Une pièce fermée texturée contient des boîtes statiques et des objets mobiles
(boîtes et sphères) à vitesse constante; le banc de caméras avance par
mouvement propre. Chaque pixel est rendu par lancer de rayon: la profondeur
est la distance le long de l'axe optique du premier point touché, et le flot
est obtenu en projetant ce point à sa position à l'instant suivant.

Les textures sont des bruits de valeurs 3D évalués dans le repère de la pièce
pour les surfaces statiques et dans le repère de l'objet pour les objets
mobiles: la couleur d'un point matériel ne change donc pas dans le temps.
"""

import glob
import os
from dataclasses import dataclass

import numpy as np

from gaussians.cloud import GaussianCloud
from gaussians.construction import fuse, maps_to_rows
from geometry.camera import PinholeCamera, make_pose, write_rig
from geometry.flow import rigid_flow
from geometry.projection import Z_EPS, camera_rays, in_image, pixel_grid, unproject
from pipeline.config import SyntheticWorldConfig
from pipeline.errors import GenerationError
from splatter.config import RenderConfig
from splatter.projection import SH_C0
from tensor.sampling import bilinear_sample
from tensor.tensor import Tensor

NOISE_LATTICE = 32
SELF_CHECK_TOLERANCE = 1e-6
OCCLUSION_TOLERANCE = 0.02
MAX_PLACEMENT_TRIES = 50


class ValueNoise:
    """Bruit de valeurs 3D à deux octaves, interpolation trilinéaire lissée."""

    def __init__(self, rng, cell):
        self.cell = cell
        self.lattices = [rng.uniform(0.0, 1.0, size=(NOISE_LATTICE,) * 3 + (3,)) for _ in range(2)]
        self.base = rng.uniform(0.25, 0.75, size=3)

    def _octave(self, lattice, points, cell):
        p = points / cell
        i0 = np.floor(p).astype(np.int64)
        f = p - i0
        s = f * f * (3.0 - 2.0 * f)
        out = np.zeros((points.shape[0], 3))
        for corner in range(8):
            offset = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
            idx = (i0 + offset) % NOISE_LATTICE
            weight = np.prod(np.where(offset == 1, s, 1.0 - s), axis=1)
            out += weight[:, None] * lattice[idx[:, 0], idx[:, 1], idx[:, 2]]
        return out

    def __call__(self, points):
        """Couleurs (N,3) dans [0,1] aux points (N,3)."""
        fine = self._octave(self.lattices[0], points, self.cell)
        coarse = self._octave(self.lattices[1], points, 3.0 * self.cell)
        return np.clip(self.base + 0.5 * (0.6 * fine + 0.4 * coarse - 0.5), 0.0, 1.0)


@dataclass
class SceneObject:
    kind: str
    center: np.ndarray
    velocity: np.ndarray
    size: np.ndarray = None
    radius: float = 0.0

    @property
    def dynamic(self):
        return bool(np.any(self.velocity != 0.0))

    def center_at(self, time):
        return self.center + time * self.velocity

    def contains(self, point, margin=0.0, time=0.0):
        local = np.asarray(point, dtype=np.float64) - self.center_at(time)
        if self.kind == "sphere":
            return bool(np.linalg.norm(local) < self.radius + margin)
        return bool(np.all(np.abs(local) < 0.5 * self.size + margin))

    def intersect(self, origin, directions, time):
        """Paramètre t (N,) du premier impact devant l'origine, +inf sinon."""
        center = self.center_at(time)
        if self.kind == "sphere":
            oc = origin - center
            a = np.einsum("nk,nk->n", directions, directions)
            b = directions @ oc
            c = oc @ oc - self.radius ** 2
            disc = b * b - a * c
            root = np.sqrt(np.maximum(disc, 0.0))
            t = (-b - root) / a
            return np.where((disc >= 0.0) & (t > 0.0), t, np.inf)
        low, high = center - 0.5 * self.size, center + 0.5 * self.size
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (low - origin) / directions
            t2 = (high - origin) / directions
        near, far = np.minimum(t1, t2), np.maximum(t1, t2)
        parallel = directions == 0.0
        inside = (origin >= low) & (origin <= high)
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        t_enter, t_exit = near.max(axis=1), far.min(axis=1)
        return np.where((t_enter <= t_exit) & (t_enter > 0.0), t_enter, np.inf)

    def to_dict(self):
        values = {"kind": self.kind, "center": self.center.tolist(), "velocity": self.velocity.tolist()}
        if self.kind == "sphere":
            values["radius"] = self.radius
        else:
            values["size"] = self.size.tolist()
        return values

    @classmethod
    def from_dict(cls, values):
        kind = values.get("kind", "box")
        if kind not in ("box", "sphere"):
            raise GenerationError(f"Type d'objet inconnu: {kind}")
        center = np.asarray(values["center"], dtype=np.float64)
        velocity = np.asarray(values.get("velocity", (0.0, 0.0, 0.0)), dtype=np.float64)
        if kind == "sphere":
            radius = float(values["radius"])
            if radius <= 0:
                raise GenerationError(f"Rayon non positif: {radius}")
            return cls(kind, center, velocity, radius=radius)
        size = np.asarray(values["size"], dtype=np.float64)
        if np.any(size <= 0):
            raise GenerationError(f"Dimensions non positives: {size}")
        return cls(kind, center, velocity, size=size)


@dataclass
class SceneSample:
    """
    Un couple d'instants (t, t+1) vu par le banc, avec sa vérité terrain.

    Les tableaux sont rangés par caméra: images (C,3,H,W), profondeurs
    (C,1,H,W), flots (C,2,H,W) en pixels, masques (C,H,W). Le flot avant est
    défini sur la grille de t, le flot arrière sur celle de t+1.
    """

    scene_seed: int
    index: int
    time: float
    cameras_t: list
    cameras_t1: list
    cameras_mid: list
    images_t: np.ndarray
    images_t1: np.ndarray
    images_mid: np.ndarray
    depth_t: np.ndarray
    depth_t1: np.ndarray
    flow_fwd: np.ndarray
    flow_bwd: np.ndarray
    valid_fwd: np.ndarray
    valid_bwd: np.ndarray
    dynamic_t: np.ndarray
    dynamic_t1: np.ndarray

    @property
    def name(self):
        return f"sample_{self.scene_seed:03d}_{self.index:02d}"

    @property
    def num_cameras(self):
        return len(self.cameras_t)

    @property
    def height(self):
        return self.images_t.shape[2]

    @property
    def width(self):
        return self.images_t.shape[3]

    def image_t(self, c):
        return Tensor(self.images_t[c])

    def image_t1(self, c):
        return Tensor(self.images_t1[c])

    def image_mid(self, c):
        return Tensor(self.images_mid[c])

    def arrays(self):
        names = ("images_t", "images_t1", "images_mid", "depth_t", "depth_t1", "flow_fwd", "flow_bwd",
                 "valid_fwd", "valid_bwd", "dynamic_t", "dynamic_t1")
        return {name: getattr(self, name) for name in names}


class SyntheticWorld:
    """
    Scène tirée d'une graine: objets, textures et trajectoire du banc.
    """

    def __init__(self, config, seed):
        self.config = config
        self.seed = int(seed)
        rng = np.random.default_rng([config.texture_seed, self.seed])
        self.objects = self._place_objects(rng)
        # Une texture par surface: la pièce puis chaque objet
        self.textures = [ValueNoise(rng, config.texture_cell) for _ in range(len(self.objects) + 1)]
        self._check_cameras()

    # Disposition --------------------------------------------------------------
    def _place_objects(self, rng):
        cfg = self.config
        if cfg.objects is not None:
            return [SceneObject.from_dict(values) for values in cfg.objects]

        objects = []
        for _ in range(cfg.num_static_boxes):
            objects.append(self._draw(rng, dynamic=False))
        for k in range(cfg.num_dynamic):
            objects.append(self._draw(rng, dynamic=True, sphere=k % 2 == 1))
        return objects

    def _draw(self, rng, dynamic, sphere=False):
        cfg = self.config
        span = cfg.samples_per_scene
        for _ in range(MAX_PLACEMENT_TRIES):
            side = rng.choice([-1.0, 1.0])
            x = rng.uniform(-0.7, 0.7) * cfg.room_half_length
            y = side * rng.uniform(2.5, 0.7 * cfg.room_half_width)
            velocity = np.zeros(3)
            if dynamic:
                heading = rng.uniform(0.0, 2.0 * np.pi)
                velocity = cfg.object_speed * np.array([np.cos(heading), np.sin(heading), 0.0])
            if sphere:
                radius = rng.uniform(0.5, 0.9)
                candidate = SceneObject("sphere", np.array([x, y, radius]), velocity, radius=radius)
            else:
                size = rng.uniform(0.6, 2.0, size=3)
                candidate = SceneObject("box", np.array([x, y, 0.5 * size[2]]), velocity, size=size)
            if self._clear_of_cameras(candidate, span) and self._inside_room(candidate, span):
                return candidate
        raise GenerationError(f"Impossible de placer un objet loin des caméras (graine {self.seed})")

    def _inside_room(self, obj, span):
        cfg = self.config
        extent = obj.radius if obj.kind == "sphere" else 0.5 * np.max(obj.size[:2])
        for time in (0.0, float(span)):
            x, y, _ = obj.center_at(time)
            if abs(x) + extent > cfg.room_half_length or abs(y) + extent > cfg.room_half_width:
                return False
        return True

    def _sample_times(self):
        return np.arange(0.0, self.config.samples_per_scene + 0.25, 0.5)

    def _clear_of_cameras(self, obj, span):
        margin = self.config.d_min
        for time in self._sample_times():
            for cam in self.cameras(time):
                if obj.contains(cam.center, margin=margin, time=time):
                    return False
        return True

    def _check_cameras(self):
        cfg = self.config
        for time in self._sample_times():
            for c, cam in enumerate(self.cameras(time)):
                x, y, z = cam.center
                if abs(x) >= cfg.room_half_length or abs(y) >= cfg.room_half_width or not 0 < z < cfg.room_height:
                    raise GenerationError(f"Caméra {c} hors de la pièce à t={time}")
                for k, obj in enumerate(self.objects):
                    if obj.contains(cam.center, time=time):
                        raise GenerationError(f"Caméra {c} à l'intérieur de l'objet {k} à t={time}")

    # Banc de caméras ----------------------------------------------------------
    def cameras(self, time):
        """Caméras du banc à l'instant `time` (en images)."""
        cfg = self.config
        f = cfg.focal
        cx, cy = (cfg.width - 1) / 2.0, (cfg.height - 1) / 2.0
        rig_x = cfg.rig_start[0] + time * cfg.ego_velocity[0]
        rig_y = cfg.rig_start[1] + time * cfg.ego_velocity[1]
        rig_z = cfg.camera_height + time * cfg.ego_velocity[2]
        rig_yaw = time * cfg.ego_yaw_rate
        cameras = []
        for c in range(cfg.num_cameras):
            yaw = rig_yaw + 2.0 * np.pi * c / cfg.num_cameras
            forward = np.array([np.cos(yaw), np.sin(yaw), 0.0])
            right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
            down = np.array([0.0, 0.0, -1.0])
            rotation = np.column_stack([right, down, forward])
            center = np.array([rig_x, rig_y, rig_z]) + cfg.rig_radius * forward
            cameras.append(PinholeCamera(f, f, cx, cy, cfg.width, cfg.height, make_pose(rotation, center)))
        return cameras

    # Lancer de rayons ---------------------------------------------------------
    def _room_exit(self, origin, directions):
        cfg = self.config
        high = np.array([cfg.room_half_length, cfg.room_half_width, cfg.room_height])
        low = np.array([-cfg.room_half_length, -cfg.room_half_width, 0.0])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(directions > 0, (high - origin) / directions,
                         np.where(directions < 0, (low - origin) / directions, np.inf))
        return t.min(axis=1)

    def cast(self, cam, time):
        """
        Lance un rayon par pixel de `cam` à l'instant `time`.

        Returns:
            tuple: (profondeur (H,W), points monde (H·W,3), surface touchée (H·W,), 0 = pièce)
        """
        rays = camera_rays(cam).data.reshape(3, -1).T
        directions = rays @ cam.rotation.T
        origin = cam.center
        best = self._room_exit(origin, directions)
        surface = np.zeros(best.shape, dtype=np.int64)
        for k, obj in enumerate(self.objects, start=1):
            t = obj.intersect(origin, directions, time)
            closer = t < best
            best = np.where(closer, t, best)
            surface = np.where(closer, k, surface)
        points = origin + best[:, None] * directions
        return best.reshape(cam.height, cam.width), points, surface

    def shade(self, points, surface, time):
        colors = self.textures[0](points)
        for k, obj in enumerate(self.objects, start=1):
            hit = surface == k
            if np.any(hit):
                colors[hit] = self.textures[k](points[hit] - obj.center_at(time))
        return colors

    def velocities(self, surface):
        table = np.vstack([np.zeros(3)] + [obj.velocity for obj in self.objects])
        return table[surface]

    def dynamic_surfaces(self, surface):
        flags = np.array([False] + [obj.dynamic for obj in self.objects])
        return flags[surface]

    def render_view(self, cam, time):
        depth, points, surface = self.cast(cam, time)
        colors = self.shade(points, surface, time)
        image = colors.T.reshape(3, cam.height, cam.width)
        return image, depth, points, surface


def _project_points(points, cam):
    local = (points - cam.center) @ cam.rotation
    z = local[:, 2]
    safe = np.where(z > Z_EPS, z, 1.0)
    u = local[:, 0] / safe * cam.fx + cam.cx
    v = local[:, 1] / safe * cam.fy + cam.cy
    return np.stack([u, v]), z


def _flow_and_validity(world, points, surface, direction, cam_src, cam_dst, depth_dst):
    """Flot analytique et visibilité des points d'une vue vers la vue `cam_dst`."""
    h, w = cam_src.height, cam_src.width
    moved = points + direction * world.velocities(surface)
    pixels, z = _project_points(moved, cam_dst)
    flow = (pixels - pixel_grid(h, w).reshape(2, -1)).reshape(2, h, w)
    static = ~world.dynamic_surfaces(surface)
    if cam_src.same_pose(cam_dst):
        # Pas de mouvement propre: les points statiques ne bougent pas
        flow = np.where(static.reshape(1, h, w), 0.0, flow)
    inside = in_image(pixels, cam_dst) & (z > Z_EPS)
    sampled = bilinear_sample(Tensor(depth_dst[None]), Tensor(pixels.reshape(2, h, w))).data.reshape(-1)
    visible = z <= sampled * (1.0 + OCCLUSION_TOLERANCE) + OCCLUSION_TOLERANCE
    return flow, (inside & visible).reshape(h, w), (~static).reshape(h, w)


def _self_check(flow, valid, dynamic, depth, cam_src, cam_dst, seed):
    rigid, rigid_valid = rigid_flow(Tensor(depth[None]), cam_src, cam_dst, return_mask=True)
    static = valid & ~dynamic & rigid_valid
    if not np.any(static):
        return
    error = np.max(np.abs(rigid.data[:, static] - flow[:, static]))
    if error > SELF_CHECK_TOLERANCE:
        raise GenerationError(f"Auto-vérification du flot échouée (graine {seed}): écart {error:.3e} px")


def generate_scene(world, seed):
    """
    Génère les échantillons d'une scène.

    L'échantillon k couvre les instants k, k+0.5 et k+1. Le flot avant
    projette le point touché à t à sa position en t+1 dans la caméra t+1; le
    flot arrière fait l'inverse. Sur les pixels statiques, le flot est vérifié
    contre rigid_flow(profondeur, poses).

    Args:
        world (SyntheticWorldConfig): description du monde
        seed (int): graine de la scène

    Returns:
        list[SceneSample]: `world.samples_per_scene` échantillons

    Raises:
        GenerationError: configuration dégénérée (caméra dans un objet, hors de la pièce)
    """
    scene = SyntheticWorld(world, seed)
    samples = []
    for index in range(world.samples_per_scene):
        t0 = float(index)
        cams_t, cams_mid, cams_t1 = scene.cameras(t0), scene.cameras(t0 + 0.5), scene.cameras(t0 + 1.0)
        fields = {name: [] for name in ("images_t", "images_t1", "images_mid", "depth_t", "depth_t1", "flow_fwd",
                                        "flow_bwd", "valid_fwd", "valid_bwd", "dynamic_t", "dynamic_t1")}
        for c in range(world.num_cameras):
            image_t, depth_t, points_t, surface_t = scene.render_view(cams_t[c], t0)
            image_t1, depth_t1, points_t1, surface_t1 = scene.render_view(cams_t1[c], t0 + 1.0)
            image_mid, _, _, _ = scene.render_view(cams_mid[c], t0 + 0.5)

            flow_fwd, valid_fwd, dynamic_t = _flow_and_validity(
                scene, points_t, surface_t, 1.0, cams_t[c], cams_t1[c], depth_t1)
            flow_bwd, valid_bwd, dynamic_t1 = _flow_and_validity(
                scene, points_t1, surface_t1, -1.0, cams_t1[c], cams_t[c], depth_t)
            _self_check(flow_fwd, valid_fwd, dynamic_t, depth_t, cams_t[c], cams_t1[c], seed)
            _self_check(flow_bwd, valid_bwd, dynamic_t1, depth_t1, cams_t1[c], cams_t[c], seed)

            for name, value in (("images_t", image_t), ("images_t1", image_t1), ("images_mid", image_mid),
                                ("depth_t", depth_t[None]), ("depth_t1", depth_t1[None]),
                                ("flow_fwd", flow_fwd), ("flow_bwd", flow_bwd),
                                ("valid_fwd", valid_fwd), ("valid_bwd", valid_bwd),
                                ("dynamic_t", dynamic_t), ("dynamic_t1", dynamic_t1)):
                fields[name].append(value)
        samples.append(SceneSample(
            scene_seed=int(seed), index=index, time=t0,
            cameras_t=cams_t, cameras_t1=cams_t1, cameras_mid=cams_mid,
            **{name: np.stack(values) for name, values in fields.items()},
        ))
    return samples


def generate_dataset(world, seeds):
    samples = []
    for seed in seeds:
        samples.extend(generate_scene(world, seed))
    return samples


def ground_truth_render_config(cam):
    """
    Rendu du nuage de vérité terrain: degré 0, sans dilatation.

    Avec la dilatation par défaut (0.3 px²), un voisin placé devant recouvre
    encore un pixel avec un poids exp(−1/0.6) ≈ 0.19 quelle que soit la taille
    des gaussiennes.
    """
    return RenderConfig.for_camera(cam, sh_degree=0, dilation=0.0)


def ground_truth_cloud(sample, scale_factor=0.1, opacity=0.999):
    """
    Nuage de degré 0 aligné sur les pixels à partir de la vérité terrain de t.

    Chaque gaussienne est isotrope, d'écart-type `scale_factor` pixel à sa
    profondeur, et porte la couleur exacte de son pixel. Rendue avec
    `ground_truth_render_config`, son empreinte reste à l'intérieur de son
    pixel.
    """
    clouds = []
    for c, cam in enumerate(sample.cameras_t):
        depth = Tensor(sample.depth_t[c])
        means = maps_to_rows(unproject(depth, cam))
        n = means.shape[0]
        sigma = scale_factor * sample.depth_t[c].reshape(-1) / min(cam.fx, cam.fy)
        colors = sample.images_t[c].reshape(3, -1).T
        h, w = cam.height, cam.width
        v, u = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        clouds.append(GaussianCloud(
            means,
            Tensor(np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))),
            Tensor(np.repeat(sigma[:, None], 3, axis=1)),
            Tensor(np.full((n, 1), opacity)),
            Tensor((colors - 0.5) / SH_C0),
            0,
            np.column_stack([np.full(n, c), v.ravel(), u.ravel()]),
        ))
    return fuse(clouds)


# Stockage ---------------------------------------------------------------------
def _camera_arrays(cameras):
    intrinsics = np.array([[c.fx, c.fy, c.cx, c.cy, c.width, c.height] for c in cameras], dtype=np.float64)
    poses = np.stack([c.cam_to_world for c in cameras])
    return intrinsics, poses


def _cameras_from_arrays(intrinsics, poses):
    return [PinholeCamera(fx, fy, cx, cy, int(w), int(h), pose)
            for (fx, fy, cx, cy, w, h), pose in zip(intrinsics, poses)]


def save_sample(sample, filename):
    arrays = sample.arrays()
    for key in ("t", "t1", "mid"):
        intrinsics, poses = _camera_arrays(getattr(sample, f"cameras_{key}"))
        arrays[f"intrinsics_{key}"] = intrinsics
        arrays[f"poses_{key}"] = poses
    arrays["meta"] = np.array([sample.scene_seed, sample.index, sample.time], dtype=np.float64)
    np.savez_compressed(filename, **arrays)


def load_sample(filename):
    with np.load(filename) as data:
        values = {name: data[name] for name in data.files}
    cameras = {key: _cameras_from_arrays(values.pop(f"intrinsics_{key}"), values.pop(f"poses_{key}"))
               for key in ("t", "t1", "mid")}
    seed, index, time = values.pop("meta")
    return SceneSample(scene_seed=int(seed), index=int(index), time=float(time),
                       cameras_t=cameras["t"], cameras_t1=cameras["t1"], cameras_mid=cameras["mid"], **values)


def save_dataset(samples, directory, world=None):
    """
    Écrit un jeu d'échantillons: un .npz par échantillon, world.json et rig.txt.
    """
    os.makedirs(directory, exist_ok=True)
    for sample in samples:
        save_sample(sample, os.path.join(directory, sample.name + ".npz"))
    if world is not None:
        world.save(os.path.join(directory, "world.json"))
    if samples:
        write_rig(samples[0].cameras_t, os.path.join(directory, "rig.txt"))
    print(f"Dataset: {len(samples)} échantillons écrits dans {directory}")


def load_dataset(directory):
    """
    Relit un jeu écrit par `save_dataset`.

    Returns:
        tuple: (liste de SceneSample triée par nom, SyntheticWorldConfig ou None)
    """
    files = sorted(glob.glob(os.path.join(directory, "sample_*.npz")))
    if not files:
        raise ValueError(f"Aucun échantillon dans {directory}")
    world_file = os.path.join(directory, "world.json")
    world = SyntheticWorldConfig.load(world_file) if os.path.exists(world_file) else None
    return [load_sample(f) for f in files], world

