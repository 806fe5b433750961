import numpy as np
import pytest

from conftest import small_camera, yaw_pose
from gaussians import (
    GaussianCloud, covariance, covariances, displace_means, fuse, max_scale, pixel_aligned_cloud,
    random_cloud, to_world,
)
from gaussians.construction import MIN_SCALE, param_channels
from geometry import unproject
from geometry.camera import quaternion_to_rotation
from losses import l1
from pipeline import generate_scene, ground_truth_cloud
from splatter import RenderConfig, render
from tensor import ContractError, ShapeError, Tensor, grad_check
from tensor import ops


def raw_params(rng, cam, sh_degree=0, log_scale=-3.0):
    params = rng.normal(scale=0.5, size=(param_channels(sh_degree), cam.height, cam.width))
    params[4:7] += log_scale
    return Tensor(params)


def test_covariance_of_identity_rotation_is_diagonal():
    sigma = covariance(Tensor([1.0, 0.0, 0.0, 0.0]), Tensor([0.1, 0.2, 0.3]))
    assert np.allclose(sigma.data, np.diag([0.01, 0.04, 0.09]))


def test_covariances_are_symmetric_positive_definite(rng):
    quats = rng.normal(size=(5, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    sigma = covariances(Tensor(quats), Tensor(rng.uniform(0.05, 0.5, size=(5, 3)))).data
    assert np.allclose(sigma, np.transpose(sigma, (0, 2, 1)))
    assert np.all(np.linalg.eigvalsh(sigma) > 0)
    for q, m in zip(quats, sigma):
        # Dans le repère propre de la rotation, la covariance est diagonale
        local = quaternion_to_rotation(q).T @ m @ quaternion_to_rotation(q)
        assert np.allclose(local, np.diag(np.diag(local)), atol=1e-12)


def test_covariance_gradients(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    s = rng.uniform(0.2, 0.6, size=3)
    w = rng.normal(size=(3, 3))
    assert grad_check(lambda a, b: ops.total(covariance(a, b) * w), [q, s]) < 1e-4


def test_cloud_checks_attribute_shapes():
    with pytest.raises(ShapeError):
        GaussianCloud(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 3)), np.zeros((2, 1)), np.zeros((2, 4)), 0)
    with pytest.raises(ContractError):
        GaussianCloud.empty(sh_degree=2)


def test_pixel_aligned_cloud_attributes(rng):
    cam = small_camera()
    depth = Tensor(rng.uniform(1.0, 5.0, size=(1, cam.height, cam.width)))
    cloud = pixel_aligned_cloud(depth, raw_params(rng, cam), cam, 0, camera_index=1)
    n = cam.height * cam.width
    assert cloud.num_gaussians == n
    assert np.allclose(np.linalg.norm(cloud.rotations.data, axis=1), 1.0, atol=1e-6)
    assert np.all(cloud.scales.data >= MIN_SCALE) and np.all(cloud.scales.data <= max_scale(cam))
    assert np.all((cloud.opacities.data > 0) & (cloud.opacities.data < 1))
    assert cloud.pixel_index[:, 0].tolist() == [1] * n
    assert cloud.pixel_index[cam.width].tolist() == [1, 1, 0]


def test_pixel_aligned_means_equal_unproject_for_identity_pose(rng):
    cam = small_camera()
    depth = Tensor(rng.uniform(1.0, 5.0, size=(1, cam.height, cam.width)))
    cloud = to_world(pixel_aligned_cloud(depth, raw_params(rng, cam), cam, 0), cam.cam_to_world)
    expected = unproject(depth, cam).data.reshape(3, -1).T
    assert np.allclose(cloud.means.data, expected, atol=1e-12)


def test_pixel_aligned_cloud_rejects_wrong_channels(rng):
    cam = small_camera()
    depth = Tensor(np.ones((1, cam.height, cam.width)))
    with pytest.raises(ShapeError):
        pixel_aligned_cloud(depth, raw_params(rng, cam, sh_degree=1), cam, 0)


def test_pixel_aligned_cloud_gradients(rng):
    cam = small_camera(width=4, height=4, focal=4.0)
    depth = rng.uniform(1.0, 3.0, size=(1, 4, 4))
    params = raw_params(rng, cam).data
    weights = {name: rng.normal(size=shape) for name, shape in
               (("means", (16, 3)), ("rotations", (16, 4)), ("scales", (16, 3)), ("opacities", (16, 1)))}

    def f(d, p):
        cloud = pixel_aligned_cloud(d, p, cam, 0)
        return sum((ops.total(getattr(cloud, name) * w) for name, w in weights.items()), Tensor(0.0))

    assert grad_check(f, [depth, params]) < 1e-4


def test_to_world_rotates_covariances(rng):
    pose = yaw_pose(0.7, [1.0, 2.0, 3.0])
    cloud = random_cloud(4, seed=3)
    moved = to_world(cloud, pose)
    rotation = pose[:3, :3]
    assert np.allclose(moved.means.data, cloud.means.data @ rotation.T + pose[:3, 3])
    before = covariances(cloud.rotations, cloud.scales).data
    after = covariances(moved.rotations, moved.scales).data
    assert np.allclose(after, rotation @ before @ rotation.T, atol=1e-12)
    assert np.array_equal(moved.scales.data, cloud.scales.data)


def test_to_world_rejects_non_rigid_transform():
    transform = np.eye(4)
    transform[1, 1] = 2.0
    with pytest.raises(ContractError):
        to_world(random_cloud(2), transform)


def test_fuse_concatenates_in_camera_order():
    a, b = random_cloud(3, seed=1), random_cloud(2, seed=2)
    fused = fuse([a, b])
    assert fused.num_gaussians == 5
    assert np.array_equal(fused.means.data[:3], a.means.data)
    assert np.array_equal(fused.means.data[3:], b.means.data)


def test_fuse_rejects_mixed_degrees_and_empty_list():
    with pytest.raises(ContractError):
        fuse([random_cloud(2, sh_degree=0), random_cloud(2, sh_degree=1)])
    with pytest.raises(ContractError):
        fuse([])


def static_setup(rng):
    cam = small_camera()
    depth = Tensor(rng.uniform(1.0, 5.0, size=(1, cam.height, cam.width)))
    cloud = to_world(pixel_aligned_cloud(depth, raw_params(rng, cam), cam, 0), cam.cam_to_world)
    return cam, depth, cloud


def test_displace_means_with_zero_flow_is_exact(rng):
    cam, depth, cloud = static_setup(rng)
    zero = Tensor(np.zeros((2, cam.height, cam.width)))
    moved = displace_means(cloud, [zero], [depth], [cam], alpha=0.5)
    assert np.array_equal(moved.means.data, cloud.means.data)
    assert moved.rotations is cloud.rotations


def test_displace_means_alpha_zero_and_one(rng):
    cam, depth, cloud = static_setup(rng)
    target_cam = cam.with_pose(yaw_pose(0.0, [0.2, 0.0, 0.0]))
    flow = Tensor(np.full((2, cam.height, cam.width), 0.0))
    assert np.array_equal(displace_means(cloud, [flow], [depth], [target_cam], 0.0).means.data, cloud.means.data)
    # Flot nul vers une caméra translatée: chaque point suit la translation
    moved = displace_means(cloud, [flow], [depth], [target_cam], 1.0)
    assert np.allclose(moved.means.data - cloud.means.data, [0.2, 0.0, 0.0], atol=1e-12)


def test_displace_means_contracts(rng):
    cam, depth, cloud = static_setup(rng)
    flow = Tensor(np.zeros((2, cam.height, cam.width)))
    with pytest.raises(ContractError):
        displace_means(cloud, [flow], [depth], [cam], 1.5)
    with pytest.raises(ContractError):
        displace_means(random_cloud(3), [flow], [depth], [cam], 0.5)
    with pytest.raises(ContractError):
        displace_means(cloud, [flow, flow], [depth], [cam], 0.5)


def test_displace_means_gradient_wrt_flow(rng):
    cam = small_camera(width=4, height=4, focal=4.0)
    depth = Tensor(rng.uniform(1.0, 3.0, size=(1, 4, 4)))
    depth_t1 = rng.uniform(1.0, 3.0, size=(1, 4, 4))
    cloud = to_world(pixel_aligned_cloud(depth, raw_params(rng, cam), cam, 0), cam.cam_to_world).detach()
    flow = rng.uniform(-0.35, -0.15, size=(2, 4, 4))
    w = rng.normal(size=(16, 3))

    def f(fl, d1):
        return ops.total(displace_means(cloud, [fl], [d1], [cam], 0.5).means * w)

    assert grad_check(f, [flow, depth_t1]) < 1e-4


def test_full_displacement_explains_next_frame_better(tiny_world):
    checked = 0
    for seed in range(4):
        sample = generate_scene(tiny_world, seed)[0]
        if not sample.dynamic_t.any():
            continue
        cloud = ground_truth_cloud(sample, scale_factor=0.5)
        flows = [Tensor(f) for f in sample.flow_fwd]
        depths = [Tensor(d) for d in sample.depth_t1]
        moved = displace_means(cloud, flows, depths, sample.cameras_t1, 1.0)
        before, after = 0.0, 0.0
        for c, cam in enumerate(sample.cameras_t1):
            cfg = RenderConfig.for_camera(cam, sh_degree=0)
            before += l1(render(cloud, cam, cfg), sample.images_t1[c]).item()
            after += l1(render(moved, cam, cfg), sample.images_t1[c]).item()
        assert after < before, seed
        checked += 1
    assert checked > 0
