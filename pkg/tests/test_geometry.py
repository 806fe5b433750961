import numpy as np
import pytest

from conftest import small_camera, yaw_pose
from geometry import (
    PinholeCamera, compose_flow, forward_backward_gap, interpolate_camera, pixel_grid, project, read_rig,
    rigid_flow, unproject, warp_image, warp_validity, write_rig,
)
from geometry.camera import make_pose, quaternion_to_rotation, rotation_to_quaternion
from geometry.projection import in_image
from tensor import ContractError, ShapeError, Tensor, grad_check
from tensor import ops


def test_pixel_grid_has_integer_centres():
    grid = pixel_grid(2, 3)
    assert grid[0].tolist() == [[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]]
    assert grid[1].tolist() == [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]


def test_project_unproject_identity(rng):
    cam = small_camera(pose=yaw_pose(0.3, [0.5, -0.2, 1.0]))
    depth = Tensor(rng.uniform(1.0, 10.0, size=(1, cam.height, cam.width)))
    pixels, z, valid = project(unproject(depth, cam), cam)
    assert valid.all()
    assert np.max(np.abs(pixels.data - pixel_grid(cam.height, cam.width))) < 1e-9
    assert np.max(np.abs(z.data - depth.data)) < 1e-9


def test_unproject_in_camera_frame_scales_rays():
    cam = small_camera()
    points = unproject(Tensor(np.full((1, cam.height, cam.width), 2.0)), cam, frame="camera")
    assert np.allclose(points.data[2], 2.0)
    assert points.data[0, 0, 0] == pytest.approx(2.0 * (0.0 - cam.cx) / cam.fx)


def test_project_flags_points_behind_camera():
    cam = small_camera()
    points = Tensor(np.array([[0.0, 0.0], [0.0, 0.0], [2.0, -1.0]]))
    _, _, valid = project(points, cam)
    assert valid.tolist() == [True, False]


def test_rigid_flow_zero_for_equal_poses(rng):
    cam = small_camera(pose=yaw_pose(0.1, [1.0, 0.0, 0.0]))
    depth = Tensor(rng.uniform(1.0, 5.0, size=(1, cam.height, cam.width)))
    flow, mask = rigid_flow(depth, cam, cam.with_pose(cam.cam_to_world), return_mask=True)
    assert np.array_equal(flow.data, np.zeros((2, cam.height, cam.width)))
    assert mask.all()


def test_rigid_flow_lateral_translation_closed_form():
    cam = small_camera()
    d, t_x = 4.0, 0.3
    moved = cam.with_pose(make_pose(np.eye(3), [t_x, 0.0, 0.0]))
    flow = rigid_flow(Tensor(np.full((1, cam.height, cam.width), d)), cam, moved)
    assert np.max(np.abs(flow.data[0] - (-cam.fx * t_x / d))) < 1e-9
    assert np.max(np.abs(flow.data[1])) < 1e-9


def test_rigid_flow_masks_points_behind_target():
    cam = small_camera()
    behind = cam.with_pose(make_pose(np.eye(3), [0.0, 0.0, 5.0]))
    flow, mask = rigid_flow(Tensor(np.full((1, cam.height, cam.width), 2.0)), cam, behind, return_mask=True)
    assert not mask.any()
    assert np.array_equal(flow.data, np.zeros_like(flow.data))


def test_rigid_flow_rejects_different_intrinsics():
    cam = small_camera()
    other = small_camera(focal=11.0)
    with pytest.raises(ContractError):
        rigid_flow(Tensor(np.ones((1, cam.height, cam.width))), cam, other)


def test_rigid_flow_gradient_wrt_depth(rng):
    cam = small_camera(width=4, height=4, focal=4.0)
    target = cam.with_pose(yaw_pose(0.05, [0.2, 0.1, 0.1]))
    depth = rng.uniform(2.0, 4.0, size=(1, 4, 4))
    w = rng.normal(size=(2, 4, 4))
    assert grad_check(lambda d: ops.total(rigid_flow(d, cam, target) * w), Tensor(depth)) < 1e-4


def test_warp_with_zero_flow_is_identity(rng):
    image = rng.uniform(size=(3, 5, 7))
    out = warp_image(Tensor(image), Tensor(np.zeros((2, 5, 7))))
    assert np.array_equal(out.data, image)


def test_warp_gradients(rng):
    source = rng.uniform(size=(2, 4, 4))
    # Déplacements fractionnaires: aucune cible sur un noeud de la grille
    flow = rng.uniform(0.15, 0.35, size=(2, 4, 4))
    w = rng.normal(size=(2, 4, 4))
    f = lambda s, fl: ops.total(warp_image(s, fl) * w)
    assert grad_check(f, [source, flow]) < 1e-4


def test_warp_validity_marks_targets_outside_image():
    flow = np.zeros((2, 2, 3))
    flow[0, 0, 2] = 1.0
    flow[1, 1, 0] = -2.0
    assert warp_validity(flow).tolist() == [[True, True, False], [False, True, True]]


def test_forward_backward_gap_vanishes_for_inverse_translations():
    fwd = np.zeros((2, 6, 6))
    fwd[0] = 1.0
    gap = forward_backward_gap(Tensor(fwd), Tensor(-fwd))
    assert gap.shape == (1, 6, 6)
    assert np.max(np.abs(gap.data)) < 1e-12


def test_forward_backward_gap_shape_mismatch():
    with pytest.raises(ShapeError):
        forward_backward_gap(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((2, 4, 5))))


def test_quaternion_rotation_conversions(rng):
    for _ in range(5):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        q = q if q[0] >= 0 else -q
        rotation = quaternion_to_rotation(q)
        assert np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-12)
        assert np.allclose(rotation_to_quaternion(rotation), q, atol=1e-9)


def test_camera_rejects_non_rigid_pose():
    pose = np.eye(4)
    pose[0, 0] = 1.1
    with pytest.raises(ContractError):
        small_camera(pose=pose)
    with pytest.raises(ContractError):
        PinholeCamera(0.0, 1.0, 0.0, 0.0, 4, 4)


def test_interpolate_camera_midpoint():
    cam_a = small_camera(pose=yaw_pose(0.0, [0.0, 0.0, 0.0]))
    cam_b = small_camera(pose=yaw_pose(0.4, [1.0, 0.0, 2.0]))
    mid = interpolate_camera(cam_a, cam_b, 0.5)
    assert np.allclose(mid.translation, [0.5, 0.0, 1.0])
    assert np.allclose(mid.rotation, yaw_pose(0.2, [0, 0, 0])[:3, :3], atol=1e-12)
    assert interpolate_camera(cam_a, cam_a.with_pose(cam_a.cam_to_world), 0.5).same_pose(cam_a)


def test_interpolate_camera_requires_same_intrinsics():
    with pytest.raises(ContractError):
        interpolate_camera(small_camera(), small_camera(focal=12.0), 0.5)


def test_rig_file_roundtrip(tmp_path):
    cameras = [small_camera(pose=yaw_pose(0.5 * c, [c, 0.0, 1.5])) for c in range(3)]
    write_rig(cameras, tmp_path / "rig.txt")
    loaded = read_rig(tmp_path / "rig.txt")
    assert len(loaded) == 3
    for a, b in zip(cameras, loaded):
        assert a.same_intrinsics(b)
        assert np.array_equal(a.cam_to_world, b.cam_to_world)


def test_rig_file_rejects_orphan_keys(tmp_path):
    path = tmp_path / "rig.txt"
    path.write_text("fx 10\n")
    with pytest.raises(ValueError):
        read_rig(path)


def test_compose_flow_is_commutative_and_associative(rng):
    a, b, c = (Tensor(rng.normal(scale=3.0, size=(2, 5, 6))) for _ in range(3))
    assert np.array_equal(compose_flow(a, b).data, compose_flow(b, a).data)
    left = compose_flow(compose_flow(a, b), c).data
    right = compose_flow(a, compose_flow(b, c)).data
    assert np.max(np.abs(left - right)) < 1e-12
    assert np.array_equal(compose_flow(a, Tensor(np.zeros((2, 5, 6)))).data, a.data)
    with pytest.raises(ShapeError):
        compose_flow(a, Tensor(np.zeros((2, 5, 5))))


def test_warp_by_constant_flow_shifts_a_ramp():
    ramp = np.tile(np.arange(7, dtype=float), (1, 4, 1))
    flow = np.zeros((2, 4, 7))
    flow[0] = -1.0
    out = warp_image(Tensor(ramp), Tensor(flow))
    assert np.array_equal(out.data[:, :, 1:], ramp[:, :, 1:] - 1.0)


def test_in_image_includes_borders_and_margin():
    cam = small_camera(width=4, height=3)
    pixels = np.array([[0.0, 3.0, 3.5, -0.2, 1.0], [0.0, 2.0, 1.0, 1.0, 2.1]])
    assert in_image(pixels, cam).tolist() == [True, True, False, False, False]
    assert in_image(Tensor(pixels), cam, margin=0.5).tolist() == [True, True, True, True, True]
