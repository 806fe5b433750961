import numpy as np
import pytest

from nets import (
    ArchitectureConfig, NetworkWeights, count_parameters, depth_forward, gauss_param_forward, init_weights,
    load_checkpoint, residual_flow_forward, save_checkpoint,
)
from nets.weights import parameter_specs
from tensor import ContractError, ShapeError, Tensor, grad_check
from tensor import ops


@pytest.fixture
def weights(tiny_architecture):
    return init_weights(tiny_architecture, seed=0)


@pytest.fixture
def image(rng, tiny_architecture):
    return Tensor(rng.uniform(size=(3, tiny_architecture.height, tiny_architecture.width)))


def test_architecture_checks_resolution_and_levels():
    with pytest.raises(ShapeError):
        ArchitectureConfig(height=60, width=96)
    with pytest.raises(ContractError):
        ArchitectureConfig(pyramid_levels=1)
    with pytest.raises(ContractError):
        ArchitectureConfig(d_min=5.0, d_max=1.0)
    with pytest.raises(ValueError):
        ArchitectureConfig.from_dict({"depth_bins": 32})


def test_channel_widths_saturate():
    config = ArchitectureConfig(base_channels=8)
    assert [config.channels(level) for level in range(4)] == [8, 16, 32, 32]
    assert config.param_channels == 20


def test_depth_stays_inside_range(weights, image, tiny_architecture):
    depth, disparity = depth_forward(weights, image, return_disparity=True)
    assert depth.shape == (1, tiny_architecture.height, tiny_architecture.width)
    assert np.all(depth.data > tiny_architecture.d_min) and np.all(depth.data < tiny_architecture.d_max)
    assert np.allclose(depth.data * disparity.data, 1.0)


def test_depth_rejects_bad_input(weights):
    with pytest.raises(ShapeError):
        depth_forward(weights, Tensor(np.zeros((1, 16, 24))))
    with pytest.raises(ShapeError):
        depth_forward(weights, Tensor(np.zeros((3, 18, 24))))


def test_depth_gradient_wrt_head_bias(weights, image, rng):
    w = rng.normal(size=(1, 16, 24))

    def f(bias):
        return ops.total(depth_forward(weights.merged(NetworkWeights(weights.config, {"D.head.bias": bias})), image) * w)

    assert grad_check(f, [weights["D.head.bias"].data]) < 1e-4


def test_gauss_param_output_channels(weights, image, tiny_architecture):
    depth = depth_forward(weights, image)
    params = gauss_param_forward(weights, image, depth)
    assert params.shape == (tiny_architecture.param_channels, 16, 24)
    with pytest.raises(ShapeError):
        gauss_param_forward(weights, image, Tensor(np.ones((1, 8, 12))))


def test_residual_flow_is_zero_at_initialisation(weights, image, rng):
    target = Tensor(rng.uniform(size=image.shape))
    rigid = Tensor(rng.normal(size=(2, 16, 24)))
    flow, levels = residual_flow_forward(weights, image, target, rigid, camera_index=1, source=image)
    assert np.array_equal(flow.data, np.zeros((2, 16, 24)))
    assert [level.shape for level in levels] == [(2, 16, 24), (2, 8, 12)]
    assert all(not np.any(level.data) for level in levels)


def test_residual_flow_reaches_decoder_heads(weights, image, rng):
    target = Tensor(rng.uniform(size=image.shape))
    flow, _ = residual_flow_forward(weights, image, target, Tensor(np.zeros((2, 16, 24))), camera_index=0,
                                   source=image)
    ops.total(flow * rng.normal(size=flow.shape)).backward()
    assert np.any(weights["R.decoder0.level0.head.bias"].grad)
    assert weights["R.decoder1.level0.head.bias"].grad is None


def test_residual_flow_contracts(weights, image):
    rigid = Tensor(np.zeros((2, 16, 24)))
    with pytest.raises(ContractError):
        residual_flow_forward(weights, image, image, rigid, camera_index=2, source=image)
    with pytest.raises(ShapeError):
        residual_flow_forward(weights, image, image, Tensor(np.zeros((2, 8, 12))), camera_index=0, source=image)
    with pytest.raises(ShapeError):
        residual_flow_forward(weights, image, image, rigid, camera_index=0, source=Tensor(np.zeros((3, 8, 12))))


def with_random_heads(weights, rng, cameras=(0, 1)):
    heads = {}
    for camera in cameras:
        for level in range(weights.config.pyramid_levels):
            name = f"R.decoder{camera}.level{level}.head.kernel"
            heads[name] = Tensor(rng.normal(scale=0.5, size=weights[name].shape), requires_grad=True)
    return weights.merged(NetworkWeights(weights.config, heads))


def test_finer_levels_warp_the_raw_source(weights, image, rng):
    weights = with_random_heads(weights, rng)
    target = Tensor(rng.uniform(size=image.shape))
    rigid = Tensor(rng.uniform(-1.0, 1.0, size=(2, 16, 24)))
    other = Tensor(rng.uniform(size=image.shape))
    flow, levels = residual_flow_forward(weights, image, target, rigid, camera_index=0, source=image)
    moved, moved_levels = residual_flow_forward(weights, image, target, rigid, camera_index=0, source=other)
    # Le niveau grossier ne voit que la source déjà déformée
    assert np.array_equal(levels[-1].data, moved_levels[-1].data)
    assert not np.array_equal(flow.data, moved.data)


def test_encoder_gradient_accumulates_over_cameras(weights, image, rng):
    weights = with_random_heads(weights, rng)
    target = Tensor(rng.uniform(size=image.shape))
    rigid = Tensor(rng.uniform(-1.0, 1.0, size=(2, 16, 24)))
    w = rng.normal(size=(2, 16, 24))
    encoder = "R.encoder.level0.kernel"

    def encoder_grad(cameras):
        weights.zero_grad()
        loss = sum((ops.total(residual_flow_forward(weights, image, target, rigid, c, source=image)[0] * w)
                    for c in cameras), Tensor(np.array(0.0)))
        loss.backward()
        return weights[encoder].grad.copy()

    g0, g1, both = encoder_grad([0]), encoder_grad([1]), encoder_grad([0, 1])
    assert np.any(g0) and np.any(g1)
    assert not np.allclose(g0, g1)
    assert np.allclose(both, g0 + g1)
    assert weights["R.decoder0.level0.head.kernel"].grad is not None
    encoder_grad([1])
    assert weights["R.decoder0.level0.head.kernel"].grad is None


def test_upsampled_estimate_doubles_in_magnitude(weights, image, rng):
    # Tête grossière constante, tête fine nulle: la correction fine est nulle
    coarse = Tensor(np.array([0.3, -0.2]))
    weights = weights.merged(NetworkWeights(weights.config, {"R.decoder0.level1.head.bias": coarse}))
    target = Tensor(rng.uniform(size=image.shape))
    flow, levels = residual_flow_forward(weights, image, target, Tensor(np.zeros((2, 16, 24))), 0, source=image)
    factor = np.abs(flow.data[:, ::2, ::2]).mean() / np.abs(levels[1].data).mean()
    assert 1.5 <= factor <= 2.5
    assert np.allclose(flow.data[0], 0.6) and np.allclose(flow.data[1], -0.4)


def test_init_is_deterministic(tiny_architecture):
    a = init_weights(tiny_architecture, seed=3).snapshot()
    b = init_weights(tiny_architecture, seed=3).snapshot()
    c = init_weights(tiny_architecture, seed=4).snapshot()
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[name], b[name]) for name in a)
    assert any(not np.array_equal(a[name], c[name]) for name in a)


def test_parameter_counts(weights, tiny_architecture):
    counts = count_parameters(weights)
    assert set(counts) == {"D", "P", "R", "total"}
    assert counts["total"] == counts["D"] + counts["P"] + counts["R"]
    assert counts["total"] == sum(int(np.prod(shape)) for _, shape, _ in parameter_specs(tiny_architecture))


def test_network_weights_contracts(tiny_architecture):
    weights = NetworkWeights(tiny_architecture, {"D.x": Tensor(np.ones(2))})
    with pytest.raises(ContractError):
        weights.add("D.x", Tensor(np.ones(2)))
    with pytest.raises(ContractError):
        weights.add("D.y", Tensor(np.array([np.nan])))
    with pytest.raises(KeyError):
        weights["P.missing"]


def test_subset_shares_tensors_and_freezing(weights):
    depth_only = weights.subset("D.")
    assert all(name.startswith("D.") for name in depth_only)
    assert depth_only["D.head.bias"] is weights["D.head.bias"]
    weights.set_trainable("D.", False)
    trainable = [name for name, _ in weights.trainable()]
    assert trainable and not any(name.startswith("D.") for name in trainable)


def test_checkpoint_is_bit_identical_and_reloads(weights, tmp_path):
    weights.set_trainable("D.", False)
    first, second = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(weights, first, stage=1, epoch=2, seed=0)
    save_checkpoint(weights, second, stage=1, epoch=2, seed=0)
    assert first.read_bytes() == second.read_bytes()

    loaded, manifest = load_checkpoint(first)
    assert manifest["stage"] == 1 and manifest["epoch"] == 2
    assert loaded.config == weights.config
    assert loaded.names() == weights.names()
    for name, tensor in weights.items():
        assert np.array_equal(loaded[name].data, tensor.data)
        assert loaded[name].requires_grad == tensor.requires_grad
