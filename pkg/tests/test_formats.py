import json

import numpy as np
import pytest

from data_management.data_loader import DataLoader
from gaussians import random_cloud
from gaussians.ply import load_ply, save_ply
from geometry.io import read_flo, read_pfm, write_flo, write_pfm
from pipeline import generate_dataset, load_dataset, save_dataset
from splatter import read_png16, read_ppm, write_png16, write_ppm
from tensor import Tensor
from tensor.serialization import load_tensor, save_tensor
from utils.helpers import config_hash, write_manifest


def float32_values(rng, shape, low=-5.0, high=5.0):
    return rng.uniform(low, high, size=shape).astype(np.float32).astype(np.float64)


def test_flo_round_trip_is_exact_for_float32_values(rng, tmp_path):
    flow = float32_values(rng, (2, 5, 7))
    write_flo(Tensor(flow), tmp_path / "f.flo")
    assert np.array_equal(read_flo(tmp_path / "f.flo").data, flow)


def test_flo_rejects_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.flo"
    bad.write_bytes(np.array([1.0, 2.0], dtype="<f4").tobytes())
    with pytest.raises(ValueError):
        read_flo(bad)
    write_flo(np.zeros((2, 3, 3)), tmp_path / "ok.flo")
    truncated = tmp_path / "short.flo"
    truncated.write_bytes((tmp_path / "ok.flo").read_bytes()[:-4])
    with pytest.raises(ValueError):
        read_flo(truncated)


def test_pfm_round_trip_keeps_row_order(rng, tmp_path):
    depth = float32_values(rng, (1, 4, 6), 0.5, 40.0)
    write_pfm(depth, tmp_path / "d.pfm")
    assert np.array_equal(read_pfm(tmp_path / "d.pfm").data, depth)
    with pytest.raises(ValueError):
        write_pfm(np.zeros((2, 4, 6)), tmp_path / "two.pfm")


def test_ply_round_trip_in_double_precision(tmp_path):
    cloud = random_cloud(6, sh_degree=1, seed=2)
    save_ply(cloud, str(tmp_path / "c.ply"))
    loaded = load_ply(str(tmp_path / "c.ply"))
    assert loaded.sh_degree == 1
    for name, value in cloud.numpy().items():
        assert np.array_equal(loaded.numpy()[name], value), name


def test_ply_viewer_convention(tmp_path):
    cloud = random_cloud(4, sh_degree=0, seed=3)
    save_ply(cloud, str(tmp_path / "v.ply"), viewer=True)
    loaded = load_ply(str(tmp_path / "v.ply"), viewer=True)
    assert np.allclose(loaded.scales.data, cloud.scales.data, rtol=1e-5)
    assert np.allclose(loaded.opacities.data, cloud.opacities.data, atol=1e-6)
    assert np.allclose(loaded.means.data, cloud.means.data, atol=1e-6)


def test_ppm_and_png16_quantisation(rng, tmp_path):
    image = rng.uniform(size=(3, 5, 4))
    write_ppm(image, tmp_path / "i.ppm")
    write_png16(image, str(tmp_path / "i.png"))
    assert np.max(np.abs(read_ppm(tmp_path / "i.ppm").data - image)) <= 0.5 / 255 + 1e-12
    assert np.max(np.abs(read_png16(str(tmp_path / "i.png")).data - image)) <= 0.5 / 65535 + 1e-12


def test_ppm_clamps_out_of_range_values(tmp_path):
    image = np.full((3, 2, 2), 1.5)
    image[0] = -0.2
    write_ppm(image, tmp_path / "c.ppm")
    loaded = read_ppm(tmp_path / "c.ppm").data
    assert loaded[0].max() == 0.0 and loaded[1].min() == 1.0


def test_tensor_file_round_trip(rng, tmp_path):
    values = rng.normal(size=(2, 3, 4))
    save_tensor(Tensor(values), tmp_path / "t.tnsr")
    assert np.array_equal(load_tensor(tmp_path / "t.tnsr").data, values)


def test_dataset_round_trip(tiny_world, tmp_path):
    samples = generate_dataset(tiny_world, tiny_world.val_seeds)
    save_dataset(samples, str(tmp_path / "val"), tiny_world)
    loaded, world = load_dataset(str(tmp_path / "val"))
    assert world == tiny_world
    assert [s.name for s in loaded] == [s.name for s in samples]
    for before, after in zip(samples, loaded):
        for name, value in before.arrays().items():
            assert np.array_equal(getattr(after, name), value), name
        for a, b in zip(before.cameras_t1, after.cameras_t1):
            assert a.same_intrinsics(b) and a.same_pose(b)
    assert (tmp_path / "val" / "rig.txt").exists()

    table = DataLoader(str(tmp_path)).sample_table("val")
    assert table["name"].tolist() == [s.name for s in samples]
    with pytest.raises(ValueError):
        load_dataset(str(tmp_path / "missing"))


def test_manifest_records_config_hash(tmp_path):
    config = {"epochs": 2, "learning_rate": 1e-3}
    manifest = write_manifest(str(tmp_path), "train", config, seed=7, metrics={"psnr": 21.5})
    stored = json.loads((tmp_path / "manifest.json").read_text())
    assert stored["config_hash"] == config_hash({"learning_rate": 1e-3, "epochs": 2})
    assert stored["seed"] == 7 and stored["metrics"] == {"psnr": 21.5}
    assert manifest["command"] == "train"
