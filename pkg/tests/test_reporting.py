import numpy as np
import pandas as pd
import pytest

from data_management.data_processor import DataProcessor
from data_management.training_recorder import TrainingRecorder
from main import build_parser
from visualization.stats_generator import StatsGenerator, depth_to_color, flow_to_color


@pytest.fixture
def run_dir(tmp_path):
    directory = tmp_path / "runs"
    recorder = TrainingRecorder(run_dir=str(directory), run_id="demo", stage=1, save_interval=2)
    for step, total in enumerate([4.0, 3.0, 2.0, 1.0]):
        recorder.record_step({"epoch": step // 2 + 1, "step": step, "sample": "sample_000_00",
                              "loc": total / 2, "smooth": 0.1, "render": total / 4, "total": total})
    recorder.end_run()
    return directory


def test_epoch_losses_and_reduction(run_dir):
    processor = DataProcessor(str(run_dir))
    epochs = processor.epoch_losses("demo")
    assert epochs.loc[("demo", 1), "total"] == pytest.approx(3.5)
    assert "warp" not in epochs.columns
    assert processor.loss_reduction("demo") == pytest.approx(1.5 / 3.5)
    history = processor.load_run_history()
    assert history["total_steps"].tolist() == [4]
    assert history["final_loss"].tolist() == [1.0]


def test_flow_and_depth_colour_maps():
    flow = np.zeros((2, 3, 4))
    assert np.allclose(flow_to_color(flow), 1.0)
    flow[0] = 2.0
    colours = flow_to_color(flow)
    assert colours.shape == (3, 4, 3) and np.all((colours >= 0.0) & (colours <= 1.0))
    assert depth_to_color(np.linspace(1.0, 5.0, 12).reshape(1, 3, 4)).shape == (3, 4, 3)


def test_report_figures(run_dir, tmp_path):
    ablation = tmp_path / "ablation.csv"
    pd.DataFrame([{"variant": "full", "psnr": 24.0}, {"variant": "no_residual", "psnr": 22.5}]).to_csv(
        ablation, index=False)
    metrics = tmp_path / "metrics.jsonl"
    pd.DataFrame([{"camera": 0, "residual_static": 0.1, "residual_dynamic": 1.2},
                  {"camera": 1, "residual_static": 0.2, "residual_dynamic": 0.9}]).to_json(
        metrics, orient="records", lines=True)

    generator = StatsGenerator(run_dir=str(run_dir), output_dir=str(tmp_path / "figures"))
    files = generator.generate_all_stats(str(ablation), str(metrics))
    assert sorted(f.split("/")[-1] for f in files) == ["ablation_psnr.png", "loss_curves.png", "residual_flow.png"]
    for f in files:
        with open(f, "rb") as handle:
            assert handle.read(8) == b"\x89PNG\r\n\x1a\n"
    assert DataProcessor.residual_localization(DataProcessor.load_metrics(str(metrics))) == pytest.approx(
        0.15 / 1.05)


def test_cli_parser():
    args = build_parser().parse_args(["train", "--stage", "2", "--data", "d", "--ckpt", "a.ckpt",
                                      "--out", "b.ckpt", "--no-warp-loss"])
    assert args.stage == 2 and args.no_warp_loss and args.ckpt == "a.ckpt"
    mid = build_parser().parse_args(["render-mid", "--ckpt", "c", "--sample", "s.npz", "--out", "o", "--alpha", "0.25"])
    assert mid.alpha == 0.25 and not mid.no_residual
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--stage", "3", "--data", "d", "--out", "o"])
