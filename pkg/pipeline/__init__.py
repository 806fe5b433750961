from pipeline.ablation import VARIANTS, run_ablations
from pipeline.config import SyntheticWorldConfig, TrainConfig
from pipeline.errors import DivergenceError, FreezeViolation, GenerationError
from pipeline.evaluation import aggregate, camera_metrics, evaluate
from pipeline.inference import InferenceResult, export_inference, infer, render_midframe
from pipeline.optimizer import Adam
from pipeline.synthetic import (
    SceneSample, generate_dataset, generate_scene, ground_truth_cloud, ground_truth_render_config, load_dataset,
    save_dataset,
)
from pipeline.trainer import TrainingResult, train_single_stage, train_stage1, train_stage2
