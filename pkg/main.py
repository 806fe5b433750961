import argparse
import os
import sys
import time

from data_management.data_loader import DataLoader
from data_management.training_recorder import TrainingRecorder
from nets.checkpoint import load_checkpoint, save_checkpoint
from nets.weights import count_parameters
from pipeline.ablation import run_ablations
from pipeline.config import SyntheticWorldConfig, TrainConfig
from pipeline.evaluation import evaluate
from pipeline.inference import export_inference, infer, render_midframe
from pipeline.synthetic import generate_dataset, load_sample, save_dataset
from pipeline.trainer import train_single_stage, train_stage1, train_stage2
from splatter.image_io import write_png16, write_ppm
from utils.helpers import get_run_statistics, write_manifest
from visualization.stats_generator import StatsGenerator


def _output_dir(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    return directory


def _train_config(args):
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    changes = {"stage": args.stage}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.no_progress:
        changes["progress"] = False
    if args.no_warp_loss:
        changes["loss_weights"] = config.loss_weights.replace(warp=0.0).to_dict()
    if args.mid_supervision:
        changes["mid_supervision"] = True
    return config.replace(**changes)


def cmd_synth(args):
    world = SyntheticWorldConfig.load(args.world) if args.world else SyntheticWorldConfig()
    for split, seeds in (("train", world.train_seeds), ("val", world.val_seeds)):
        samples = generate_dataset(world, [args.seed + s for s in seeds])
        save_dataset(samples, os.path.join(args.out, split), world)
    write_manifest(args.out, "synth", world.to_dict(), args.seed)


def cmd_train(args):
    config = _train_config(args)
    train_set = DataLoader(args.data).load_train()
    out_dir = _output_dir(args.out)
    recorder = TrainingRecorder(run_dir=args.run_dir or os.path.join(out_dir, "runs"),
                                stage="single" if args.single_stage else config.stage)
    weights = None
    if args.ckpt:
        weights, _ = load_checkpoint(args.ckpt)

    if args.single_stage:
        result = train_single_stage(train_set, config, weights=weights, recorder=recorder)
    elif config.stage == 1:
        result = train_stage1(train_set, config, weights=weights, recorder=recorder)
    else:
        if weights is None:
            sys.exit("train --stage 2 exige --ckpt (poids de l'étape 1)")
        result = train_stage2(train_set, weights, config, recorder=recorder)

    save_checkpoint(result.weights, args.out, epoch=config.epochs, seed=config.seed,
                    extra={"no_warp_loss": bool(args.no_warp_loss)})
    final = result.history[-1]
    write_manifest(out_dir, "train", config.to_dict(), config.seed,
                   metrics={key: final[key] for key in ("loc", "smooth", "warp", "consist", "render", "total")
                            if key in final},
                   extra={"checkpoint": os.path.abspath(args.out), "parameters": count_parameters(result.weights),
                          **result.manifest})


def cmd_infer(args):
    weights, manifest = load_checkpoint(args.ckpt)
    sample = load_sample(args.sample)
    result = infer(sample, weights, use_residual=not args.no_residual)
    midframes = render_midframe(sample, weights, result=result, use_residual=not args.no_residual)
    export_inference(result, sample, weights, args.out, midframes)
    StatsGenerator(output_dir=args.out).generate_flow_panels(result)
    write_manifest(args.out, "infer", weights.config.to_dict(), manifest.get("seed"),
                   extra={"sample": sample.name, "inference_seconds": result.seconds,
                          "parameters": count_parameters(weights)})
    print(f"Inference en {result.seconds:.3f} s pour {sample.num_cameras} caméras")


def cmd_render_mid(args):
    weights, manifest = load_checkpoint(args.ckpt)
    sample = load_sample(args.sample)
    images = render_midframe(sample, weights, alpha=args.alpha, use_residual=not args.no_residual)
    os.makedirs(args.out, exist_ok=True)
    for c, image in enumerate(images):
        write_ppm(image, os.path.join(args.out, f"render_mid_c{c}.ppm"))
        write_png16(image, os.path.join(args.out, f"render_mid_c{c}.png"))
    write_manifest(args.out, "render-mid", weights.config.to_dict(), manifest.get("seed"),
                   extra={"sample": sample.name, "alpha": args.alpha})


def cmd_eval(args):
    weights, manifest = load_checkpoint(args.ckpt)
    val_set = DataLoader(args.data).load_val()
    summary, _ = evaluate(val_set, weights, use_residual=not args.no_residual, output=args.out)
    write_manifest(_output_dir(args.out), "eval", weights.config.to_dict(), manifest.get("seed"), metrics=summary)
    for key, value in summary.items():
        print(f"{key}: {value:.5f}")


def cmd_report(args):
    out = args.out or os.path.join(args.run, "figures")
    files = StatsGenerator(run_dir=args.run, output_dir=out).generate_all_stats(args.ablation, args.metrics)
    for f in files:
        print(f"Figure écrite: {f}")
    for key, value in get_run_statistics(args.run).items():
        print(f"{key}: {value}")


def cmd_ablate(args):
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.epochs is not None:
        config = config.replace(epochs=args.epochs)
    loader = DataLoader(args.data)
    start = time.time()
    table = run_ablations(loader.load_train(), loader.load_val(), config, output_dir=args.out)
    write_manifest(args.out, "ablate", config.to_dict(), config.seed,
                   metrics={row["variant"]: row["psnr"] for row in table.to_dict("records")},
                   extra={"duration_s": round(time.time() - start, 3)})
    print(table.to_string(index=False))


def build_parser():
    parser = argparse.ArgumentParser(description="Reconstruction 4D feed-forward à échelle réduite")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="générer un jeu synthétique")
    p.add_argument("--world", help="configuration JSON du monde")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="entraîner une étape")
    p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="configuration JSON d'entraînement")
    p.add_argument("--ckpt", help="point de contrôle de départ")
    p.add_argument("--out", required=True, help="point de contrôle de sortie")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--run-dir", help="dossier des journaux d'entraînement")
    p.add_argument("--single-stage", action="store_true", help="D, P et R ensemble sur toutes les pertes")
    p.add_argument("--no-warp-loss", action="store_true", help="λ_warp = 0")
    p.add_argument("--mid-supervision", action="store_true", help="L_render aussi sur l'image intermédiaire")
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("infer", cmd_infer, "inférence et export"),
                                  ("render-mid", cmd_render_mid, "rendu de l'image intermédiaire")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--sample", required=True, help="échantillon .npz")
        p.add_argument("--out", required=True)
        p.add_argument("--no-residual", action="store_true", help="flot résiduel désactivé")
        if name == "render-mid":
            p.add_argument("--alpha", type=float, default=0.5)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="évaluer sur le jeu de validation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="fichier JSON Lines des métriques")
    p.add_argument("--no-residual", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="figures d'une exécution")
    p.add_argument("--run", required=True, help="dossier des journaux d'entraînement")
    p.add_argument("--out")
    p.add_argument("--ablation", help="table ablation.csv")
    p.add_argument("--metrics", help="métriques JSON Lines")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="comparer les variantes d'entraînement")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


if __name__ == "__main__":
    arguments = build_parser().parse_args()
    arguments.func(arguments)
