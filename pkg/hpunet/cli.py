#!/usr/bin/env python3
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from hpunet.backend.functional import one_hot
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tensor
from hpunet.clustering.hamming import SampleStack, greedy_hamming_cluster
from hpunet.clustering.postprocess import Fallback, postprocess
from hpunet.config import Config
from hpunet.errors import HpuNetError
from hpunet.io.archive import archive_read, archive_write
from hpunet.io.config_file import RunConfig, parse_config, render_config
from hpunet.io.panels import export_curves, export_panels, write_label_panel
from hpunet.metrics.evaluate import METRICS, EvalSettings, evaluate_dataset
from hpunet.model.latents import LatentPlan
from hpunet.model.posterior import reconstruct
from hpunet.model.unet import sample_segmentations
from hpunet.synthdata.manifest import generate, load_dataset, save_dataset
from hpunet.synthdata.sample import TASKS
from hpunet.trainer.checkpoint import Checkpoint, load_checkpoint
from hpunet.trainer.loop import run_training
from hpunet.trainer.session import FINAL_NAME, run_files, start_run

logger = logging.getLogger(__name__)

SAMPLES_NAME = "samples.hput"
RECONSTRUCTION_NAME = "reconstruction.hput"


def _print_settings(title: str, settings: Dict) -> None:
    print(f"# {title}")
    for key, value in settings.items():
        print(f"{key} = {value}")
    print()


def load_run(run_dir: str) -> Checkpoint:
    path = Path(run_dir)
    if path.is_dir():
        path = path / FINAL_NAME
    return load_checkpoint(path)


def load_array(path: str, record: str, index: int) -> np.ndarray:
    """Record `record` of an HPUT file, or sample `index` of a dataset directory."""
    p = Path(path)
    if p.is_dir():
        sample = load_dataset(p)[index]
        return sample.image if record == "image" else sample.targets[0]
    records = archive_read(p)
    if record not in records:
        raise ValueError(f"{p} has no {record!r} record (found: {', '.join(records)})")
    return np.asarray(records[record])


def _as_batch(image: np.ndarray) -> Tensor:
    image = np.asarray(image, dtype=np.float32)
    return Tensor(image[None] if image.ndim == 3 else image)


def _latent_plan(checkpoint: Checkpoint, scales: Optional[str]) -> LatentPlan:
    if not scales:
        return LatentPlan.sample(checkpoint.model_config)
    modes = [m for m in scales.split(",") if m.strip()]
    expected = len(checkpoint.model_config.enabled_levels())
    if len(modes) != expected:
        raise ValueError(f"--scales lists {len(modes)} modes but the model has {expected} latent scales")
    return LatentPlan.from_modes(modes)


def cmd_generate(args) -> None:
    params = {"size": args.size} if args.size else {}
    if args.task == "lesions":
        params.update(p_abnormal=args.p_abnormal, graders=args.graders)
    else:
        params.update(num_ids=args.num_ids)
    if args.task == "extrapolation":
        params.update(mask_fraction=args.mask_fraction)
    _print_settings("generate", {"task": args.task, "count": args.count, "seed": args.seed, **params})
    dataset = generate(args.task, args.count, args.seed, **params)
    manifest = save_dataset(dataset, args.out)
    print(f"Wrote {len(dataset)} {args.task} samples: {manifest}")


def cmd_train(args) -> None:
    config = parse_config(Path(args.config).read_text(encoding="utf-8")) if args.config else RunConfig().validate()
    run_dir = Path(args.out) if args.out else Config.RUNS_DIR / f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    files = start_run(run_dir)
    print(render_config(config))
    dataset = load_dataset(args.data)
    resume = load_checkpoint(args.resume) if args.resume else None
    final, rows = run_training(config.model, config.train, dataset, run_dir=run_dir, resume=resume)
    if rows:
        last = rows[-1]
        print(f"Finished at iteration {final.iteration}: ce/pixel={last['ce_per_pixel']:.5f} "
              f"lambda={last['lambda']:.5g} kl={last['kl_total']:.4f}")
    print(f"Final checkpoint: {files['final']}")


def cmd_sample(args) -> None:
    checkpoint = load_run(args.run)
    plan = _latent_plan(checkpoint, args.scales)
    _print_settings("sample", {"run": args.run, "input": args.input, "num_samples": args.num_samples,
                               "scales": args.scales or "sample (all)", "seed": args.seed})
    image = _as_batch(load_array(args.input, "image", args.index))
    logits = sample_segmentations(checkpoint.params, image, plan, RngState(args.seed), args.num_samples)
    labels = logits.argmax(axis=2).astype(np.int32)
    out = Path(args.out)
    archive_write(out / SAMPLES_NAME, {"labels": labels, "logits": logits.astype(np.float32)})
    export_panels(out, "sample", image=image.data[0], label_maps=list(labels[:, 0]))
    print(f"Wrote {args.num_samples} samples to {out / SAMPLES_NAME}")


def cmd_reconstruct(args) -> None:
    checkpoint = load_run(args.run)
    _print_settings("reconstruct", {"run": args.run, "input": args.input, "target": args.target})
    image = _as_batch(load_array(args.input, "image", args.index))
    target = np.asarray(load_array(args.target, "target", args.index))
    target = target[None] if target.ndim == 2 else target
    onehot = Tensor(one_hot(target, checkpoint.model_config.num_classes))
    labels = reconstruct(checkpoint.params, image, onehot).data.argmax(axis=1).astype(np.int32)
    out = Path(args.out)
    archive_write(out / RECONSTRUCTION_NAME, {"labels": labels})
    export_panels(out, "reconstruction", image=image.data[0], label_maps=[labels[0], target[0]])
    print(f"Wrote reconstruction to {out / RECONSTRUCTION_NAME}")


def cmd_evaluate(args) -> None:
    checkpoint = load_run(args.run)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ValueError(f"Unknown metrics {unknown}; choose from {', '.join(METRICS)}")
    settings = EvalSettings(num_samples=args.num_samples, bootstrap=args.bootstrap, seed=args.seed,
                            alpha=args.alpha,
                            plan_modes=args.scales.split(",") if args.scales else None)
    if Path(args.run).is_dir():
        start_run(args.run, announce=False, log_name="eval_debug.log")
    _print_settings("evaluate", {"run": args.run, "data": args.data, "metrics": ",".join(metrics),
                                 "num_samples": settings.num_samples, "bootstrap": settings.bootstrap,
                                 "seed": settings.seed, "alpha": settings.alpha or settings.num_samples})
    print(render_config(RunConfig(checkpoint.model_config, checkpoint.train_config)))
    report = evaluate_dataset(checkpoint.params, load_dataset(args.data), metrics, settings)
    print(report.table())


def _sample_classes(records, labels: np.ndarray) -> int:
    """Class count of a sample set: the logits' class axis, else the largest label + 1."""
    if "logits" in records:
        return int(np.asarray(records["logits"]).shape[-3])
    return int(labels.max()) + 1


def cmd_cluster(args) -> None:
    src = Path(args.samples)
    records = archive_read(src / SAMPLES_NAME if src.is_dir() else src)
    labels = np.asarray(records["labels"])
    if labels.ndim == 4:
        labels = labels[:, 0]
    num_classes = args.num_classes or _sample_classes(records, labels)
    alpha = args.alpha if args.alpha is not None else labels.shape[0]
    _print_settings("cluster", {"samples": args.samples, "num_samples": labels.shape[0],
                                "num_classes": num_classes, "alpha": alpha, "erosion": args.erosion,
                                "majority": args.majority, "fallback": args.fallback, "seed": args.seed})
    stack = SampleStack.from_samples(labels, num_classes)
    labeling = greedy_hamming_cluster(stack, alpha, background_class=0, rng=RngState(args.seed))
    labeling = postprocess(labeling, args.erosion, args.majority, Fallback(args.fallback))
    out = Path(args.out)
    archive_write(out, {"labeling": labeling.astype(np.int32)})
    write_label_panel(out.with_suffix(".ppm"), labeling)
    print(f"Wrote {int(labeling.max())} instances to {out}")


def cmd_export(args) -> None:
    checkpoint = load_run(args.run)
    files = run_files(args.run)
    _print_settings("export", {"run": args.run, "curves": args.curves, "panels": args.panels,
                               "data": args.data, "count": args.count})
    if args.curves:
        print(f"Curves: {export_curves(files['curves'], args.curves)}")
    if args.panels:
        dataset = load_dataset(args.data)
        plan = LatentPlan.sample(checkpoint.model_config)
        for i in range(min(args.count, len(dataset))):
            s = dataset[i]
            logits = sample_segmentations(checkpoint.params, _as_batch(s.image), plan,
                                          RngState(args.seed).derive("export", i), args.num_samples)
            maps = list(logits[:, 0].argmax(axis=1))
            export_panels(args.panels, f"image{i:03d}", image=s.image, label_maps=[])
            export_panels(args.panels, f"image{i:03d}_target", label_maps=s.targets)
            export_panels(args.panels, f"image{i:03d}_sample", label_maps=maps)
        print(f"Panels: {args.panels}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpunet", description="hpunet CLI")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Generate command
    gen = subparsers.add_parser("generate", help="Generate a synthetic dataset")
    gen.add_argument("--task", choices=TASKS, required=True)
    gen.add_argument("--out", required=True, help="Output dataset directory")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--size", type=int, help="Image size (default: 32 lesions, 64 instances)")
    gen.add_argument("--p-abnormal", type=float, default=0.5)
    gen.add_argument("--graders", type=int, default=4)
    gen.add_argument("--num-ids", type=int, default=5)
    gen.add_argument("--mask-fraction", type=float, default=0.5)

    # Train command
    train = subparsers.add_parser("train", help="Train a model on a dataset")
    train.add_argument("--config", help="Run configuration file (default: built-in defaults)")
    train.add_argument("--data", required=True, help="Dataset directory")
    train.add_argument("--out", help="Run directory (default: a new directory under HPUNET_RUNS_DIR)")
    train.add_argument("--resume", help="Checkpoint to continue from")

    # Sample command
    sample = subparsers.add_parser("sample", help="Draw prior samples for an image")
    sample.add_argument("--run", required=True)
    sample.add_argument("--input", required=True, help="HPUT file with an 'image' record, or a dataset directory")
    sample.add_argument("--index", type=int, default=0, help="Sample index when --input is a dataset")
    sample.add_argument("--num-samples", type=int, default=Config.DEFAULT_NUM_SAMPLES)
    sample.add_argument("--scales", help="Comma-separated sample|mean per latent scale, global first")
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True)

    # Reconstruct command
    rec = subparsers.add_parser("reconstruct", help="Reconstruct a target from posterior means")
    rec.add_argument("--run", required=True)
    rec.add_argument("--input", required=True)
    rec.add_argument("--target", required=True, help="HPUT file with a 'target' record, or a dataset directory")
    rec.add_argument("--index", type=int, default=0)
    rec.add_argument("--out", required=True)

    # Evaluate command
    ev = subparsers.add_parser("evaluate", help="Evaluate a run on a dataset")
    ev.add_argument("--run", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--metrics", default="ged2,hiou,iourec", help=f"Comma-separated subset of {','.join(METRICS)}")
    ev.add_argument("--num-samples", type=int, default=Config.DEFAULT_NUM_SAMPLES)
    ev.add_argument("--bootstrap", type=int, default=Config.DEFAULT_BOOTSTRAP)
    ev.add_argument("--scales", help="Latent plan as for 'sample'")
    ev.add_argument("--alpha", type=int, help="Clustering threshold (default: --num-samples)")
    ev.add_argument("--seed", type=int, default=0)

    # Cluster command
    cl = subparsers.add_parser("cluster", help="Cluster samples into an instance segmentation")
    cl.add_argument("--samples", required=True, help="Output directory of 'sample' or its samples.hput")
    cl.add_argument("--alpha", type=int)
    cl.add_argument("--erosion", type=int, default=5)
    cl.add_argument("--majority", type=int, default=11)
    cl.add_argument("--fallback", choices=[f.value for f in Fallback], default=Fallback.KEEP_LABEL.value)
    cl.add_argument("--num-classes", type=int)
    cl.add_argument("--seed", type=int, default=0)
    cl.add_argument("--out", required=True)

    # Export command
    ex = subparsers.add_parser("export", help="Export curves and figure panels of a run")
    ex.add_argument("--run", required=True)
    ex.add_argument("--curves", help="Destination CSV")
    ex.add_argument("--panels", help="Destination directory for PPM/PGM panels")
    ex.add_argument("--data", help="Dataset to draw panel images from")
    ex.add_argument("--count", type=int, default=4)
    ex.add_argument("--num-samples", type=int, default=4)
    ex.add_argument("--seed", type=int, default=0)
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "cluster": cmd_cluster,
    "export": cmd_export,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "export" and args.panels and not args.data:
        parser.print_usage(sys.stderr)
        print("hpunet export: error: --panels needs --data", file=sys.stderr)
        return 2

    Config.ensure_directories()
    try:
        COMMANDS[args.command](args)
    except (HpuNetError, OSError, ValueError, KeyError) as e:
        logger.exception("%s failed", args.command)
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
