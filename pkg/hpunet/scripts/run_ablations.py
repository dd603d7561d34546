#!/usr/bin/env python3
"""Train and evaluate the latent-scale and top-k ablations on one dataset.

Variants: full model, global latent only, local latent only, and full model
with top-k selection disabled (k = 1). The global-only model keeps the
latent count of the full hierarchy, all of it at the coarsest grid, and
trains against a looser reconstruction target. Results land in one CSV
table with a row per (variant, seed, metric).
"""
import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from hpunet.config import Config
from hpunet.errors import HpuNetError
from hpunet.io.config_file import RunConfig, parse_config, render_config
from hpunet.metrics.evaluate import EvalSettings, evaluate_dataset
from hpunet.synthdata.manifest import load_dataset
from hpunet.trainer.loop import run_training
from hpunet.trainer.session import start_run

logger = logging.getLogger(__name__)

VARIANTS = ("full", "global_only", "local_only", "topk_disabled")
TABLE_HEADER = ["variant", "seed", "metric", "mean", "std", "images"]
GLOBAL_ONLY_KAPPA = 0.15


def variant_config(base: RunConfig, variant: str, seed: int,
                   global_kappa: Optional[float] = GLOBAL_ONLY_KAPPA) -> RunConfig:
    """Run configuration of one ablation variant.

    Args:
        base: Configuration of the full model.
        variant: One of VARIANTS.
        seed: Training seed.
        global_kappa: Reconstruction target of the global-only variant; None
            keeps the base kappa.

    Returns:
        The validated configuration.
    """
    levels = base.model.latent_scales
    model, train = base.model, dataclasses.replace(base.train, seed=seed)
    if variant == "global_only":
        model = dataclasses.replace(model, global_latents=model.hierarchy_latents(),
                                    latent_enable=tuple(i == 0 for i in range(levels)))
        if global_kappa is not None:
            train = dataclasses.replace(train, kappa=global_kappa)
    elif variant == "local_only":
        model = dataclasses.replace(model, latent_enable=tuple(i == levels - 1 for i in range(levels)))
    elif variant == "topk_disabled":
        train = dataclasses.replace(train, topk_k=1.0)
    elif variant != "full":
        raise ValueError(f"Unknown variant {variant!r}; choose from {VARIANTS}")
    return RunConfig(model, train).validate()


def run_ablations(base: RunConfig, data_dir: str, out_dir: Path, variants: Sequence[str],
                  seeds: Sequence[int], metrics: Sequence[str], held_out: int,
                  settings: EvalSettings, global_kappa: Optional[float] = GLOBAL_ONLY_KAPPA) -> List[Dict]:
    train_set, eval_set = load_dataset(data_dir).split(held_out)
    rows: List[Dict] = []
    for variant in variants:
        for seed in seeds:
            config = variant_config(base, variant, seed, global_kappa)
            run_dir = out_dir / variant / f"seed{seed}"
            logger.info("Training variant %s seed %d in %s", variant, seed, run_dir)
            print(f"--- {variant} (seed {seed}) ---")
            final, _ = run_training(config.model, config.train, train_set, run_dir=run_dir)
            report = evaluate_dataset(final.params, eval_set, metrics, settings)
            print(report.table())
            for s in report.summaries:
                rows.append({"variant": variant, "seed": seed, "metric": s.name,
                             "mean": s.mean, "std": s.std, "images": s.count})
    return rows


def write_table(path: Path, rows: Sequence[Dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=TABLE_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="hpunet-ablate", description="Latent-scale and top-k ablations")
    parser.add_argument("--data", required=True, help="Dataset directory")
    parser.add_argument("--config", help="Base run configuration (default: built-in defaults)")
    parser.add_argument("--out", required=True, help="Directory for runs and the results table")
    parser.add_argument("--variants", default=",".join(VARIANTS))
    parser.add_argument("--seeds", default="0", help="Comma-separated training seeds")
    parser.add_argument("--metrics", default="ged2,hiou,iourec")
    parser.add_argument("--held-out", type=int, default=16, help="Images kept out of training for evaluation")
    parser.add_argument("--num-samples", type=int, default=Config.DEFAULT_NUM_SAMPLES)
    parser.add_argument("--bootstrap", type=int, default=Config.DEFAULT_BOOTSTRAP)
    parser.add_argument("--global-kappa", type=float, default=GLOBAL_ONLY_KAPPA,
                        help="Reconstruction target for the global-only variant (negative keeps the base kappa)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    out_dir = Path(args.out)
    start_run(out_dir, announce=False, log_name="ablations_debug.log")
    try:
        base = parse_config(Path(args.config).read_text(encoding="utf-8")) if args.config else RunConfig().validate()
        print(render_config(base))
        rows = run_ablations(
            base, args.data, out_dir,
            variants=[v.strip() for v in args.variants.split(",") if v.strip()],
            seeds=[int(s) for s in args.seeds.split(",") if s.strip()],
            metrics=[m.strip() for m in args.metrics.split(",") if m.strip()],
            held_out=args.held_out,
            settings=EvalSettings(num_samples=args.num_samples, bootstrap=args.bootstrap),
            global_kappa=args.global_kappa if args.global_kappa >= 0 else None,
        )
    except (HpuNetError, OSError, ValueError) as e:
        logger.exception("Ablations failed")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    write_table(out_dir / "ablations.csv", rows)
    print(f"Results table: {out_dir / 'ablations.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
