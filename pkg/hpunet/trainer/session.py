"""Run directories: logging setup and the file-location banner."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Union

from hpunet.config import Config

CONFIG_NAME = "config.txt"
CURVES_NAME = "curves.csv"
DEBUG_LOG_NAME = "train_debug.log"
FINAL_NAME = "final.hput"


def checkpoint_name(iteration: int) -> str:
    return f"checkpoint_{iteration:06d}.hput"


def run_files(run_dir: Union[str, Path]) -> Dict[str, Path]:
    run_dir = Path(run_dir)
    return {
        "config": run_dir / CONFIG_NAME,
        "curves": run_dir / CURVES_NAME,
        "final": run_dir / FINAL_NAME,
        "debug_log": run_dir / DEBUG_LOG_NAME,
    }


def start_run(run_dir: Union[str, Path], announce: bool = True,
              log_name: str = DEBUG_LOG_NAME) -> Dict[str, Path]:
    """Create the run directory and route logging into its debug log."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    files = run_files(run_dir)

    # Set up logging to file for debugging
    files["debug_log"] = run_dir / log_name
    handlers = [logging.FileHandler(files["debug_log"])]

    # Optionally add console handler
    if Config.DEBUG_LOG_TO_CONSOLE:
        handlers.append(logging.StreamHandler())

    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True  # Override any existing config
    )

    if announce:
        print("\n" + "="*60)
        print("Run File Locations:")
        print("="*60)
        print(f"Config:      {files['config']}")
        print(f"Curves:      {files['curves']}")
        print(f"Checkpoints: {run_dir / 'checkpoint_*.hput'}")
        print(f"Final:       {files['final']}")
        print(f"Debug log:   {files['debug_log']}")
        print("="*60 + "\n")
    return files
