"""Figure panels as binary PPM / PGM files and curve CSV export."""
from __future__ import annotations

import logging
import shutil
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

# Label id k is drawn with PALETTE[k % 16]; label 0 is black.
PALETTE = np.array([
    (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25),
    (0, 130, 200), (245, 130, 48), (145, 30, 180), (70, 240, 240),
    (240, 50, 230), (210, 245, 60), (250, 190, 212), (0, 128, 128),
    (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
], dtype=np.uint8)


def colorize(labels: np.ndarray) -> np.ndarray:
    """(H, W) integer labels to (H, W, 3) uint8 colours."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"Expected an (H, W) label map, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise ValueError("Label maps must be non-negative")
    return PALETTE[labels % len(PALETTE)]


def ppm_bytes(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def pgm_bytes(image: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None) -> bytes:
    """Grayscale bytes, linearly mapping [lo, hi] (default: the image range) to 0..255."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"Expected an (H, W) image, got shape {image.shape}")
    lo = float(image.min()) if lo is None else lo
    hi = float(image.max()) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    gray = np.clip(np.round((image - lo) * scale), 0, 255).astype(np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes()


def write_label_panel(path: Union[str, Path], labels: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ppm_bytes(colorize(labels)))
    return path


def write_image_panel(path: Union[str, Path], image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pgm_bytes(image))
    return path


def export_panels(out_dir: Union[str, Path], prefix: str, image: Optional[np.ndarray] = None,
                  label_maps: Sequence[np.ndarray] = ()) -> List[Path]:
    """`{prefix}_image.pgm` (first input channel) and `{prefix}_{i:02d}.ppm` per label map."""
    out_dir = Path(out_dir)
    written = []
    if image is not None:
        first = image[0] if image.ndim == 3 else image
        written.append(write_image_panel(out_dir / f"{prefix}_image.pgm", first))
    for i, labels in enumerate(label_maps):
        written.append(write_label_panel(out_dir / f"{prefix}_{i:02d}.ppm", labels))
    logger.debug("Wrote %d panels with prefix %s to %s", len(written), prefix, out_dir)
    return written


def export_curves(curves_path: Union[str, Path], out_path: Union[str, Path]) -> Path:
    """Copy a run's curves CSV to `out_path`."""
    curves_path = Path(curves_path)
    if not curves_path.exists():
        raise FileNotFoundError(f"No curves file at {curves_path}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(curves_path, out_path)
    return out_path
