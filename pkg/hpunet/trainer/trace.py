"""Training curves: CSV rows and the GECO rise-then-drop check."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

BASE_COLUMNS = ["step", "ce_per_pixel", "lambda", "lr", "kl_total"]


def curve_header(num_scales: int) -> List[str]:
    return BASE_COLUMNS + [f"kl_scale_{i}" for i in range(num_scales)]


def metrics_row(metrics: Dict) -> List:
    return ([metrics["step"], metrics["ce_per_pixel"], metrics["lambda"], metrics["lr"],
             metrics["kl_total"]] + list(metrics["kl_per_scale"]))


def write_curves(path: Union[str, Path], rows: Sequence[Dict], num_scales: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(curve_header(num_scales))
        for r in rows:
            writer.writerow(metrics_row(r))


def read_curves(path: Union[str, Path]) -> List[Dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for raw in csv.DictReader(f):
            scales = sorted((k for k in raw if k.startswith("kl_scale_")), key=lambda k: int(k[9:]))
            rows.append({
                "step": int(raw["step"]),
                "ce_per_pixel": float(raw["ce_per_pixel"]),
                "lambda": float(raw["lambda"]),
                "lr": float(raw["lr"]),
                "kl_total": float(raw["kl_total"]),
                "kl_per_scale": [float(raw[k]) for k in scales],
            })
    return rows


@dataclass
class GecoTraceReport:
    crossing_step: Optional[int]
    peak_step: int
    peak_lambda: float
    final_lambda: float

    @property
    def passed(self) -> bool:
        return (self.crossing_step is not None and self.peak_step >= self.crossing_step
                and self.final_lambda < self.peak_lambda)


def check_geco_trace(rows: Sequence[Dict], kappa: float) -> GecoTraceReport:
    """Locate the first step where ce_per_pixel reaches kappa and the lambda peak.

    A healthy run has its lambda peak at or after the crossing and ends
    below the peak.
    """
    if not rows:
        raise ValueError("Empty training trace")
    crossing = next((r["step"] for r in rows if r["ce_per_pixel"] <= kappa), None)
    peak = max(rows, key=lambda r: r["lambda"])
    return GecoTraceReport(crossing_step=crossing, peak_step=peak["step"],
                           peak_lambda=peak["lambda"], final_lambda=rows[-1]["lambda"])
