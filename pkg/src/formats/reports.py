"""
CSV tables and JSON run reports.
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from src.config import SolverConfig
from src.core.solver import FlowEstimate

PathLike = Union[str, Path]


def write_csv(table: pd.DataFrame, path: PathLike) -> None:
    """Header row, comma separated, '.' decimal point."""
    table.to_csv(Path(path), index=False, float_format="%.6g")


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(Path(path))


def run_report(
    config: SolverConfig,
    estimate: FlowEstimate,
    mepe: Optional[float] = None,
    inputs: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    flow = estimate.flow
    report: Dict[str, Any] = {
        "config": config.model_dump(mode="json", by_alias=True),
        "inputs": {k: str(v) for k, v in (inputs or {}).items() if v is not None},
        "size": {"width": flow.width, "height": flow.height},
        "levels": [level.to_dict() for level in estimate.levels],
        "wall_ms": estimate.wall_ms,
        "mean_flow": [float(flow.vx.mean()), float(flow.vy.mean())],
        "max_magnitude": float(flow.magnitude().max()),
    }
    if estimate.d is not None:
        report["gdim"] = {"mean_d": float(estimate.d.mean()), "mean_c": float(estimate.c.mean())}
    if mepe is not None:
        report["mepe"] = mepe
    return report


def write_json(report: Dict[str, Any], path: PathLike) -> None:
    Path(path).write_text(json.dumps(report, indent=2, ensure_ascii=False), encoding="utf-8")
