"""
Measurement-ratio sweep: MEPE as a function of m/n for each selection scheme.
"""
import logging
from typing import Iterable, Sequence

import pandas as pd
from tqdm import tqdm

from src.config import SolverConfig
from src.core.errors import ConfigError
from src.core.evaluation import mepe
from src.core.grid import FlowField, ImagePair
from src.core.selection import SelectionScheme
from src.core.solver import solve_coarse_to_fine

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["scheme", "ratio", "repetition", "mepe", "wall_ms"]
AGGREGATE_REPETITION = -1


def repetitions_for(scheme: str, ratio: float, repetitions: int) -> int:
    """Deterministic schemes (and the full mask) only need one run."""
    if scheme in ("full", "significant") or ratio >= 1.0:
        return 1
    return repetitions


def sweep_ratios(
    pair: ImagePair,
    gt: FlowField,
    config: SolverConfig,
    ratios: Sequence[float],
    schemes: Iterable[str],
    repetitions: int = 5,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Run the estimator for every (scheme, ratio, repetition) and return one
    row per run plus one aggregate row (repetition -1, mean MEPE and time)
    per (scheme, ratio). Repetition r uses seed ``config.scheme.seed + r``.
    """
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if not ratios:
        raise ConfigError("sweep needs at least one ratio")

    jobs = []
    for scheme in schemes:
        for ratio in ratios:
            for rep in range(repetitions_for(scheme, ratio, repetitions)):
                jobs.append((scheme, float(ratio), rep))

    base = config.scheme
    rows = []
    for scheme, ratio, rep in tqdm(jobs, desc="[Sweep] runs", disable=not progress):
        try:
            sel = SelectionScheme(
                kind=scheme, ratio=ratio, significant_fraction=base.significant_fraction, seed=base.seed + rep
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e
        estimate = solve_coarse_to_fine(pair, config.model_copy(update={"scheme": sel}))
        err = mepe(estimate.flow, gt)
        logger.info("[Sweep] %s ratio=%.3f rep=%d: MEPE %.4f (%.0f ms)", scheme, ratio, rep, err, estimate.wall_ms)
        rows.append({"scheme": scheme, "ratio": ratio, "repetition": rep, "mepe": err, "wall_ms": estimate.wall_ms})

    runs = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    agg = runs.groupby(["scheme", "ratio"], sort=False, as_index=False)[["mepe", "wall_ms"]].mean()
    agg["repetition"] = AGGREGATE_REPETITION
    table = pd.concat([runs, agg[SWEEP_COLUMNS]], ignore_index=True)
    table["repetition"] = table["repetition"].astype(int)
    return table


def aggregate_rows(table: pd.DataFrame) -> pd.DataFrame:
    return table[table["repetition"] == AGGREGATE_REPETITION].reset_index(drop=True)
