"""
Middlebury training data from a user-supplied directory.

Expected layout:
    <root>/other-data/<Seq>/frame10.png, frame11.png
    <root>/other-gt-flow/<Seq>/flow10.flo
Nothing is downloaded.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd
from tqdm import tqdm

from src.config import SolverConfig, with_lambda
from src.core.errors import ConfigError
from src.core.evaluation import mepe
from src.core.grid import FlowField, ImagePair
from src.core.solver import solve_coarse_to_fine
from src.formats.flo import read_flo
from src.formats.images import read_pair

logger = logging.getLogger(__name__)

TRAINING_SEQUENCES = (
    "Dimetrodon", "Grove2", "Grove3", "Hydrangea",
    "RubberWhale", "Urban2", "Urban3", "Venus",
)


@dataclass(frozen=True)
class MiddleburySequence:
    name: str
    frame0: Path
    frame1: Path
    gt: Path

    def load(self) -> Tuple[ImagePair, FlowField]:
        return read_pair(self.frame0, self.frame1), read_flo(self.gt)


def list_sequences(root: Union[str, Path]) -> List[MiddleburySequence]:
    """All sequences under ``root`` that have both frames and ground truth."""
    root = Path(root)
    data_dir, gt_dir = root / "other-data", root / "other-gt-flow"
    if not data_dir.is_dir() or not gt_dir.is_dir():
        raise ConfigError(f"{root} does not contain other-data/ and other-gt-flow/")

    found = []
    for seq_dir in sorted(p for p in data_dir.iterdir() if p.is_dir()):
        seq = MiddleburySequence(
            name=seq_dir.name,
            frame0=seq_dir / "frame10.png",
            frame1=seq_dir / "frame11.png",
            gt=gt_dir / seq_dir.name / "flow10.flo",
        )
        missing = [p.name for p in (seq.frame0, seq.frame1, seq.gt) if not p.is_file()]
        if missing:
            logger.warning("[Middlebury] skipping %s, missing %s", seq.name, ", ".join(missing))
            continue
        found.append(seq)
    absent = [name for name in TRAINING_SEQUENCES if not (data_dir / name).is_dir()]
    if absent:
        logger.warning("[Middlebury] training sequences not under %s: %s", data_dir, ", ".join(absent))
    logger.info("[Middlebury] %d usable sequences in %s", len(found), root)
    return found


def spot_check(
    root: Union[str, Path],
    config: SolverConfig,
    lambdas: Optional[Sequence[float]] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """
    MEPE per sequence. With ``lambdas`` every sequence keeps its best value
    (per-sequence tuning); otherwise config.lam is used throughout.
    """
    sequences = list_sequences(root)
    if not sequences:
        raise ConfigError(f"no usable Middlebury sequences under {root}")
    configs = [with_lambda(config, lam) for lam in lambdas] if lambdas else [config]

    rows = []
    for seq in tqdm(sequences, desc="[Middlebury] sequences", disable=not progress):
        pair, gt = seq.load()
        best = None
        for cfg in configs:
            err = mepe(solve_coarse_to_fine(pair, cfg).flow, gt)
            if best is None or err < best[1]:
                best = (cfg.lam, err)
        logger.info("[Middlebury] %s: MEPE %.4f (lambda %.4g)", seq.name, best[1], best[0])
        rows.append({"sequence": seq.name, "lambda": best[0], "mepe": best[1]})
    return pd.DataFrame(rows, columns=["sequence", "lambda", "mepe"])
