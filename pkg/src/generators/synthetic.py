"""
Synthetic image pairs with known ground-truth flow.

Frames are sampled from a larger Gaussian-smoothed random canvas so that the
shifted frame has real texture at its borders. Frame1 is rendered as
frame1(x) = canvas(x - v(x)) with bilinear interpolation, which makes
frame1(x + v) = frame0(x) for piecewise-constant flow.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from src.core.grid import FlowField, ImagePair, ScalarGrid
from src.formats.flo import write_flo
from src.formats.images import write_frame

logger = logging.getLogger(__name__)

KINDS = ("translate", "two-region", "brightness", "gdim")
MARGIN = 8


@dataclass(frozen=True)
class SyntheticSequence:
    name: str
    pair: ImagePair
    gt: FlowField

    def save(self, directory: Union[str, Path]) -> Tuple[Path, Path, Path]:
        """Write frame0.png, frame1.png and flow.flo; returns the three paths."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = (out / "frame0.png", out / "frame1.png", out / "flow.flo")
        write_frame(paths[0], self.pair.frame0)
        write_frame(paths[1], self.pair.frame1)
        write_flo(paths[2], self.gt)
        logger.info("[Synth] wrote %s sequence to %s", self.name, out)
        return paths


def texture_canvas(height: int, width: int, seed: int = 0, sigma: float = 2.0, low: float = 0.1, high: float = 0.8) -> ScalarGrid:
    """Smoothed uniform noise rescaled to [low, high]."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.random((height, width)), sigma, mode="reflect")
    noise -= noise.min()
    noise /= noise.max()
    return low + (high - low) * noise


def render_pair(canvas: ScalarGrid, flow: FlowField, margin: int = MARGIN) -> ImagePair:
    h, w = flow.shape
    jj, ii = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    frame0 = canvas[margin:margin + h, margin:margin + w].copy()
    coords = [jj + margin - flow.vy, ii + margin - flow.vx]
    frame1 = ndimage.map_coordinates(canvas, coords, order=1, mode="nearest")
    return ImagePair(frame0, np.clip(frame1, 0.0, 1.0))


def translate(height: int = 64, width: int = 64, shift: Tuple[float, float] = (1.25, 0.75), seed: int = 0) -> SyntheticSequence:
    canvas = texture_canvas(height + 2 * MARGIN, width + 2 * MARGIN, seed)
    gt = FlowField.constant(height, width, *shift)
    return SyntheticSequence("translate", render_pair(canvas, gt), gt)


def two_region(
    height: int = 64,
    width: int = 64,
    left: Tuple[float, float] = (1.0, 0.0),
    right: Tuple[float, float] = (-1.0, 0.0),
    seed: int = 0,
) -> SyntheticSequence:
    """Left half moves by ``left``, right half by ``right`` (vertical boundary)."""
    canvas = texture_canvas(height + 2 * MARGIN, width + 2 * MARGIN, seed)
    vx = np.full((height, width), left[0])
    vy = np.full((height, width), left[1])
    vx[:, width // 2:] = right[0]
    vy[:, width // 2:] = right[1]
    gt = FlowField(vx, vy)
    return SyntheticSequence("two-region", render_pair(canvas, gt), gt)


def brightness(
    height: int = 64,
    width: int = 64,
    shift: Tuple[float, float] = (1.25, 0.75),
    offset: float = 0.1,
    seed: int = 0,
) -> SyntheticSequence:
    """Translation with an additive intensity offset on frame1."""
    base = translate(height, width, shift, seed)
    frame1 = np.clip(base.pair.frame1 + offset, 0.0, 1.0)
    return SyntheticSequence("brightness", ImagePair(base.pair.frame0, frame1), base.gt)


def gdim(
    height: int = 64,
    width: int = 64,
    shift: Tuple[float, float] = (0.0, 0.0),
    contrast: float = 0.05,
    offset: float = 0.02,
    seed: int = 0,
) -> SyntheticSequence:
    """frame1 = (1 + contrast) * shifted frame0 + offset."""
    base = translate(height, width, shift, seed)
    frame1 = np.clip((1.0 + contrast) * base.pair.frame1 + offset, 0.0, 1.0)
    return SyntheticSequence("gdim", ImagePair(base.pair.frame0, frame1), base.gt)


def generate(kind: str, height: int = 64, width: int = 64, seed: int = 0, **kwargs) -> SyntheticSequence:
    makers = {"translate": translate, "two-region": two_region, "brightness": brightness, "gdim": gdim}
    try:
        maker = makers[kind]
    except KeyError:
        raise ValueError(f"unknown synthetic sequence '{kind}', choose from {', '.join(KINDS)}") from None
    return maker(height=height, width=width, seed=seed, **kwargs)
