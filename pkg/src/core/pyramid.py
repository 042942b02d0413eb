"""
Coarse-to-fine pyramid of image pairs and flow up-sampling between levels.
"""
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.core.errors import GridError
from src.core.grid import FlowField, ImagePair, gaussian_smooth, resample_bilinear


@dataclass(frozen=True)
class Pyramid:
    """Image pairs ordered from coarsest to finest."""

    levels: List[ImagePair]
    scale_factor: float

    def __post_init__(self):
        if not self.levels:
            raise GridError("a pyramid needs at least one level")
        if not 0.0 < self.scale_factor < 1.0:
            raise GridError(f"scale factor must lie in (0, 1), got {self.scale_factor}")

    @property
    def finest(self) -> ImagePair:
        return self.levels[-1]

    @property
    def coarsest(self) -> ImagePair:
        return self.levels[0]

    def shapes(self) -> List[Tuple[int, int]]:
        return [level.shape for level in self.levels]


def scaled_size(n: int, scale: float) -> int:
    # tolerance keeps e.g. 70 * 0.7 at 49 despite binary rounding
    return int(math.floor(n * scale + 1e-9))


def level_sizes(height: int, width: int, scale: float, min_side: int) -> List[Tuple[int, int]]:
    """(height, width) per level, finest first."""
    sizes = [(height, width)]
    while True:
        h, w = sizes[-1]
        nh, nw = scaled_size(h, scale), scaled_size(w, scale)
        if nh < min_side or nw < min_side:
            return sizes
        sizes.append((nh, nw))


def antialias_sigma(scale: float) -> float:
    return max(0.5, math.sqrt(1.0 / scale ** 2 - 1.0))


def downsample(g: np.ndarray, new_h: int, new_w: int, scale: float) -> np.ndarray:
    sigma = antialias_sigma(scale)
    size = 2 * int(math.ceil(2.0 * sigma)) + 1
    return resample_bilinear(gaussian_smooth(g, sigma, size), new_w, new_h)


def build_pyramid(pair: ImagePair, scale: float, min_side: int = 16) -> Pyramid:
    """
    Smooth-and-subsample pyramid; stops before any side would drop below min_side.

    Each coarser level is computed from the next finer one with floor rounding.
    """
    if not 0.0 < scale < 1.0:
        raise GridError(f"pyramid scale must lie in (0, 1), got {scale}")
    h, w = pair.shape
    if h < min_side or w < min_side:
        raise GridError(f"image {w}x{h} is smaller than the minimum side {min_side}")

    finest_first = [pair]
    for nh, nw in level_sizes(h, w, scale, min_side)[1:]:
        prev = finest_first[-1]
        f0 = np.clip(downsample(prev.frame0, nh, nw, scale), 0.0, 1.0)
        f1 = np.clip(downsample(prev.frame1, nh, nw, scale), 0.0, 1.0)
        finest_first.append(ImagePair(f0, f1))

    return Pyramid(levels=finest_first[::-1], scale_factor=scale)


def upsample_flow(flow: FlowField, new_h: int, new_w: int) -> FlowField:
    """Resize a flow to a finer grid; components scale with the size ratio."""
    h, w = flow.shape
    vx = resample_bilinear(flow.vx, new_w, new_h) * (new_w / w)
    vy = resample_bilinear(flow.vy, new_w, new_h) * (new_h / h)
    return FlowField(vx, vy)
