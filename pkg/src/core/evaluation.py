"""
Evaluation: mean end-point error, Otsu binarization, ground-truth sparsity
analysis and the Middlebury flow colour coding.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.errors import GridError
from src.core.grid import FlowField, ScalarGrid, forward_diff_x, forward_diff_y
from src.core.regularizer import diff_xy, diff_yx

logger = logging.getLogger(__name__)

# .flo marks unknown flow with huge components
UNKNOWN_FLOW_THRESHOLD = 1e9
OTSU_BINS = 256


def valid_flow_mask(v: FlowField) -> np.ndarray:
    return (
        np.isfinite(v.vx) & np.isfinite(v.vy)
        & (np.abs(v.vx) <= UNKNOWN_FLOW_THRESHOLD)
        & (np.abs(v.vy) <= UNKNOWN_FLOW_THRESHOLD)
    )


def endpoint_error(v: FlowField, v_gt: FlowField) -> ScalarGrid:
    """Per-pixel end-point error; NaN where the ground truth is unknown."""
    if v.shape != v_gt.shape:
        raise GridError(f"flow {v.shape} and ground truth {v_gt.shape} differ in size")
    valid = valid_flow_mask(v_gt)
    gx = np.where(valid, v_gt.vx, 0.0)
    gy = np.where(valid, v_gt.vy, 0.0)
    err = np.hypot(v.vx - gx, v.vy - gy)
    return np.where(valid, err, np.nan)


def mepe(v: FlowField, v_gt: FlowField) -> float:
    """Mean end-point error over the pixels with known ground truth."""
    err = endpoint_error(v, v_gt)
    counted = np.isfinite(err)
    if not counted.any():
        raise GridError("ground truth has no valid pixels")
    return float(err[counted].mean())


# ---------------------------------------------------------------------------
# Otsu
# ---------------------------------------------------------------------------

def _otsu_bins(g: np.ndarray) -> Tuple[np.ndarray, float, float]:
    lo, hi = float(g.min()), float(g.max())
    norm = (g - lo) / (hi - lo)
    bins = np.minimum((norm * OTSU_BINS).astype(np.int64), OTSU_BINS - 1)
    return bins, lo, hi


def _otsu_split(bins: np.ndarray) -> int:
    """Split index t maximizing the between-class variance; lowest t on ties."""
    p = np.bincount(bins.ravel(), minlength=OTSU_BINS) / bins.size
    levels = np.arange(OTSU_BINS)
    omega = np.cumsum(p)[:-1]
    mu = np.cumsum(p * levels)[:-1]
    mu_total = float(np.sum(p * levels))
    denom = omega * (1.0 - omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        between = np.where(denom > 0, (mu_total * omega - mu) ** 2 / denom, 0.0)
    return int(np.argmax(between))


def otsu_binarize(g: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Returns (nonzero map, threshold). A constant input has no nonzero pixels
    and its value as threshold.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.size == 0 or not np.all(np.isfinite(g)):
        raise GridError("Otsu needs a non-empty finite grid")
    if g.max() == g.min():
        return np.zeros(g.shape, dtype=bool), float(g.min())
    bins, lo, hi = _otsu_bins(g)
    t = _otsu_split(bins)
    return bins > t, lo + (t + 1) / OTSU_BINS * (hi - lo)


def otsu_threshold(g: ScalarGrid) -> float:
    return otsu_binarize(g)[1]


# ---------------------------------------------------------------------------
# sparsity
# ---------------------------------------------------------------------------

DERIVATIVES = {
    "x": forward_diff_x,
    "y": forward_diff_y,
    "xy": diff_xy,
    "yx": diff_yx,
}
MAP_NAMES = ("x", "y", "xy", "yx", "grad")


@dataclass
class SparsityReport:
    """
    Nonzero fractions of the binarized derivative-magnitude maps.

    Keys are "<channel>/<map>" with channel in vx, vy, coupled and map in
    x, y, xy, yx, grad.
    """

    fractions: Dict[str, float]
    thresholds: Dict[str, float]
    maps: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def fraction(self, map_name: str, channel: str = "coupled") -> float:
        return self.fractions[f"{channel}/{map_name}"]

    @property
    def partials_sparser(self) -> bool:
        """Every partial-derivative map at least as sparse as the gradient map, per channel."""
        for channel in ("vx", "vy", "coupled"):
            grad = self.fraction("grad", channel)
            if any(self.fraction(m, channel) > grad for m in ("x", "y", "xy", "yx")):
                return False
        return True

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for key, frac in self.fractions.items():
            channel, name = key.split("/")
            rows.append({"channel": channel, "map": name, "fraction": frac, "threshold": self.thresholds[key]})
        return pd.DataFrame(rows, columns=["channel", "map", "fraction", "threshold"])


def magnitude_maps(v: FlowField) -> Dict[str, np.ndarray]:
    maps: Dict[str, np.ndarray] = {}
    parts = {name: (op(v.vx), op(v.vy)) for name, op in DERIVATIVES.items()}
    for name, (a, b) in parts.items():
        maps[f"vx/{name}"] = np.abs(a)
        maps[f"vy/{name}"] = np.abs(b)
        maps[f"coupled/{name}"] = np.hypot(a, b)
    (ax, bx), (ay, by) = parts["x"], parts["y"]
    maps["vx/grad"] = np.hypot(ax, ay)
    maps["vy/grad"] = np.hypot(bx, by)
    maps["coupled/grad"] = np.sqrt(ax ** 2 + ay ** 2 + bx ** 2 + by ** 2)
    return maps


def _clamped_shift(mask: np.ndarray, dj: int, di: int) -> np.ndarray:
    """mask(i + di, j + dj) with indices clamped to the grid."""
    h, w = mask.shape
    rows = np.minimum(np.arange(h) + dj, h - 1)
    cols = np.minimum(np.arange(w) + di, w - 1)
    return mask[np.ix_(rows, cols)]


def stencil_masks(valid: np.ndarray) -> Dict[str, np.ndarray]:
    """Per map, the pixels whose whole difference stencil has known ground truth."""
    right = _clamped_shift(valid, 0, 1)
    down = _clamped_shift(valid, 1, 0)
    diag = _clamped_shift(valid, 1, 1)
    return {
        "x": valid & right,
        "y": valid & down,
        "xy": valid & right & diag,
        "yx": valid & down & diag,
        "grad": valid & right & down,
    }


def sparsity_report(v_gt: FlowField) -> SparsityReport:
    """
    Binarize each magnitude map with its own Otsu threshold and count the
    nonzero pixels. A pixel is counted only when every pixel its difference
    stencil reads has known ground truth.
    """
    valid = valid_flow_mask(v_gt)
    if not valid.any():
        raise GridError("ground truth has no valid pixels")
    clean = FlowField(np.where(valid, v_gt.vx, 0.0), np.where(valid, v_gt.vy, 0.0))
    counted = stencil_masks(valid)

    fractions, thresholds, binary = {}, {}, {}
    for key, mag in magnitude_maps(clean).items():
        mask = counted[key.split("/")[1]]
        full = np.zeros(mag.shape, dtype=bool)
        if mask.any():
            nonzero, thr = otsu_binarize(mag[mask])
            full[mask] = nonzero
            fractions[key] = float(nonzero.mean())
        else:
            logger.warning("[Sparsity] no pixel with a fully known stencil for %s", key)
            thr = 0.0
            fractions[key] = 0.0
        thresholds[key] = thr
        binary[key] = full

    report = SparsityReport(fractions, thresholds, binary)
    if not report.partials_sparser:
        logger.warning("[Sparsity] a partial-derivative map is denser than the gradient-magnitude map")
    return report


# ---------------------------------------------------------------------------
# colour coding
# ---------------------------------------------------------------------------

def make_color_wheel() -> np.ndarray:
    """55 x 3 Middlebury wheel (RY, YG, GC, CB, BM, MR sectors)."""
    sectors = [(15, "RY"), (6, "YG"), (4, "GC"), (11, "CB"), (13, "BM"), (6, "MR")]
    ncols = sum(n for n, _ in sectors)
    wheel = np.zeros((ncols, 3))
    col = 0
    for n, name in sectors:
        ramp = np.floor(255.0 * np.arange(n) / n)
        rows = slice(col, col + n)
        if name == "RY":
            wheel[rows, 0] = 255
            wheel[rows, 1] = ramp
        elif name == "YG":
            wheel[rows, 0] = 255 - ramp
            wheel[rows, 1] = 255
        elif name == "GC":
            wheel[rows, 1] = 255
            wheel[rows, 2] = ramp
        elif name == "CB":
            wheel[rows, 1] = 255 - ramp
            wheel[rows, 2] = 255
        elif name == "BM":
            wheel[rows, 2] = 255
            wheel[rows, 0] = ramp
        else:
            wheel[rows, 2] = 255 - ramp
            wheel[rows, 0] = 255
        col += n
    return wheel


COLOR_WHEEL = make_color_wheel()


def auto_max_magnitude(v: FlowField) -> float:
    """99th percentile of the valid flow magnitude."""
    valid = valid_flow_mask(v)
    if not valid.any():
        return 1.0
    m = float(np.percentile(np.hypot(v.vx[valid], v.vy[valid]), 99))
    return m if m > 0 else 1.0


def colorize_flow(v: FlowField, max_mag: Optional[float] = None) -> np.ndarray:
    """
    (H, W, 3) uint8 image. Hue encodes direction, saturation the magnitude
    relative to ``max_mag`` (auto when None). Zero flow is white, unknown
    flow black.
    """
    if max_mag is None:
        max_mag = auto_max_magnitude(v)
    if not max_mag > 0:
        raise ValueError(f"max_mag must be positive, got {max_mag}")
    valid = valid_flow_mask(v)
    u = np.where(valid, v.vx, 0.0) / max_mag
    w = np.where(valid, v.vy, 0.0) / max_mag

    ncols = COLOR_WHEEL.shape[0]
    rad = np.hypot(u, w)
    angle = np.arctan2(-w, -u) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = (k0 + 1) % ncols
    f = fk - k0

    img = np.zeros(v.shape + (3,), dtype=np.uint8)
    inside = rad <= 1.0
    for ch in range(3):
        c0 = COLOR_WHEEL[k0, ch] / 255.0
        c1 = COLOR_WHEEL[k1, ch] / 255.0
        col = (1.0 - f) * c0 + f * c1
        col = np.where(inside, 1.0 - rad * (1.0 - col), col * 0.75)
        img[..., ch] = np.floor(255.0 * col).astype(np.uint8)
    img[~valid] = 0
    return img


def error_image(err: ScalarGrid, max_err: Optional[float] = None) -> np.ndarray:
    """Endpoint-error map as 8-bit grayscale, unknown pixels black."""
    finite = np.isfinite(err)
    if max_err is None:
        max_err = float(err[finite].max()) if finite.any() else 1.0
    scale = max_err if max_err > 0 else 1.0
    out = np.clip(np.where(finite, err, 0.0) / scale, 0.0, 1.0)
    return np.round(out * 255.0).astype(np.uint8)
