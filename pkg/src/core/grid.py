"""
Grid primitives: scalar grids, flow fields, image pairs and the discrete
operators everything else is built from.

Conventions:
- a ScalarGrid is a float64 numpy array of shape (height, width)
- (i, j) means (column, row), so g(i, j) is ``g[j, i]``
- forward differences use a replicate boundary: the trailing column/row is 0
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.core.errors import GridError

# type alias used in signatures and docs
ScalarGrid = np.ndarray


def as_grid(values, name: str = "grid") -> ScalarGrid:
    """Validate and convert to a finite 2-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise GridError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class FlowField:
    """Per-pixel motion (vx, vy) in pixels/frame."""

    vx: ScalarGrid
    vy: ScalarGrid

    def __post_init__(self):
        vx = as_grid(self.vx, "vx")
        vy = as_grid(self.vy, "vy")
        if vx.shape != vy.shape:
            raise GridError(f"flow components differ in shape: {vx.shape} vs {vy.shape}")
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, height: int, width: int, vx: float, vy: float) -> "FlowField":
        return cls(np.full((height, width), float(vx)), np.full((height, width), float(vy)))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FlowField":
        """Build from a (2, H, W) stack."""
        return cls(arr[0].copy(), arr[1].copy())

    @property
    def shape(self) -> Tuple[int, int]:
        return self.vx.shape

    @property
    def height(self) -> int:
        return self.vx.shape[0]

    @property
    def width(self) -> int:
        return self.vx.shape[1]

    def to_array(self) -> np.ndarray:
        return np.stack([self.vx, self.vy])

    def magnitude(self) -> ScalarGrid:
        return np.hypot(self.vx, self.vy)

    def __add__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.vx + other.vx, self.vy + other.vy)

    def __sub__(self, other: "FlowField") -> "FlowField":
        return FlowField(self.vx - other.vx, self.vy - other.vy)


@dataclass(frozen=True)
class ImagePair:
    """Two consecutive intensity frames normalized to [0, 1]."""

    frame0: ScalarGrid
    frame1: ScalarGrid

    def __post_init__(self):
        f0 = as_grid(self.frame0, "frame0")
        f1 = as_grid(self.frame1, "frame1")
        if f0.shape != f1.shape:
            raise GridError(f"frames differ in shape: {f0.shape} vs {f1.shape}")
        if f0.min() < 0.0 or f0.max() > 1.0 or f1.min() < 0.0 or f1.max() > 1.0:
            raise GridError("frame intensities must lie in [0, 1]")
        object.__setattr__(self, "frame0", f0)
        object.__setattr__(self, "frame1", f1)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.frame0.shape


# ---------------------------------------------------------------------------
# first-order differences and their exact transposes
# ---------------------------------------------------------------------------

def forward_diff_x(g: ScalarGrid) -> ScalarGrid:
    """g(i+1, j) - g(i, j); zero in the last column."""
    out = np.zeros_like(g, dtype=np.float64)
    out[:, :-1] = g[:, 1:] - g[:, :-1]
    return out


def forward_diff_y(g: ScalarGrid) -> ScalarGrid:
    """g(i, j+1) - g(i, j); zero in the last row."""
    out = np.zeros_like(g, dtype=np.float64)
    out[:-1, :] = g[1:, :] - g[:-1, :]
    return out


def adjoint_diff_x(b: ScalarGrid) -> ScalarGrid:
    """Transpose of forward_diff_x (a negative backward difference)."""
    out = np.zeros_like(b, dtype=np.float64)
    out[:, 1:] += b[:, :-1]
    out[:, :-1] -= b[:, :-1]
    return out


def adjoint_diff_y(b: ScalarGrid) -> ScalarGrid:
    """Transpose of forward_diff_y."""
    out = np.zeros_like(b, dtype=np.float64)
    out[1:, :] += b[:-1, :]
    out[:-1, :] -= b[:-1, :]
    return out


# ---------------------------------------------------------------------------
# filtering and resampling
# ---------------------------------------------------------------------------

def gaussian_kernel_1d(sigma: float, size: int) -> np.ndarray:
    if sigma <= 0:
        raise GridError(f"sigma must be positive, got {sigma}")
    if size < 1 or size % 2 == 0:
        raise GridError(f"kernel size must be odd and >= 1, got {size}")
    radius = size // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def gaussian_smooth(g: ScalarGrid, sigma: float, size: int) -> ScalarGrid:
    """
    Convolve with a normalized size x size Gaussian, replicate boundary.

    The 2-D kernel is the outer product of the 1-D kernel with itself, so the
    filter is applied separably.
    """
    k = gaussian_kernel_1d(sigma, size)
    out = ndimage.correlate1d(np.asarray(g, dtype=np.float64), k, axis=1, mode="nearest")
    return ndimage.correlate1d(out, k, axis=0, mode="nearest")


def resample_bilinear(g: ScalarGrid, new_w: int, new_h: int) -> ScalarGrid:
    """
    Bilinear resize to (new_h, new_w).

    Target pixel centers map to source coordinates (x + 0.5) * W / new_w - 0.5,
    clamped to the source bounds, so a same-size resize is the identity.
    """
    if new_w < 1 or new_h < 1:
        raise GridError(f"target size must be positive, got {new_w}x{new_h}")
    h, w = g.shape
    cols = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0, w - 1)
    rows = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0, h - 1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(np.asarray(g, dtype=np.float64), [rr, cc], order=1, mode="nearest")


def warp_backward(g: ScalarGrid, flow: FlowField) -> Tuple[ScalarGrid, np.ndarray]:
    """
    Sample g at (i + vx, j + vy).

    Returns the warped grid and a boolean out-of-bounds map. Samples that fall
    outside the grid are taken at the clamped coordinate and flagged.
    """
    if flow.shape != g.shape:
        raise GridError(f"flow shape {flow.shape} does not match grid shape {g.shape}")
    h, w = g.shape
    jj, ii = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    x = ii + flow.vx
    y = jj + flow.vy
    oob = (x < 0) | (x > w - 1) | (y < 0) | (y > h - 1)
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    warped = ndimage.map_coordinates(np.asarray(g, dtype=np.float64), [y, x], order=1, mode="nearest")
    return warped, oob


def texture_residual(frame: ScalarGrid, sigma: float = 1.0, size: int = 9) -> ScalarGrid:
    """
    Subtract a Gaussian-smoothed copy from the frame (structure removal for
    real sequences with brightness changes).

    The residual is shifted by 0.5 and clipped so it remains a valid image.
    """
    frame = as_grid(frame, "frame")
    return np.clip(frame - gaussian_smooth(frame, sigma, size) + 0.5, 0.0, 1.0)


def texture_residual_pair(pair: ImagePair, sigma: float = 1.0, size: int = 9) -> ImagePair:
    return ImagePair(texture_residual(pair.frame0, sigma, size), texture_residual(pair.frame1, sigma, size))
