"""
Image decode/encode with Pillow.

Input frames (PNG or PGM, 8- or 16-bit, grayscale or RGB) become ScalarGrids
in [0, 1]; RGB is reduced with the 0.299/0.587/0.114 luminance weights.
"""
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.core.errors import FlowFormatError, GridError
from src.core.grid import ImagePair, ScalarGrid

LUMA = np.array([0.299, 0.587, 0.114])
SUPPORTED_FORMATS = ("PNG", "PPM")  # Pillow reports PGM as PPM

PathLike = Union[str, Path]


def _to_grid(img: Image.Image) -> ScalarGrid:
    mode = img.mode
    if mode in ("1", "P", "LA", "PA"):
        img = img.convert("RGBA" if mode in ("P", "PA") else "L")
        mode = img.mode
    if mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if mode.startswith("I;16") or mode == "I":
        return np.asarray(img, dtype=np.float64) / 65535.0
    if mode in ("RGB", "RGBA"):
        rgb = np.asarray(img, dtype=np.float64)[..., :3] / 255.0
        return rgb @ LUMA
    raise FlowFormatError(f"unsupported image mode '{mode}'")


def read_image(path: PathLike) -> ScalarGrid:
    path = Path(path)
    if not path.is_file():
        raise FlowFormatError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise FlowFormatError(f"{path}: unsupported format {img.format}, use PNG or PGM")
            img.load()
            grid = _to_grid(img)
    except (UnidentifiedImageError, OSError) as e:
        raise FlowFormatError(f"{path}: cannot decode image ({e})") from e
    return np.clip(grid, 0.0, 1.0)


def read_pair(path0: PathLike, path1: PathLike) -> ImagePair:
    f0, f1 = read_image(path0), read_image(path1)
    if f0.shape != f1.shape:
        raise GridError(f"frames differ in size: {f0.shape[::-1]} vs {f1.shape[::-1]} (WxH)")
    return ImagePair(f0, f1)


def write_frame(path: PathLike, grid: ScalarGrid) -> None:
    """Save a [0, 1] grid as 16-bit grayscale PNG."""
    data = np.round(np.clip(grid, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(data).save(Path(path), format="PNG")


def write_rgb(path: PathLike, rgb: np.ndarray) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(Path(path), format="PNG")


def write_gray(path: PathLike, gray: np.ndarray) -> None:
    """8-bit grayscale PNG; boolean maps become 0/255."""
    gray = np.asarray(gray)
    if gray.dtype == bool:
        gray = gray.astype(np.uint8) * 255
    Image.fromarray(gray.astype(np.uint8)).save(Path(path), format="PNG")
