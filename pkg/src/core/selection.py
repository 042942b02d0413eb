"""
Measurement selection: which pixels keep their data-term rows.

Schemes:
- full         every pixel
- random       m pixels uniformly without replacement (seeded)
- significant  the m pixels with the largest derivative magnitude
- combined     top significant_fraction * n by magnitude, the rest at random
"""
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.core.errors import GridError

if TYPE_CHECKING:
    from src.core.data_terms import DerivativeStack

@dataclass(frozen=True)
class MeasurementMask:
    selected: np.ndarray

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=bool)
        if sel.ndim != 2 or sel.size == 0:
            raise GridError(f"mask must be a non-empty 2-D array, got shape {sel.shape}")
        if not sel.any():
            raise GridError("mask selects no pixels")
        object.__setattr__(self, "selected", sel)

    @classmethod
    def full(cls, height: int, width: int) -> "MeasurementMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def m(self) -> int:
        return int(self.selected.sum())

    @property
    def n(self) -> int:
        return int(self.selected.size)

    @property
    def ratio(self) -> float:
        return self.m / self.n


class SelectionScheme(BaseModel):
    kind: Literal["full", "random", "significant", "combined"] = "full"
    ratio: float = Field(1.0, gt=0.0, le=1.0)
    significant_fraction: float = Field(0.05, ge=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _fraction_within_ratio(self):
        if self.kind == "combined" and self.significant_fraction > self.ratio:
            raise ValueError(
                f"significant_fraction {self.significant_fraction} exceeds ratio {self.ratio}"
            )
        return self

    @property
    def stochastic(self) -> bool:
        return self.kind in ("random", "combined") and self.ratio < 1.0


def round_count(fraction: float, n: int) -> int:
    """round-half-up of fraction * n"""
    return int(np.floor(fraction * n + 0.5))


def significance(stack: "DerivativeStack") -> np.ndarray:
    """Per-pixel derivative magnitude used to rank pixels."""
    if stack.has_second_order:
        row1 = np.hypot(stack.Ixx, stack.Ixy)
        row2 = np.hypot(stack.Iyx, stack.Iyy)
        return np.maximum(row1, row2)
    return np.hypot(stack.Ix, stack.Iy)


def top_by_magnitude(magnitude: np.ndarray, k: int) -> np.ndarray:
    """Flat indices of the k largest values; ties go to the lower index."""
    order = np.argsort(-magnitude.ravel(), kind="stable")
    return order[:k]


def select(scheme: SelectionScheme, stack: "DerivativeStack", level: int = 0) -> MeasurementMask:
    """
    Build the mask for one pyramid level.

    The random stream is seeded with (scheme.seed, level), so runs with the
    same seed are reproducible and levels draw independent samples.
    """
    h, w = stack.shape
    n = h * w
    if scheme.kind == "full" or scheme.ratio >= 1.0:
        return MeasurementMask.full(h, w)

    m = min(n, max(1, round_count(scheme.ratio, n)))
    flat = np.zeros(n, dtype=bool)

    if scheme.kind == "significant":
        flat[top_by_magnitude(significance(stack), m)] = True
    else:
        k_sig = 0
        if scheme.kind == "combined":
            k_sig = min(m, round_count(scheme.significant_fraction, n))
            flat[top_by_magnitude(significance(stack), k_sig)] = True
        rng = np.random.default_rng([scheme.seed, level])
        candidates = np.flatnonzero(~flat)
        picked = rng.choice(candidates.size, size=m - k_sig, replace=False)
        flat[candidates[picked]] = True

    return MeasurementMask(flat.reshape(h, w))
