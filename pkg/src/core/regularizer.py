"""
HVD regularizer: horizontal, vertical and two diagonal continuity differences
of the flow, penalised with a Huber-smoothed l1 norm.

Each operator D couples the two flow channels under one magnitude,
sqrt((D vx)^2 + (D vy)^2). The TV baselines (isotropic, anisotropic,
weighted anisotropic) share the same Huber machinery.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.core.errors import GridError
from src.core.grid import (
    FlowField,
    ScalarGrid,
    adjoint_diff_x,
    adjoint_diff_y,
    as_grid,
    forward_diff_x,
    forward_diff_y,
)

Operator = Callable[[np.ndarray], np.ndarray]

DIAGONAL_CONVENTIONS = ("shifted", "same_pixel")
TV_VARIANTS = ("isotropic", "anisotropic", "weighted_anisotropic")


@dataclass(frozen=True)
class HuberParams:
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"Huber epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class RegularizerWeights:
    """Per-pixel weights in (0, 1]; ``w=None`` means uniform 1."""

    w: Optional[ScalarGrid] = None

    def __post_init__(self):
        if self.w is not None:
            w = as_grid(self.w, "weights")
            if w.min() <= 0.0 or w.max() > 1.0:
                raise GridError("regularizer weights must lie in (0, 1]")
            object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls) -> "RegularizerWeights":
        return cls()

    def values(self, shape: Tuple[int, int]) -> np.ndarray:
        if self.w is None:
            return np.ones(shape)
        if self.w.shape != shape:
            raise GridError(f"weights shape {self.w.shape} does not match flow shape {shape}")
        return self.w


# ---------------------------------------------------------------------------
# Huber norm
# ---------------------------------------------------------------------------

def huber_value(x, eps: float):
    """x^2 / 2eps inside [-eps, eps], |x| - eps/2 outside."""
    a = np.abs(x)
    return np.where(a <= eps, a * a / (2.0 * eps), a - eps / 2.0)


def huber_deriv(x, eps: float):
    return x / np.maximum(np.abs(x), eps)


# ---------------------------------------------------------------------------
# continuity operators
# ---------------------------------------------------------------------------

def _shift_x(g: np.ndarray) -> np.ndarray:
    """g(min(i+1, W-1), j)."""
    out = np.empty_like(g)
    out[:, :-1] = g[:, 1:]
    out[:, -1] = g[:, -1]
    return out


def _shift_x_adjoint(b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(b)
    out[:, 1:] = b[:, :-1]
    out[:, -1] += b[:, -1]
    return out


def _shift_y(g: np.ndarray) -> np.ndarray:
    """g(i, min(j+1, H-1))."""
    out = np.empty_like(g)
    out[:-1, :] = g[1:, :]
    out[-1, :] = g[-1, :]
    return out


def _shift_y_adjoint(b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(b)
    out[1:, :] = b[:-1, :]
    out[-1, :] += b[-1, :]
    return out


def diff_xy(g: ScalarGrid) -> ScalarGrid:
    """45 degree continuity: grad_x g(i, j) - grad_y g(i+1, j)."""
    return forward_diff_x(g) - _shift_x(forward_diff_y(g))


def diff_xy_adjoint(b: ScalarGrid) -> ScalarGrid:
    return adjoint_diff_x(b) - adjoint_diff_y(_shift_x_adjoint(b))


def diff_yx(g: ScalarGrid) -> ScalarGrid:
    """135 degree continuity: grad_y g(i, j) - grad_x g(i, j+1)."""
    return forward_diff_y(g) - _shift_y(forward_diff_x(g))


def diff_yx_adjoint(b: ScalarGrid) -> ScalarGrid:
    return adjoint_diff_y(b) - adjoint_diff_x(_shift_y_adjoint(b))


def diff_yx_same_pixel(g: ScalarGrid) -> ScalarGrid:
    """Literal reading: grad_y g(i, j) - grad_x g(i, j)."""
    return forward_diff_y(g) - forward_diff_x(g)


def diff_yx_same_pixel_adjoint(b: ScalarGrid) -> ScalarGrid:
    return adjoint_diff_y(b) - adjoint_diff_x(b)


def second_diff_xx(g: ScalarGrid) -> ScalarGrid:
    """Vertical continuity: grad_x g(i, j+1) - grad_x g(i, j)."""
    return forward_diff_y(forward_diff_x(g))


def second_diff_yy(g: ScalarGrid) -> ScalarGrid:
    """Horizontal continuity: grad_y g(i+1, j) - grad_y g(i, j)."""
    return forward_diff_x(forward_diff_y(g))


def hvd_operators(diagonal: str = "shifted") -> List[Tuple[str, Operator, Operator]]:
    """(name, D, D^T) for the four HVD terms."""
    if diagonal not in DIAGONAL_CONVENTIONS:
        raise ValueError(f"unknown diagonal convention '{diagonal}'")
    if diagonal == "shifted":
        yx = ("yx", diff_yx, diff_yx_adjoint)
    else:
        yx = ("yx", diff_yx_same_pixel, diff_yx_same_pixel_adjoint)
    return [
        ("x", forward_diff_x, adjoint_diff_x),
        ("y", forward_diff_y, adjoint_diff_y),
        ("xy", diff_xy, diff_xy_adjoint),
        yx,
    ]


# ---------------------------------------------------------------------------
# HVD energy / gradient
# ---------------------------------------------------------------------------

def hvd_energy_and_gradient(
    vx: np.ndarray,
    vy: np.ndarray,
    eps: float,
    w: np.ndarray,
    diagonal: str = "shifted",
) -> Tuple[float, np.ndarray, np.ndarray]:
    energy = 0.0
    gx = np.zeros_like(vx)
    gy = np.zeros_like(vy)
    for _, op, op_t in hvd_operators(diagonal):
        a = op(vx)
        b = op(vy)
        m = np.sqrt(a * a + b * b)
        energy += float(np.sum(w * huber_value(m, eps)))
        s = w / np.maximum(m, eps)
        gx += op_t(s * a)
        gy += op_t(s * b)
    return energy, gx, gy


def hvd_energy(
    v: FlowField,
    params: HuberParams,
    weights: Optional[RegularizerWeights] = None,
    diagonal: str = "shifted",
) -> float:
    w = (weights or RegularizerWeights.uniform()).values(v.shape)
    energy, _, _ = hvd_energy_and_gradient(v.vx, v.vy, params.epsilon, w, diagonal)
    return energy


def hvd_gradient(
    v: FlowField,
    params: HuberParams,
    weights: Optional[RegularizerWeights] = None,
    diagonal: str = "shifted",
) -> FlowField:
    w = (weights or RegularizerWeights.uniform()).values(v.shape)
    _, gx, gy = hvd_energy_and_gradient(v.vx, v.vy, params.epsilon, w, diagonal)
    return FlowField(gx, gy)


# ---------------------------------------------------------------------------
# TV baselines
# ---------------------------------------------------------------------------

def tv_energy_and_gradient(
    vx: np.ndarray,
    vy: np.ndarray,
    eps: float,
    variant: str,
    w: np.ndarray,
) -> Tuple[float, np.ndarray, np.ndarray]:
    if variant not in TV_VARIANTS:
        raise ValueError(f"unknown TV variant '{variant}'")
    if variant != "weighted_anisotropic":
        w = np.ones_like(vx)

    energy = 0.0
    grads = []
    for c in (vx, vy):
        a = forward_diff_x(c)
        b = forward_diff_y(c)
        if variant == "isotropic":
            m = np.sqrt(a * a + b * b)
            energy += float(np.sum(w * huber_value(m, eps)))
            s = w / np.maximum(m, eps)
            grads.append(adjoint_diff_x(s * a) + adjoint_diff_y(s * b))
        else:
            energy += float(np.sum(w * (huber_value(a, eps) + huber_value(b, eps))))
            grads.append(adjoint_diff_x(w * huber_deriv(a, eps)) + adjoint_diff_y(w * huber_deriv(b, eps)))
    return energy, grads[0], grads[1]


def tv_energy(
    v: FlowField,
    params: HuberParams,
    variant: str = "isotropic",
    weights: Optional[RegularizerWeights] = None,
) -> float:
    w = (weights or RegularizerWeights.uniform()).values(v.shape)
    energy, _, _ = tv_energy_and_gradient(v.vx, v.vy, params.epsilon, variant, w)
    return energy


def tv_gradient(
    v: FlowField,
    params: HuberParams,
    variant: str = "isotropic",
    weights: Optional[RegularizerWeights] = None,
) -> FlowField:
    w = (weights or RegularizerWeights.uniform()).values(v.shape)
    _, gx, gy = tv_energy_and_gradient(v.vx, v.vy, params.epsilon, variant, w)
    return FlowField(gx, gy)


def regularizer_energy_and_gradient(
    kind: str,
    vx: np.ndarray,
    vy: np.ndarray,
    eps: float,
    w: np.ndarray,
    diagonal: str = "shifted",
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Dispatch on the solver's regularizer name (hvd, tv_isotropic, ...)."""
    if kind == "hvd":
        return hvd_energy_and_gradient(vx, vy, eps, w, diagonal)
    variant = {
        "tv_isotropic": "isotropic",
        "tv_anisotropic": "anisotropic",
        "tv_weighted": "weighted_anisotropic",
    }.get(kind)
    if variant is None:
        raise ValueError(f"unknown regularizer '{kind}'")
    return tv_energy_and_gradient(vx, vy, eps, variant, w)


def adaptive_weights(frame: ScalarGrid, alpha: float = 10.0, beta: float = 1.0) -> RegularizerWeights:
    """w = exp(-alpha * |grad I|^beta) from forward differences of ``frame``."""
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")
    gx = forward_diff_x(frame)
    gy = forward_diff_y(frame)
    mag = np.sqrt(gx * gx + gy * gy)
    w = np.exp(-alpha * mag ** beta)
    return RegularizerWeights(np.maximum(w, np.finfo(np.float64).tiny))
