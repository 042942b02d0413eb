"""
Linearized data terms (OFC, GCA, GDIM) as pixel-decoupled linear systems.

Every system is stored as per-pixel coefficient planes, one plane per
(row set, unknown block). OFC and GDIM have one row per pixel, GCA two.
Residuals are always r = A u - y.
"""
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.core.errors import GridError
from src.core.grid import FlowField, ImagePair, ScalarGrid, as_grid, warp_backward
from src.core.regularizer import huber_deriv, huber_value
from src.core.selection import MeasurementMask

DATA_KINDS = ("ofc", "gca", "gdim")


def central_diff_x(g: ScalarGrid) -> ScalarGrid:
    """(g(i+1, j) - g(i-1, j)) / 2 with clamped indices."""
    p = np.pad(g, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (p[:, 2:] - p[:, :-2])


def central_diff_y(g: ScalarGrid) -> ScalarGrid:
    p = np.pad(g, ((1, 1), (0, 0)), mode="edge")
    return 0.5 * (p[2:, :] - p[:-2, :])


@dataclass(frozen=True)
class DerivativeStack:
    """Intensity derivatives of one level, linearized around ``flow``."""

    Ix: ScalarGrid
    Iy: ScalarGrid
    It: ScalarGrid
    I: ScalarGrid
    oob: np.ndarray
    flow: FlowField
    Ixx: Optional[ScalarGrid] = None
    Ixy: Optional[ScalarGrid] = None
    Iyx: Optional[ScalarGrid] = None
    Iyy: Optional[ScalarGrid] = None
    Ixt: Optional[ScalarGrid] = None
    Iyt: Optional[ScalarGrid] = None

    def __post_init__(self):
        shape = as_grid(self.Ix, "Ix").shape
        for name in ("Iy", "It", "I", "Ixx", "Ixy", "Iyx", "Iyy", "Ixt", "Iyt"):
            g = getattr(self, name)
            if g is not None and np.shape(g) != shape:
                raise GridError(f"{name} has shape {np.shape(g)}, expected {shape}")
        if self.oob.shape != shape or self.flow.shape != shape:
            raise GridError("oob map and linearization flow must match the derivative grids")

    @property
    def shape(self):
        return self.Ix.shape

    @property
    def has_second_order(self) -> bool:
        return all(
            getattr(self, n) is not None for n in ("Ixx", "Ixy", "Iyx", "Iyy", "Ixt", "Iyt")
        )


@dataclass(frozen=True)
class AugmentedUnknowns:
    """GDIM unknowns: flow plus contrast multiplier d and brightness offset c."""

    v: FlowField
    d: ScalarGrid
    c: ScalarGrid

    def __post_init__(self):
        d = as_grid(self.d, "d")
        c = as_grid(self.c, "c")
        if d.shape != self.v.shape or c.shape != self.v.shape:
            raise GridError("d and c must match the flow shape")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)

    @classmethod
    def zeros(cls, height: int, width: int) -> "AugmentedUnknowns":
        return cls(FlowField.zeros(height, width), np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def from_flow(cls, v: FlowField) -> "AugmentedUnknowns":
        return cls(v, np.zeros(v.shape), np.zeros(v.shape))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "AugmentedUnknowns":
        return cls(FlowField(arr[0].copy(), arr[1].copy()), arr[2].copy(), arr[3].copy())

    def to_array(self) -> np.ndarray:
        return np.stack([self.v.vx, self.v.vy, self.d, self.c])


Unknowns = Union[FlowField, AugmentedUnknowns]


def compute_derivatives(pair: ImagePair, current_flow: FlowField, kind: str = "ofc") -> DerivativeStack:
    """
    Warp frame1 by ``current_flow`` and estimate the derivatives at that point.

    Spatial derivatives are central differences of the two-frame average, the
    temporal derivative is warped frame1 minus frame0. Second-order grids are
    only filled in for GCA.
    """
    if kind not in DATA_KINDS:
        raise ValueError(f"unknown data term '{kind}'")
    if current_flow.shape != pair.shape:
        raise GridError(f"flow shape {current_flow.shape} does not match frames {pair.shape}")

    warped, oob = warp_backward(pair.frame1, current_flow)
    avg = 0.5 * (pair.frame0 + warped)
    Ix = central_diff_x(avg)
    Iy = central_diff_y(avg)
    It = warped - pair.frame0

    second = {}
    if kind == "gca":
        second = dict(
            Ixx=central_diff_x(Ix),
            Ixy=central_diff_y(Ix),
            Iyx=central_diff_x(Iy),
            Iyy=central_diff_y(Iy),
            Ixt=central_diff_x(It),
            Iyt=central_diff_y(It),
        )
    return DerivativeStack(Ix=Ix, Iy=Iy, It=It, I=pair.frame0, oob=oob, flow=current_flow, **second)


@dataclass(frozen=True)
class DataTermSystem:
    """
    coeffs: (row_sets, blocks, H, W) per-pixel coefficients
    rhs:    (row_sets, H, W)
    active: (H, W) bool, rows of inactive pixels are dropped
    """

    kind: str
    coeffs: np.ndarray
    rhs: np.ndarray
    active: np.ndarray
    mask: MeasurementMask

    @property
    def n_unknown_blocks(self) -> int:
        return self.coeffs.shape[1]

    @property
    def shape(self):
        return self.active.shape

    @property
    def n_rows(self) -> int:
        return int(self.active.sum()) * self.coeffs.shape[0]

    def _check(self, x: np.ndarray):
        if x.shape != (self.n_unknown_blocks,) + self.shape:
            raise GridError(
                f"{self.kind} expects unknowns of shape {(self.n_unknown_blocks,) + self.shape}, got {x.shape}"
            )

    def residual(self, x: np.ndarray) -> np.ndarray:
        """A x - y, zero on dropped rows."""
        self._check(x)
        r = np.einsum("rbhw,bhw->rhw", self.coeffs, x) - self.rhs
        return r * self.active

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """A^T r (dropped rows contribute nothing)."""
        return np.einsum("rbhw,rhw->bhw", self.coeffs, r * self.active)

    def energy_and_gradient(self, x: np.ndarray, eps: float):
        r = self.residual(x)
        energy = float(np.sum(huber_value(r, eps) * self.active))
        return energy, self.adjoint(huber_deriv(r, eps))

    def row_lipschitz(self, eps: float) -> float:
        """max over active pixels of sum of squared coefficients, divided by eps."""
        sq = np.sum(self.coeffs ** 2, axis=(0, 1)) * self.active
        return float(sq.max()) / eps if sq.size else 0.0


def _active_rows(stack: DerivativeStack, mask: Optional[MeasurementMask]) -> Tuple[np.ndarray, MeasurementMask]:
    if mask is None:
        mask = MeasurementMask.full(*stack.shape)
    if mask.selected.shape != stack.shape:
        raise GridError(f"mask shape {mask.selected.shape} does not match derivatives {stack.shape}")
    return mask.selected & ~stack.oob, mask


def build_ofc(stack: DerivativeStack, mask: Optional[MeasurementMask] = None) -> DataTermSystem:
    """Rows Ix vx + Iy vy = -It (shifted by the linearization flow)."""
    active, mask = _active_rows(stack, mask)
    bx, by = stack.flow.vx, stack.flow.vy
    coeffs = np.stack([np.stack([stack.Ix, stack.Iy])])
    rhs = np.stack([-stack.It + stack.Ix * bx + stack.Iy * by])
    return DataTermSystem("ofc", coeffs, rhs, active, mask)


def build_gca(stack: DerivativeStack, mask: Optional[MeasurementMask] = None) -> DataTermSystem:
    """Two rows per pixel from the linearized gradient constancy."""
    if not stack.has_second_order:
        raise GridError("GCA needs second-order derivatives; compute the stack with kind='gca'")
    active, mask = _active_rows(stack, mask)
    bx, by = stack.flow.vx, stack.flow.vy
    coeffs = np.stack([
        np.stack([stack.Ixx, stack.Ixy]),
        np.stack([stack.Iyx, stack.Iyy]),
    ])
    rhs = np.stack([
        -stack.Ixt + stack.Ixx * bx + stack.Ixy * by,
        -stack.Iyt + stack.Iyx * bx + stack.Iyy * by,
    ])
    return DataTermSystem("gca", coeffs, rhs, active, mask)


def build_gdim(stack: DerivativeStack, mask: Optional[MeasurementMask] = None) -> DataTermSystem:
    """Rows Ix vx + Iy vy - I d - c = -It."""
    active, mask = _active_rows(stack, mask)
    bx, by = stack.flow.vx, stack.flow.vy
    coeffs = np.stack([np.stack([stack.Ix, stack.Iy, -stack.I, -np.ones_like(stack.I)])])
    rhs = np.stack([-stack.It + stack.Ix * bx + stack.Iy * by])
    return DataTermSystem("gdim", coeffs, rhs, active, mask)


BUILDERS = {"ofc": build_ofc, "gca": build_gca, "gdim": build_gdim}


def build_system(kind: str, stack: DerivativeStack, mask: Optional[MeasurementMask] = None) -> DataTermSystem:
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown data term '{kind}'") from None
    return builder(stack, mask)


def unknowns_to_array(sys: DataTermSystem, u: Unknowns) -> np.ndarray:
    if sys.kind == "gdim":
        if not isinstance(u, AugmentedUnknowns):
            raise GridError("GDIM systems take AugmentedUnknowns (v, d, c)")
        return u.to_array()
    if not isinstance(u, FlowField):
        raise GridError(f"{sys.kind} systems take a FlowField")
    return u.to_array()


def array_to_unknowns(sys: DataTermSystem, x: np.ndarray) -> Unknowns:
    if sys.kind == "gdim":
        return AugmentedUnknowns.from_array(x)
    return FlowField.from_array(x)


def data_energy(sys: DataTermSystem, u: Unknowns, eps: float) -> float:
    energy, _ = sys.energy_and_gradient(unknowns_to_array(sys, u), eps)
    return energy


def data_gradient(sys: DataTermSystem, u: Unknowns, eps: float) -> Unknowns:
    _, grad = sys.energy_and_gradient(unknowns_to_array(sys, u), eps)
    return array_to_unknowns(sys, grad)
