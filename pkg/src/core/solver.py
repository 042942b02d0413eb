"""
Accelerated Huber-smoothed solver and the coarse-to-fine driver.

Per level the objective is

    E(u) = sum_rows huber(A u - y) + lambda * R(v) + mu * (|d|^2 + |c|^2)

where R is the HVD regularizer (or a TV baseline) on the flow blocks and the
last term only exists for GDIM. E is minimized with the two-sequence
accelerated gradient scheme (gradient step p, weighted gradient history q
anchored at the level start, convex combination of both).
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.config import SolverConfig
from src.core.data_terms import (
    AugmentedUnknowns,
    DataTermSystem,
    Unknowns,
    array_to_unknowns,
    build_system,
    compute_derivatives,
    unknowns_to_array,
)
from src.core.errors import SolverError
from src.core.grid import FlowField, ImagePair, ScalarGrid, gaussian_smooth
from src.core.pyramid import build_pyramid, upsample_flow
from src.core.regularizer import RegularizerWeights, adaptive_weights, regularizer_energy_and_gradient
from src.core.selection import select

logger = logging.getLogger(__name__)

# an iterate whose energy exceeds this multiple of the start energy triggers a restart with 2L
BLOWUP_FACTOR = 10.0


def gamma(k: int) -> float:
    return 0.5 * (k + 1)


def tau(k: int) -> float:
    return 2.0 / (k + 3)


@dataclass
class IterationState:
    k: int
    v: np.ndarray
    grad_sum: np.ndarray
    v0: np.ndarray
    L: float


@dataclass
class LevelReport:
    level: int
    height: int
    width: int
    iterations: int
    energy_start: float
    energy_end: float
    restarts: int
    lipschitz: float
    converged: bool
    active_rows: int
    wall_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FlowEstimate:
    flow: FlowField
    d: Optional[ScalarGrid] = None
    c: Optional[ScalarGrid] = None
    levels: List[LevelReport] = field(default_factory=list)
    wall_ms: float = 0.0


class Objective:
    """Energy and gradient of one level's problem on stacked unknown arrays."""

    def __init__(
        self,
        system: DataTermSystem,
        config: SolverConfig,
        weights: Optional[RegularizerWeights] = None,
    ):
        self.system = system
        self.config = config
        self.w = (weights or RegularizerWeights.uniform()).values(system.shape)

    def energy_and_gradient(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        cfg = self.config
        energy, grad = self.system.energy_and_gradient(x, cfg.epsilon)
        if cfg.lam > 0.0:
            e_reg, gx, gy = regularizer_energy_and_gradient(
                cfg.regularizer, x[0], x[1], cfg.epsilon, self.w, cfg.diagonal
            )
            energy += cfg.lam * e_reg
            grad[0] += cfg.lam * gx
            grad[1] += cfg.lam * gy
        if self.system.kind == "gdim" and cfg.gdim_penalty > 0.0:
            energy += cfg.gdim_penalty * float(np.sum(x[2:] ** 2))
            grad[2:] += 2.0 * cfg.gdim_penalty * x[2:]
        return energy, grad

    def energy(self, x: np.ndarray) -> float:
        return self.energy_and_gradient(x)[0]


def total_energy(
    u: Unknowns, system: DataTermSystem, config: SolverConfig, weights: Optional[RegularizerWeights] = None
) -> float:
    return Objective(system, config, weights).energy(unknowns_to_array(system, u))


def total_gradient(
    u: Unknowns, system: DataTermSystem, config: SolverConfig, weights: Optional[RegularizerWeights] = None
) -> Unknowns:
    _, grad = Objective(system, config, weights).energy_and_gradient(unknowns_to_array(system, u))
    return array_to_unknowns(system, grad)


def lipschitz_constant(config: SolverConfig, system: DataTermSystem) -> float:
    """
    16 lambda / eps by default. The data-term bound max_row |a|^2 / eps is
    used alone when lambda is 0 and added on top for ``lipschitz=data_aware``.
    """
    L = config.lipschitz_standard
    if config.lipschitz == "data_aware" or L == 0.0:
        L += system.row_lipschitz(config.epsilon)
        if system.kind == "gdim":
            L += 2.0 * config.gdim_penalty
    if not L > 0.0:
        raise SolverError("Lipschitz constant is zero: no active data rows and lambda = 0")
    return L


def _accelerated_run(
    objective: Objective, x0: np.ndarray, L: float, config: SolverConfig, level: int
) -> Tuple[np.ndarray, float, int, bool, bool]:
    """
    One pass of the accelerated iteration at a fixed L.

    Returns (best point, best energy, iterations, converged, blew_up).
    """
    e0 = objective.energy(x0)
    limit = BLOWUP_FACTOR * e0 if e0 > 0.0 else np.inf
    state = IterationState(k=1, v=x0.copy(), grad_sum=np.zeros_like(x0), v0=x0, L=L)
    best, best_e = x0, e0
    converged = False

    while state.k <= config.max_iter:
        e_v, g = objective.energy_and_gradient(state.v)
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite gradient at level {level}, iteration {state.k}")
        if e_v > limit:
            return best, best_e, state.k, False, True
        if e_v < best_e:
            best, best_e = state.v, e_v

        p = state.v - g / state.L
        e_p = objective.energy(p)
        if e_p < best_e:
            best, best_e = p, e_p

        state.grad_sum += gamma(state.k) * g
        q = state.v0 - state.grad_sum / state.L
        t = tau(state.k)
        if config.mixing == "anchor_weighted":
            v_next = t * q + (1.0 - t) * p
        else:
            v_next = t * p + (1.0 - t) * q

        change = float(np.mean(np.abs(v_next[:2] - state.v[:2])))
        state.v = v_next
        state.k += 1
        if change < config.conv_tol:
            converged = True
            break

    e_last = objective.energy(state.v)
    if e_last < best_e:
        best, best_e = state.v, e_last
    return best, best_e, state.k - 1, converged, False


def run_level(
    u0: Unknowns,
    system: DataTermSystem,
    config: SolverConfig,
    weights: Optional[RegularizerWeights] = None,
    level: int = 0,
) -> Tuple[Unknowns, LevelReport]:
    """Solve one level and report the diagnostics."""
    start = time.perf_counter()
    objective = Objective(system, config, weights)
    x0 = unknowns_to_array(system, u0)
    if not np.all(np.isfinite(x0)):
        raise SolverError(f"non-finite initial unknowns at level {level}")
    e0 = objective.energy(x0)
    L = lipschitz_constant(config, system)

    restarts = 0
    while True:
        best, best_e, iters, converged, blew_up = _accelerated_run(objective, x0, L, config, level)
        if not blew_up:
            break
        restarts += 1
        if restarts > config.max_restarts:
            raise SolverError(f"energy kept diverging at level {level} after {config.max_restarts} restarts")
        L *= 2.0
        logger.debug("[Solver] level %d: energy blow-up, restarting with L=%.3e", level, L)

    h, w = system.shape
    report = LevelReport(
        level=level,
        height=h,
        width=w,
        iterations=iters,
        energy_start=e0,
        energy_end=best_e,
        restarts=restarts,
        lipschitz=L,
        converged=converged,
        active_rows=system.n_rows,
        wall_ms=(time.perf_counter() - start) * 1000.0,
    )
    return array_to_unknowns(system, best), report


def solve_level(
    v0: Unknowns,
    system: DataTermSystem,
    config: SolverConfig,
    weights: Optional[RegularizerWeights] = None,
) -> Unknowns:
    """Run the accelerated iteration from ``v0``; energy(result) <= energy(v0)."""
    u, _ = run_level(v0, system, config, weights)
    return u


def level_weights(frame0: ScalarGrid, config: SolverConfig) -> Optional[RegularizerWeights]:
    """Edge-stopping weights from the smoothed reference frame, if the run uses them."""
    if not (config.adaptive or config.regularizer == "tv_weighted"):
        return None
    smoothed = gaussian_smooth(frame0, 1.0, 9)
    return adaptive_weights(smoothed, config.weight_alpha, config.weight_beta)


def solve_coarse_to_fine(pair: ImagePair, config: SolverConfig, progress: bool = False) -> FlowEstimate:
    """
    Estimate the flow from frame0 to frame1.

    The flow starts at zero on the coarsest level. On every finer level the
    accumulated flow is up-sampled, frame1 is warped by it, the derivatives
    and the measurement mask are recomputed and the level problem is solved
    around it. GDIM's d and c start from zero on every level.
    """
    start = time.perf_counter()
    pyramid = build_pyramid(pair, config.pyramid_scale, config.min_side)
    n_levels = len(pyramid.levels)
    logger.info(
        "[Solver] %s + %s, %d levels %s, scheme=%s ratio=%.3f",
        config.regularizer, config.data_kind, n_levels,
        "x".join(str(s) for s in pyramid.shapes()[-1]), config.scheme.kind, config.scheme.ratio,
    )

    flow = FlowField.zeros(*pyramid.coarsest.shape)
    d = c = None
    reports: List[LevelReport] = []

    levels = tqdm(list(enumerate(pyramid.levels)), desc="[Solver] levels", disable=not progress)
    for idx, level_pair in levels:
        if idx > 0:
            flow = upsample_flow(flow, *level_pair.shape)
        weights = level_weights(level_pair.frame0, config)

        u: Unknowns = flow
        if config.data_kind == "gdim":
            u = AugmentedUnknowns.from_flow(flow)
        for _ in range(config.warps):
            current = u.v if isinstance(u, AugmentedUnknowns) else u
            stack = compute_derivatives(level_pair, current, config.data_kind)
            mask = select(config.scheme, stack, level=idx)
            system = build_system(config.data_kind, stack, mask)
            u, report = run_level(u, system, config, weights, level=idx)
            reports.append(report)
            logger.info(
                "[Solver] level %d/%d %dx%d: %d iters, E %.3e -> %.3e, restarts %d, %.0f ms",
                idx + 1, n_levels, report.width, report.height, report.iterations,
                report.energy_start, report.energy_end, report.restarts, report.wall_ms,
            )

        if isinstance(u, AugmentedUnknowns):
            flow, d, c = u.v, u.d, u.c
        else:
            flow = u

    wall_ms = (time.perf_counter() - start) * 1000.0
    logger.info("[Solver] done in %.0f ms", wall_ms)
    return FlowEstimate(flow=flow, d=d, c=c, levels=reports, wall_ms=wall_ms)
