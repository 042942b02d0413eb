"""
HVD Flow HTTP API
- /estimate: two frames on disk -> flow summary (+ .flo / PNG outputs, MEPE)
- /evaluate: flow + ground truth -> MEPE
- /sparsity: ground truth -> derivative sparsity report
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from src.config import build_run_config, load_config_file
from src.core.errors import ConfigError, FlowFormatError, GridError, HvdFlowError, SolverError
from src.core.evaluation import colorize_flow, mepe, sparsity_report
from src.core.grid import texture_residual_pair
from src.core.solver import solve_coarse_to_fine
from src.formats.flo import read_flo, write_flo
from src.formats.images import read_pair, write_rgb

load_dotenv()

logger = logging.getLogger(__name__)

app = FastAPI(title="HVD Flow API", description="Optical flow with the HVD regularizer and sparse measurements")


class EstimateRequest(BaseModel):
    frame0: str
    frame1: str
    gt: Optional[str] = None
    out_flo: Optional[str] = None
    out_png: Optional[str] = None
    # CLI flag names -> values, e.g. {"data": "gca", "ratio": 0.2}
    options: Dict[str, Any] = Field(default_factory=dict)


class LevelSummary(BaseModel):
    level: int
    width: int
    height: int
    iterations: int
    energy_start: float
    energy_end: float
    restarts: int
    wall_ms: float


class EstimateResponse(BaseModel):
    width: int
    height: int
    mean_flow: List[float]
    max_magnitude: float
    mepe: Optional[float] = None
    levels: List[LevelSummary]
    wall_ms: float
    outputs: Dict[str, str] = Field(default_factory=dict)


class EvaluateRequest(BaseModel):
    flow: str
    gt: str


class EvaluateResponse(BaseModel):
    mepe: float
    width: int
    height: int


class SparsityRequest(BaseModel):
    gt: str


class SparsityResponse(BaseModel):
    fractions: Dict[str, float]
    thresholds: Dict[str, float]
    partials_sparser: bool


def _require_files(*paths: Optional[str]) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise HTTPException(status_code=404, detail=f"file not found: {p}")


def _http_error(e: HvdFlowError) -> HTTPException:
    if isinstance(e, (ConfigError, GridError, FlowFormatError)):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, SolverError):
        return HTTPException(status_code=500, detail=f"solver failed: {e}")
    return HTTPException(status_code=500, detail=str(e))


@app.get("/")
def root():
    return {
        "service": "HVD Flow",
        "description": "Coarse-to-fine optical flow with horizontal/vertical/diagonal continuity regularization",
        "endpoints": {
            "/estimate": "POST - estimate flow between two frames",
            "/evaluate": "POST - MEPE of a flow against ground truth",
            "/sparsity": "POST - derivative sparsity of a ground-truth flow",
            "/health": "GET - liveness",
        },
    }


@app.get("/health")
def health_check():
    return {"status": "ok"}


@app.post("/estimate", response_model=EstimateResponse)
def estimate(req: EstimateRequest):
    """Run the estimator on frames already on the server's disk."""
    _require_files(req.frame0, req.frame1, req.gt)
    try:
        paths = {"frame0": req.frame0, "frame1": req.frame1, "gt": req.gt, "out_flo": req.out_flo, "out_png": req.out_png}
        cfg = build_run_config(paths, req.options, load_config_file())
        pair = read_pair(cfg.frame0, cfg.frame1)
        if cfg.preprocess:
            pair = texture_residual_pair(pair)
        result = solve_coarse_to_fine(pair, cfg.solver)
        flow = result.flow

        outputs = {}
        if cfg.out_flo:
            write_flo(cfg.out_flo, flow)
            outputs["flo"] = str(cfg.out_flo)
        if cfg.out_png:
            write_rgb(cfg.out_png, colorize_flow(flow, cfg.max_mag))
            outputs["png"] = str(cfg.out_png)

        err = None
        if cfg.gt:
            gt = read_flo(cfg.gt)
            err = mepe(flow, gt)
    except HvdFlowError as e:
        logger.warning("[API] /estimate failed: %s", e)
        raise _http_error(e) from e

    logger.info("[API] /estimate %dx%d in %.0f ms", flow.width, flow.height, result.wall_ms)
    return EstimateResponse(
        width=flow.width,
        height=flow.height,
        mean_flow=[float(flow.vx.mean()), float(flow.vy.mean())],
        max_magnitude=float(flow.magnitude().max()),
        mepe=err,
        levels=[LevelSummary(**{k: getattr(r, k) for k in LevelSummary.model_fields}) for r in result.levels],
        wall_ms=result.wall_ms,
        outputs=outputs,
    )


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(req: EvaluateRequest):
    _require_files(req.flow, req.gt)
    try:
        flow, gt = read_flo(req.flow), read_flo(req.gt)
        return EvaluateResponse(mepe=mepe(flow, gt), width=flow.width, height=flow.height)
    except HvdFlowError as e:
        raise _http_error(e) from e


@app.post("/sparsity", response_model=SparsityResponse)
def sparsity(req: SparsityRequest):
    _require_files(req.gt)
    try:
        report = sparsity_report(read_flo(req.gt))
    except HvdFlowError as e:
        raise _http_error(e) from e
    return SparsityResponse(
        fractions=report.fractions,
        thresholds=report.thresholds,
        partials_sparser=report.partials_sparser,
    )
