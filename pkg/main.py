"""
HVD Flow CLI - coarse-to-fine optical flow with the HVD regularizer

Subcommands:
  estimate    frame0 frame1 -> flow (.flo / colour PNG), MEPE with --gt
  sweep       MEPE over measurement ratios and selection schemes (CSV)
  sparsity    derivative sparsity of a ground-truth flow (CSV + PNG maps)
  synth       synthetic pairs with ground truth
  middlebury  list / spot-check a local Middlebury training set

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.config import build_run_config, build_solver_config, load_config_file
from src.core.errors import ConfigError, GridError, HvdFlowError
from src.core.evaluation import colorize_flow, endpoint_error, error_image, mepe, sparsity_report
from src.core.grid import texture_residual_pair
from src.core.solver import solve_coarse_to_fine
from src.core.sweep import aggregate_rows, sweep_ratios
from src.formats.flo import read_flo, write_flo
from src.formats.images import read_pair, write_gray, write_rgb
from src.formats.reports import run_report, write_csv, write_json
from src.generators import middlebury, synthetic
from src.logging_setup import configure_logging

logger = logging.getLogger("hvdflow")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# flag -> argparse dest, shared by every command that runs the solver
SOLVER_FLAGS = {
    "data": "data",
    "lambda": "lam",
    "epsilon": "epsilon",
    "pyramid-scale": "pyramid_scale",
    "max-iter": "max_iter",
    "conv-tol": "conv_tol",
    "min-side": "min_side",
    "regularizer": "regularizer",
    "diagonal": "diagonal",
    "lipschitz": "lipschitz",
    "mixing": "mixing",
    "adaptive": "adaptive",
    "alpha": "alpha",
    "beta": "beta",
    "gdim-penalty": "gdim_penalty",
    "warps": "warps",
    "strict-lambda": "strict_lambda",
    "scheme": "scheme",
    "ratio": "ratio",
    "sig-frac": "sig_frac",
    "seed": "seed",
    "preprocess": "preprocess",
    "max-mag": "max_mag",
}


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; usage errors here are 1."""

    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _str_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def add_solver_flags(p: argparse.ArgumentParser) -> None:
    """Every flag defaults to None so config-file values can fill the gaps."""
    g = p.add_argument_group("solver (defaults: lambda 0.01, epsilon 0.01, max-iter 500, pyramid-scale 0.70)")
    g.add_argument("--data", choices=["ofc", "gca", "gdim"], help="data term (default ofc)")
    g.add_argument("--lambda", dest="lam", type=float, help="regularization weight (default 0.01)")
    g.add_argument("--epsilon", type=float, help="Huber threshold (default 0.01)")
    g.add_argument("--pyramid-scale", type=float, help="pyramid down-scaling factor (default 0.70)")
    g.add_argument("--max-iter", type=int, help="iterations per pyramid level (default 500)")
    g.add_argument("--conv-tol", type=float, help="mean absolute update to stop at (default 1e-4)")
    g.add_argument("--min-side", type=int, help="smallest pyramid side (default 16)")
    g.add_argument("--regularizer", choices=["hvd", "tv_isotropic", "tv_anisotropic", "tv_weighted"])
    g.add_argument("--diagonal", choices=["shifted", "same_pixel"], help="135 degree term convention")
    g.add_argument("--lipschitz", choices=["standard", "data_aware"], help="step-size constant (default standard: 16 lambda / epsilon)")
    g.add_argument("--mixing", choices=["anchor_weighted", "step_weighted"],
                   help="accelerated update mixing (default anchor_weighted)")
    g.add_argument("--adaptive", action=argparse.BooleanOptionalAction, default=None, help="edge-adaptive HVD weights")
    g.add_argument("--alpha", type=float, help="adaptive weight alpha (default 10)")
    g.add_argument("--beta", type=float, help="adaptive weight beta (default 1)")
    g.add_argument("--gdim-penalty", type=float, help="GDIM d/c penalty (default 1e-2)")
    g.add_argument("--warps", type=int, help="re-linearizations per level (default 1)")
    g.add_argument("--strict-lambda", action=argparse.BooleanOptionalAction, default=None,
                   help="reject lambda outside [1e-3, 1e-1] (default on)")
    g.add_argument("--scheme", choices=["full", "random", "significant", "combined"], help="measurement selection (default full)")
    g.add_argument("--ratio", type=float, help="measurement ratio m/n (default 1.0)")
    g.add_argument("--sig-frac", type=float, help="significant share for the combined scheme (default 0.05)")
    g.add_argument("--seed", type=int, help="selection seed (default 0)")
    g.add_argument("--preprocess", action=argparse.BooleanOptionalAction, default=None,
                   help="subtract a 9x9 sigma=1 Gaussian-smoothed copy from both frames")


def add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (else $HVDFLOW_CONFIG)")
    p.add_argument("--log-level", help="DEBUG, INFO, WARNING (else $HVDFLOW_LOG_LEVEL, default INFO)")
    p.add_argument("--progress", action="store_true", help="show progress bars")


def solver_values(args: argparse.Namespace) -> Dict[str, Any]:
    return {flag: getattr(args, dest, None) for flag, dest in SOLVER_FLAGS.items()}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_estimate(args: argparse.Namespace) -> int:
    if args.out_err_png and not args.gt:
        raise ConfigError("--out-err-png needs --gt")
    paths = {
        "frame0": args.frame0, "frame1": args.frame1, "gt": args.gt,
        "out_flo": args.out_flo, "out_png": args.out_png, "out_err_png": args.out_err_png,
        "report": args.report,
    }
    cfg = build_run_config(paths, solver_values(args), load_config_file(args.config))

    pair = read_pair(cfg.frame0, cfg.frame1)
    if cfg.preprocess:
        pair = texture_residual_pair(pair)
    gt = read_flo(cfg.gt) if cfg.gt else None
    if gt is not None and gt.shape != pair.shape:
        raise GridError(f"ground truth {gt.shape} does not match frames {pair.shape}")

    estimate = solve_coarse_to_fine(pair, cfg.solver, progress=args.progress)
    flow = estimate.flow

    if cfg.out_flo:
        write_flo(cfg.out_flo, flow)
        print(f"[Estimate] flow -> {cfg.out_flo}")
    if cfg.out_png:
        write_rgb(cfg.out_png, colorize_flow(flow, cfg.max_mag))
        print(f"[Estimate] colour image -> {cfg.out_png}")

    err = None
    if gt is not None:
        err = mepe(flow, gt)
        print(f"MEPE {err:.6f}")
        if cfg.out_err_png:
            write_gray(cfg.out_err_png, error_image(endpoint_error(flow, gt)))
            print(f"[Estimate] error map -> {cfg.out_err_png}")
    if cfg.report:
        write_json(run_report(cfg.solver, estimate, err, paths), cfg.report)
        print(f"[Estimate] report -> {cfg.report}")

    print(f"[Estimate] {flow.width}x{flow.height}, mean flow ({flow.vx.mean():.4f}, {flow.vy.mean():.4f}), "
          f"{len(estimate.levels)} levels, {estimate.wall_ms:.0f} ms")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    paths = {"frame0": args.frame0, "frame1": args.frame1, "gt": args.gt}
    cfg = build_run_config(paths, solver_values(args), load_config_file(args.config))
    pair = read_pair(cfg.frame0, cfg.frame1)
    if cfg.preprocess:
        pair = texture_residual_pair(pair)
    gt = read_flo(cfg.gt)
    if gt.shape != pair.shape:
        raise GridError(f"ground truth {gt.shape} does not match frames {pair.shape}")

    table = sweep_ratios(pair, gt, cfg.solver, args.ratios, args.schemes, args.repetitions, progress=args.progress)
    if args.out_csv:
        write_csv(table, args.out_csv)
        print(f"[Sweep] {len(table)} rows -> {args.out_csv}")
    else:
        table.to_csv(sys.stdout, index=False, float_format="%.6g")
    for row in aggregate_rows(table).itertuples():
        logger.info("[Sweep] %s m/n=%.2f: mean MEPE %.4f", row.scheme, row.ratio, row.mepe)
    return EXIT_OK


def cmd_sparsity(args: argparse.Namespace) -> int:
    report = sparsity_report(read_flo(args.gt))
    table = report.to_frame()
    if args.out_csv:
        write_csv(table, args.out_csv)
        print(f"[Sparsity] report -> {args.out_csv}")
    else:
        table.to_csv(sys.stdout, index=False, float_format="%.6g")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for key, binary in report.maps.items():
            write_gray(out / f"{key.replace('/', '_')}.png", binary)
        print(f"[Sparsity] {len(report.maps)} binarized maps -> {out}")
    print(f"[Sparsity] gradient {report.fraction('grad'):.4f}, partials "
          + ", ".join(f"{m} {report.fraction(m):.4f}" for m in ("x", "y", "xy", "yx")))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    kwargs = {}
    if args.shift is not None and args.kind != "two-region":
        kwargs["shift"] = tuple(args.shift)
    if args.offset is not None and args.kind == "brightness":
        kwargs["offset"] = args.offset
    seq = synthetic.generate(args.kind, height=args.height, width=args.width, seed=args.seed, **kwargs)
    for path in seq.save(args.out_dir):
        print(f"[Synth] {path}")
    return EXIT_OK


def cmd_middlebury(args: argparse.Namespace) -> int:
    sequences = middlebury.list_sequences(args.root)
    for seq in sequences:
        print(f"[Middlebury] {seq.name}")
    if not args.run:
        return EXIT_OK

    cfg = build_solver_config(solver_values(args), load_config_file(args.config))
    table = middlebury.spot_check(args.root, cfg, args.lambdas, progress=args.progress)
    if args.out_csv:
        write_csv(table, args.out_csv)
    print(f"[Middlebury] average MEPE {table['mepe'].mean():.4f} over {len(table)} sequences")
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="hvdflow", description="HVD-regularized optical flow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the flow between two frames")
    p.add_argument("frame0")
    p.add_argument("frame1")
    p.add_argument("--gt", help="ground-truth .flo, prints MEPE")
    p.add_argument("--out-flo", help="write the flow as .flo")
    p.add_argument("--out-png", help="write the colour-coded flow")
    p.add_argument("--out-err-png", help="write the end-point error map (needs --gt)")
    p.add_argument("--max-mag", type=float, help="colour wheel saturation magnitude (default 99th percentile)")
    p.add_argument("--report", help="write a JSON run report")
    add_solver_flags(p)
    add_common_flags(p)
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("sweep", help="MEPE over measurement ratios")
    p.add_argument("frame0")
    p.add_argument("frame1")
    p.add_argument("--gt", required=True, help="ground-truth .flo")
    p.add_argument("--ratios", type=_float_list, default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    p.add_argument("--schemes", type=_str_list, default=["random", "significant", "combined"])
    p.add_argument("--repetitions", type=int, default=5, help="runs per stochastic (scheme, ratio), default 5")
    p.add_argument("--out-csv", help="CSV path (default stdout)")
    add_solver_flags(p)
    add_common_flags(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("sparsity", help="derivative sparsity of a ground-truth flow")
    p.add_argument("gt", help="ground-truth .flo")
    p.add_argument("--out-csv", help="CSV path (default stdout)")
    p.add_argument("--out-dir", help="directory for binarized map PNGs")
    add_common_flags(p)
    p.set_defaults(handler=cmd_sparsity)

    p = sub.add_parser("synth", help="write a synthetic pair with ground truth")
    p.add_argument("kind", choices=list(synthetic.KINDS))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift", type=float, nargs=2, metavar=("VX", "VY"), help="translation (default 1.25 0.75)")
    p.add_argument("--offset", type=float, help="brightness offset (default 0.1)")
    add_common_flags(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("middlebury", help="list or spot-check a Middlebury training set")
    p.add_argument("root", help="directory holding other-data/ and other-gt-flow/")
    p.add_argument("--run", action="store_true", help="estimate every sequence and report MEPE")
    p.add_argument("--lambdas", type=_float_list, help="per-sequence lambda grid, best value kept")
    p.add_argument("--out-csv")
    add_solver_flags(p)
    add_common_flags(p)
    p.set_defaults(handler=cmd_middlebury)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"hvdflow: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        configure_logging(args.log_level)
    except ValueError as e:
        print(f"hvdflow: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"hvdflow: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HvdFlowError, OSError) as e:
        print(f"hvdflow: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
