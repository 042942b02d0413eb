import json

import pandas as pd
import pytest

from main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from src.generators import synthetic

FAST = ["--max-iter", "15", "--min-side", "12"]


@pytest.fixture
def seq_dir(tmp_path):
    seq = synthetic.translate(24, 24, shift=(0.75, 0.5), seed=5)
    seq.save(tmp_path / "seq")
    return tmp_path / "seq"


def _frames(d):
    return [str(d / "frame0.png"), str(d / "frame1.png")]


def test_estimate_writes_outputs(seq_dir, tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    code = main([
        "estimate", *_frames(seq_dir), "--gt", str(seq_dir / "flow.flo"),
        "--out-flo", str(out / "v.flo"), "--out-png", str(out / "v.png"),
        "--out-err-png", str(out / "err.png"), "--report", str(out / "run.json"), *FAST,
    ])
    assert code == EXIT_OK
    stdout = capsys.readouterr().out
    assert "MEPE " in stdout
    for name in ("v.flo", "v.png", "err.png", "run.json"):
        assert (out / name).is_file()
    report = json.loads((out / "run.json").read_text())
    assert report["config"]["lambda"] == 0.01
    assert report["size"] == {"width": 24, "height": 24}
    assert report["mepe"] >= 0.0


def test_ratio_one_random_is_bit_identical_to_full(seq_dir, tmp_path):
    full, rnd = tmp_path / "full.flo", tmp_path / "rnd.flo"
    assert main(["estimate", *_frames(seq_dir), "--out-flo", str(full), *FAST]) == EXIT_OK
    assert main([
        "estimate", *_frames(seq_dir), "--out-flo", str(rnd), "--scheme", "random", "--ratio", "1.0", *FAST,
    ]) == EXIT_OK
    assert full.read_bytes() == rnd.read_bytes()


def test_fixed_seed_is_reproducible(seq_dir, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.flo"
        assert main([
            "estimate", *_frames(seq_dir), "--out-flo", str(path),
            "--scheme", "combined", "--ratio", "0.3", "--seed", "7", *FAST,
        ]) == EXIT_OK
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("extra", [
    ["--lambda", "abc"],
    ["--scheme", "everything"],
    ["--lambda", "0.5"],
    ["--ratio", "0.01", "--scheme", "combined"],
    ["--out-err-png", "err.png"],
])
def test_usage_errors_exit_1(seq_dir, extra, capsys):
    assert main(["estimate", *_frames(seq_dir), *extra]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_missing_arguments_exit_1():
    assert main(["estimate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_runtime_errors_exit_2(seq_dir, tmp_path, capsys):
    bad = tmp_path / "bad.flo"
    bad.write_bytes(b"XXXX" + bytes(8))
    assert main(["estimate", *_frames(seq_dir), "--gt", str(bad), *FAST]) == EXIT_RUNTIME
    assert "FlowFormatError" in capsys.readouterr().err

    small = synthetic.translate(10, 10, seed=0)
    small.save(tmp_path / "small")
    code = main(["estimate", *_frames(seq_dir), "--gt", str(tmp_path / "small" / "flow.flo"), *FAST])
    assert code == EXIT_RUNTIME


def test_config_file_supplies_defaults(seq_dir, tmp_path):
    cfg = tmp_path / "run.env"
    cfg.write_text("max-iter=5\nlambda=0.02\n")
    out = tmp_path / "run.json"
    assert main(["estimate", *_frames(seq_dir), "--config", str(cfg), "--min-side", "12", "--report", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["config"]["lambda"] == 0.02
    assert report["config"]["max_iter"] == 5


def test_sweep_command(seq_dir, tmp_path):
    out = tmp_path / "sweep.csv"
    code = main([
        "sweep", *_frames(seq_dir), "--gt", str(seq_dir / "flow.flo"),
        "--ratios", "0.5,1.0", "--schemes", "random,significant", "--repetitions", "2",
        "--out-csv", str(out), *FAST,
    ])
    assert code == EXIT_OK
    table = pd.read_csv(out)
    assert list(table.columns) == ["scheme", "ratio", "repetition", "mepe", "wall_ms"]
    # random: 2 + 1 runs, significant: 1 + 1, plus 4 aggregates
    assert len(table) == 9


def test_sparsity_command(seq_dir, tmp_path):
    out_csv, out_dir = tmp_path / "sparsity.csv", tmp_path / "maps"
    code = main(["sparsity", str(seq_dir / "flow.flo"), "--out-csv", str(out_csv), "--out-dir", str(out_dir)])
    assert code == EXIT_OK
    table = pd.read_csv(out_csv)
    assert len(table) == 15
    assert (out_dir / "coupled_grad.png").is_file()
    assert len(list(out_dir.glob("*.png"))) == 15


def test_synth_command(tmp_path, capsys):
    code = main(["synth", "two-region", "--out-dir", str(tmp_path / "s"), "--width", "16", "--height", "12"])
    assert code == EXIT_OK
    assert {p.name for p in (tmp_path / "s").iterdir()} == {"frame0.png", "frame1.png", "flow.flo"}
    assert capsys.readouterr().out.count("[Synth]") == 3
