import csv
import subprocess
import sys

import numpy as np
import pytest

from fsmi import cli
from fsmi.grid import new_grid, read_pgm, save_grid_pgm


def table(path):
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    return comments, rows[0], rows[1:]


def test_bench_beam(tmp_path, capsys):
    rc = cli.main(["bench-beam", "--reps", "20", "--beam-length", "3", "--seed", "4",
                   "--algos", "fsmi,approx_fsmi,uniform_fsmi,csqmi_approx", "--out", str(tmp_path)])
    assert rc == 0
    comments, header, rows = table(tmp_path / "bench_beam.csv")
    assert header == ["algorithm", "n", "mean_ns", "p50_ns", "rel_err_mean", "mults"]
    assert [r[0] for r in rows] == ["fsmi", "approx_fsmi", "uniform_fsmi", "csqmi_approx"]
    assert all(r[1] == "30" for r in rows)
    assert comments[0].startswith("# build=")
    assert "# seeds=4" in comments and "# reps=20" in comments
    assert float(rows[0][4]) < 1e-2
    assert capsys.readouterr().out.count("algorithm,n,") == 1


def test_bench_rle(tmp_path):
    rc = cli.main(["bench-rle", "--reps", "5", "--L", "4,16", "--out", str(tmp_path)])
    assert rc == 0
    _, header, rows = table(tmp_path / "bench_rle.csv")
    assert header[0] == "L" and header[-2:] == ["ratio", "rel_err"]
    assert [int(r[0]) for r in rows] == [4, 16]
    assert [int(r[2]) for r in rows] == [64, 16]
    assert all(float(r[-1]) < 1e-6 for r in rows)


def test_explore(tmp_path):
    rc = cli.main(["explore", "--algos", "frontier", "--max-steps", "2",
                   "--seed", "0,1", "--snapshots", "--out", str(tmp_path)])
    assert rc == 0
    _, header, rows = table(tmp_path / "explore_summary.csv")
    assert header[:3] == ["planner", "runs", "mean_path_len"]
    assert rows[0][:2] == ["frontier", "2"]
    for seed in (0, 1):
        comments, h, steps = table(tmp_path / f"explore_frontier_seed{seed}.csv")
        assert f"# seed={seed}" in comments
        assert h[0] == "step" and len(steps) == 3
        assert len(list((tmp_path / f"snap_frontier_seed{seed}").glob("*.pgm"))) == 2


def test_mi_surface(tmp_path):
    g = new_grid(30, 20, 0.1)
    g.as_array()[:, :10] = 0.02
    save_grid_pgm(tmp_path / "map.pgm", g)
    rc = cli.main(["mi-surface", "--grid", str(tmp_path / "map.pgm"), "--beams", "16",
                   "--beam-length", "2", "--out", str(tmp_path)])
    assert rc == 0
    img = read_pgm(tmp_path / "mi_surface.pgm")
    assert img.shape == (20, 30)
    assert img.max() == pytest.approx(1.0)
    # scans from the unknown half see more than scans deep in known space
    assert img[:, 25].mean() > img[:, 2].mean()


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bench settings\nsigma = 0.1\nbeam-length=2.5\nseeds = 3, 5\n"
                   "algos = fsmi\nreps=7  # trailing comment\n")
    vals = cli.read_config_file(cfg)
    assert vals == {"sigma": 0.1, "beam_length": 2.5, "seeds": (3, 5), "algos": ("fsmi",),
                    "reps": 7}
    ns = cli._parser().parse_args(["bench-beam", "--config", str(cfg), "--reps", "9"])
    c = cli.config_from_args(ns)
    assert c.reps == 9 and c.sigma == 0.1 and c.seeds == (3, 5) and c.n_cells == 25


@pytest.mark.parametrize("text", ["sigma 0.1\n", "colour = red\n", "reps = many\n"])
def test_bad_config_file(tmp_path, text, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert cli.main(["bench-beam", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["bench-beam", "--algos", "nope"],
    ["bench-beam", "--sigma", "-1"],
    ["bench-beam", "--reps", "0"],
    ["bench-rle", "--L", "3"],
    ["explore", "--algos", "random"],
    ["mi-surface", "--grid", "/nonexistent/map.pgm"],
])
def test_errors_exit_2(argv, tmp_path):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as e:
        cli.main(["bench-beam", "--sigma", "abc"])
    assert e.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "fsmi", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for name in ("bench-beam", "bench-rle", "explore", "mi-surface"):
        assert name in r.stdout
