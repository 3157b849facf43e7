"""Command-line harness: beam and RLE benchmarks, exploration runs, MI heat maps.

Every CSV starts with '#' comment lines echoing the configuration and a
build identifier, followed by a header row.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import explore as ex
from . import mi, rle
from .grid import load_grid_pgm, new_grid, save_grid_pgm, write_pgm
from .sensor import SensorModel, build_tables

DEFAULT_ALGOS = ("smi", "fsmi", "approx_fsmi", "uniform_fsmi", "csqmi_approx")
DEFAULT_PLANNERS = ("frontier", "info_approx_fsmi")
DEFAULT_L = (1, 2, 4, 8, 16, 32, 64, 128)


@dataclass
class BenchConfig:
    sigma: float = 0.05
    delta_occ: float = 1.5
    resolution: float = 0.1
    beam_length: float = 10.0
    lambda_z: float = 1e-5
    smi_step: float = 0.01
    trunc: int = 3
    uniform_h: int = 0
    seeds: tuple = (0,)
    reps: int = 1000
    err_beams: int = 100
    algos: tuple = ()
    out: str = "."
    n_beams: int = 180
    rle_n: int = 256
    l_list: tuple = DEFAULT_L
    entropy_threshold: float = 0.5
    max_steps: int = 200
    snapshots: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for k in ("sigma", "delta_occ", "resolution", "beam_length", "lambda_z", "smi_step"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.trunc < 1 or self.uniform_h < 0:
            raise ValueError("trunc must be >= 1 and uniform_h >= 0")
        self.seeds = tuple(int(s) for s in self.seeds) or (0,)
        self.algos = tuple(self.algos)
        self.l_list = tuple(int(v) for v in self.l_list)

    @property
    def sensor(self) -> SensorModel:
        return SensorModel(self.sigma, self.delta_occ, self.beam_length, trunc=self.trunc,
                           uniform_h=self.uniform_h)

    @property
    def n_cells(self) -> int:
        return int(round(self.beam_length / self.resolution))


# ---------------------------------------------------------------------------
# config plumbing

_TUPLE_INT = {"seeds", "l_list"}
_TUPLE_STR = {"algos"}


def _coerce(name: str, raw):
    f = {x.name: x for x in dataclasses.fields(BenchConfig)}[name]
    if name in _TUPLE_INT:
        return tuple(int(v) for v in str(raw).replace(" ", "").split(",") if v)
    if name in _TUPLE_STR:
        return tuple(v for v in str(raw).replace(" ", "").split(",") if v)
    if f.type in ("bool", bool):
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    return str(raw)


def read_config_file(path) -> dict:
    """Plain key=value lines; '#' starts a comment.  Keys may use dashes."""
    names = {x.name for x in dataclasses.fields(BenchConfig)}
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = (p.strip() for p in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in names:
            raise ValueError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = _coerce(k, v)
    return out


def build_id() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                           cwd=Path(__file__).resolve().parent, capture_output=True,
                           text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return f"{__version__}+{r.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def csv_text(config: BenchConfig, header, rows, extra: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# build={build_id()}\n")
    for k, v in dataclasses.asdict(config).items():
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        buf.write(f"# {k}={v}\n")
    for k, v in (extra or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def _emit(config: BenchConfig, name: str, text: str, stream) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    if stream is not None:
        stream.write(text)
    return path


# ---------------------------------------------------------------------------
# commands

def bench_beam_rows(config: BenchConfig) -> list:
    algos = config.algos or DEFAULT_ALGOS
    unknown = set(algos) - set(DEFAULT_ALGOS)
    if unknown:
        raise ValueError(f"unknown algorithms: {sorted(unknown)}")
    sensor = config.sensor
    tables = build_tables(sensor)
    n = config.n_cells
    rng = np.random.default_rng(config.seeds[0])
    O = mi.random_batch(rng, config.reps, n)
    width = config.resolution
    ne = min(config.err_beams, config.reps)
    truth = np.array([mi.smi_reference(mi.BeamView.uniform_beam(O[i], width), sensor,
                                       config.lambda_z, method="shared") for i in range(ne)])
    rows = []
    for algo in algos:
        D, H = config.trunc, config.uniform_h
        kw = dict(delta=D, H=H, step=config.smi_step)
        mi.time_batch(algo, O[:2], width, sensor, tables, **kw)
        chunk = max(1, min(100, config.reps // 10 or 1))
        per = []
        total = 0.0
        for a in range(0, config.reps, chunk):
            ns, _ = mi.time_batch(algo, O[a:a + chunk], width, sensor, tables, warmup=0, **kw)
            per.append(ns)
            total += ns * O[a:a + chunk].shape[0]
        vals, mults = [], 0
        for i in range(ne):
            beam = mi.BeamView.uniform_beam(O[i], width)
            if algo == "smi":
                v = mi.smi_reference(beam, sensor, config.smi_step)
            elif algo == "fsmi":
                r = mi.fsmi(beam, sensor, tables)
                v, mults = r.mi, r.multiplications
            elif algo == "approx_fsmi":
                r = mi.approx_fsmi(beam, sensor, D, tables)
                v, mults = r.mi, r.multiplications
            elif algo == "uniform_fsmi":
                r = mi.uniform_fsmi(beam, sensor, H, tables)
                v, mults = r.mi, r.multiplications
            else:
                r = mi.csqmi_approx(beam, sensor, D)
                v, mults = r.mi, r.multiplications
            vals.append(v)
        err = float(np.mean(np.abs(np.array(vals) - truth) / np.abs(truth)))
        rows.append([algo, n, total / config.reps, float(np.median(per)), err, mults])
    return rows


def cmd_bench_beam(config: BenchConfig, stream=sys.stdout) -> Path:
    """Per-algorithm time per beam and error against the fine SMI ground truth.

    rel_err for csqmi_approx compares a different quantity and is reported
    only for completeness.
    """
    rows = [[_fmt(v) for v in r] for r in bench_beam_rows(config)]
    text = csv_text(config, ["algorithm", "n", "mean_ns", "p50_ns", "rel_err_mean", "mults"],
                    rows, {"p50": "median over chunks of up to 100 beams"})
    return _emit(config, "bench_beam.csv", text, stream)


def bench_rle_rows(config: BenchConfig) -> list:
    n = config.rle_n
    bad = [L for L in config.l_list if L < 1 or n % L]
    if bad:
        raise ValueError(f"L values must divide n={n}: {bad}")
    sensor = config.sensor
    tables = build_tables(sensor)
    D = config.trunc
    rt = rle.build_rle_tables(tables, config.resolution, 2 * D, rle.L_MAX)
    rng = np.random.default_rng(config.seeds[0])
    rows = []
    for L in config.l_list:
        seqs = [rle.random_sequence(rng, n, L, w0=config.resolution) for _ in range(config.reps)]
        KS = np.array([q.k for q in seqs])
        LS = np.array([q.lengths for q in seqs])
        O = np.array([q.decompress() for q in seqs])
        mi.time_batch("approx_fsmi", O[:2], config.resolution, sensor, tables, delta=D)
        rle.time_rle_batch(KS[:2], LS[:2], D, rt)
        ta = min(mi.time_batch("approx_fsmi", O, config.resolution, sensor, tables,
                               delta=D, warmup=0)[0] for _ in range(3))
        tr = min(rle.time_rle_batch(KS, LS, D, rt)[0] for _ in range(3))
        err = 0.0
        for q in seqs[:min(20, len(seqs))]:
            a = mi.approx_fsmi(mi.BeamView.uniform_beam(q.decompress(), config.resolution),
                               sensor, D, tables, kernel="pdf").mi
            b = rle.approx_fsmi_rle(q, sensor, D, rt).mi
            err = max(err, abs(a - b) / abs(a))
        rows.append([L, n, n // L, ta, tr, ta / tr, err])
    return rows


def cmd_bench_rle(config: BenchConfig, stream=sys.stdout) -> Path:
    """approx_fsmi on decompressed beams against approx_fsmi_rle, per group length."""
    rows = [[_fmt(v) for v in r] for r in bench_rle_rows(config)]
    text = csv_text(config, ["L", "n", "n_r", "approx_ns", "rle_ns", "ratio", "rel_err"], rows,
                    {"timing": "min of 3 batched passes"})
    return _emit(config, "bench_rle.csv", text, stream)


def cmd_explore(config: BenchConfig, stream=sys.stdout) -> Path:
    """Every planner on every seed; per-run logs plus a summary CSV."""
    planners = config.algos or DEFAULT_PLANNERS
    unknown = set(planners) - set(ex.PLANNERS)
    if unknown:
        raise ValueError(f"unknown planners: {sorted(unknown)}")
    sensor = config.sensor
    tables = build_tables(sensor)
    ecfg = ex.ExploreConfig(n_beams=config.n_beams, entropy_threshold=config.entropy_threshold,
                            max_steps=config.max_steps, delta=config.trunc, H=config.uniform_h)
    out = Path(config.out)
    summary = []
    for planner in planners:
        logs = []
        for seed in config.seeds:
            world = ex.generate_world(seed, resolution=config.resolution)
            snap = None
            if config.snapshots:
                sdir = out / f"snap_{planner}_seed{seed}"
                sdir.mkdir(parents=True, exist_ok=True)

                def snap(step, grid, sdir=sdir):
                    save_grid_pgm(sdir / f"step{step:04d}.pgm", grid)
            log = ex.run_exploration(world, sensor, planner, config=ecfg, tables=tables,
                                     snapshot=snap)
            _emit(config, f"explore_{planner}_seed{seed}.csv",
                  csv_text(config, *_log_table(log), {"planner": planner, "seed": seed,
                                                      "reason": log.reason}), None)
            logs.append(log)
        us = [lg.us_per_beam for lg in logs if lg.mi_beams]
        summary.append([planner, len(logs), float(np.mean([lg.total_path_m for lg in logs])),
                        float(np.mean([lg.final_entropy for lg in logs])),
                        float(np.mean(us)) if us else float("nan"),
                        "|".join(lg.reason for lg in logs)])
    rows = [[_fmt(v) for v in r] for r in summary]
    text = csv_text(config, ["planner", "runs", "mean_path_len", "mean_final_entropy",
                             "mean_us_per_beam", "reasons"], rows)
    return _emit(config, "explore_summary.csv", text, stream)


def _log_table(log: ex.ExplorationLog):
    lines = log.to_csv().splitlines()
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def mi_surface_image(grid, config: BenchConfig, algorithm: str = "approx_fsmi") -> np.ndarray:
    """MI of a scan from every cell centre (zero inside believed obstacles)."""
    sensor = SensorModel(config.sigma, config.delta_occ, config.beam_length)
    tables = build_tables(sensor)
    h, w = grid.shape
    iy, ix = np.mgrid[0:h, 0:w]
    ok = grid.as_array() < 0.5 + ex.UNKNOWN_BAND
    xs = (ix[ok] + 0.5) * grid.resolution
    ys = (iy[ok] + 0.5) * grid.resolution
    vals = ex.poses_information(grid, tables, xs, ys,
                                ex.MiSettings(algorithm, config.n_beams, config.trunc,
                                              config.uniform_h))
    img = np.zeros((h, w))
    img[ok] = vals
    return img


def cmd_mi_surface(config: BenchConfig, grid_file=None, stream=sys.stdout) -> Path:
    """Heat map of per-cell scan MI, scaled so the maximum maps to 255."""
    algo = (config.algos or ("approx_fsmi",))[0]
    if grid_file is None:
        grid = new_grid(64, 64, config.resolution)
    else:
        grid = load_grid_pgm(grid_file, config.resolution)
    img = mi_surface_image(grid, config, algo)
    top = img.max()
    norm = img / top if top > 0 else img
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mi_surface.pgm"
    write_pgm(path, norm)
    if stream is not None:
        stream.write(f"# build={build_id()}\n# algorithm={algo}\n# max_mi={top:.6g}\n{path}\n")
    return path


# ---------------------------------------------------------------------------
# argument parsing

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", help="key=value file; flags override it")
    g.add_argument("--sigma", type=float)
    g.add_argument("--delta-occ", type=float)
    g.add_argument("--resolution", type=float)
    g.add_argument("--beam-length", type=float)
    g.add_argument("--lambda-z", type=float, help="ground-truth integration step (m)")
    g.add_argument("--trunc", type=int, help="truncation width Delta (cells)")
    g.add_argument("--uniform-h", type=int)
    g.add_argument("--seed", dest="seeds", help="seed or comma-separated seeds")
    g.add_argument("--reps", type=int)
    g.add_argument("--algos", help="comma-separated algorithms or planners")
    g.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="fsmi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bench-beam", parents=[common], help="per-beam accuracy and speed")
    r = sub.add_parser("bench-rle", parents=[common], help="RLE speed-up versus L")
    r.add_argument("--L", dest="l_list", help="comma-separated group lengths")
    e = sub.add_parser("explore", parents=[common], help="exploration runs")
    e.add_argument("--snapshots", action="store_true", default=None,
                   help="write a PGM of the map after every step")
    e.add_argument("--max-steps", type=int)
    e.add_argument("--entropy-threshold", type=float)
    m = sub.add_parser("mi-surface", parents=[common], help="MI heat map as PGM")
    m.add_argument("--grid", help="occupancy grid PGM (default: 64x64 uniform prior)")
    for q in (e, m):
        q.add_argument("--beams", dest="n_beams", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> BenchConfig:
    vals = read_config_file(ns.config) if getattr(ns, "config", None) else {}
    names = {x.name for x in dataclasses.fields(BenchConfig)}
    for k, v in vars(ns).items():
        if k in names and v is not None:
            vals[k] = _coerce(k, v) if isinstance(v, str) and k != "out" else v
    if ns.command == "bench-rle" and "reps" not in vals:
        vals["reps"] = 10000
    return BenchConfig(**vals)


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    try:
        config = config_from_args(ns)
        if ns.command == "bench-beam":
            cmd_bench_beam(config, sys.stdout)
        elif ns.command == "bench-rle":
            cmd_bench_rle(config, sys.stdout)
        elif ns.command == "explore":
            cmd_explore(config, sys.stdout)
        else:
            cmd_mi_surface(config, ns.grid, sys.stdout)
    except (ValueError, OSError) as exc:
        print(f"fsmi: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
