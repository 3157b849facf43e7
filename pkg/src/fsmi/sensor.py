"""Sensor noise models, the per-cell information kernel f(delta, r), and lookup tables.

All information quantities are in nats.  Tables are immutable after
construction and are shared freely between beams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

NOISE_KINDS = ("gaussian", "truncated_gaussian", "uniform")

CLAMP_EPS = 1e-4


@dataclass(frozen=True)
class SensorModel:
    """Range sensor with constant Gaussian (or derived uniform) noise.

    delta_emp is tied to delta_occ by delta_emp * delta_occ = 1.
    """

    sigma: float = 0.05
    delta_occ: float = 1.5
    max_range: float = 10.0
    noise_kind: str = "gaussian"
    trunc: int = 3
    uniform_h: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.delta_occ >= 1.0:
            raise ValueError("delta_occ must be >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if self.trunc < 1:
            raise ValueError("trunc must be >= 1")
        if self.uniform_h < 0:
            raise ValueError("uniform_h must be >= 0")

    @property
    def delta_emp(self) -> float:
        return 1.0 / self.delta_occ


def f_value(delta, r):
    """Information gained on a cell with odds r by an odds update of delta.

    f(delta, r) = ln((r + 1) / (r + 1/delta)) - ln(delta) / (r delta + 1)
    """
    delta = np.asarray(delta, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(delta <= 0) or np.any(r <= 0):
        raise ValueError("f_value needs delta > 0 and r > 0")
    out = np.log((r + 1.0) / (r + 1.0 / delta)) - np.log(delta) / (r * delta + 1.0)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Phi table

@dataclass(frozen=True)
class PhiTable:
    """Standard normal CDF sampled on [lo, hi] (sigma units), linearly interpolated."""

    lo: float
    hi: float
    step: float
    values: np.ndarray = field(repr=False)


def build_phi_table(lo: float = -6.0, hi: float = 6.0, step: float = 1e-3) -> PhiTable:
    n = int(round((hi - lo) / step)) + 1
    u = lo + step * np.arange(n)
    vals = ndtr(u)
    # force exact symmetry about the centre sample
    vals = 0.5 * (vals + (1.0 - vals[::-1]))
    vals[0], vals[-1] = 0.0, 1.0
    vals.setflags(write=False)
    return PhiTable(lo, hi, step, vals)


def phi(table: PhiTable, u):
    """Phi(u) by linear interpolation; saturates to 0 / 1 outside the table."""
    u = np.asarray(u, dtype=float)
    pos = (u - table.lo) / table.step
    last = len(table.values) - 1
    i = np.clip(np.floor(pos).astype(np.int64), 0, last - 1)
    frac = pos - i
    v = table.values[i] + frac * (table.values[i + 1] - table.values[i])
    v = np.where(pos <= 0, 0.0, np.where(pos >= last, 1.0, v))
    return v[()] if v.ndim == 0 else v


# ---------------------------------------------------------------------------
# f table on a log-odds axis

@dataclass(frozen=True)
class FTable:
    """f(delta_occ, r) sampled on a uniform, symmetric log-odds grid.

    Queries for delta_emp = 1/delta_occ use the mirrored index, which is the
    reciprocal identity f(delta_emp, r) = f(delta_occ, 1/r).
    """

    delta_occ: float
    lo: float
    step: float
    values: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.values)


def build_f_table(delta_occ: float, clamp_eps: float = CLAMP_EPS,
                  samples: int = 4096) -> FTable:
    a = math.log((1.0 - clamp_eps) / clamp_eps)
    step = 2.0 * a / (samples - 1)
    lr = -a + step * np.arange(samples)
    vals = np.asarray(f_value(delta_occ, np.exp(lr)), dtype=float)
    vals.setflags(write=False)
    return FTable(float(delta_occ), -a, step, vals)


def f_index(table: FTable, logodds):
    pos = (np.asarray(logodds, dtype=float) - table.lo) / table.step
    return np.clip(np.floor(pos + 0.5), 0, table.size - 1).astype(np.int64)


def f_lookup(table: FTable, delta_kind: str, r):
    """Nearest-sample lookup of f(delta_occ, r) or f(delta_emp, r)."""
    idx = f_index(table, np.log(np.asarray(r, dtype=float)))
    if delta_kind == "occ":
        out = table.values[idx]
    elif delta_kind == "emp":
        out = table.values[table.size - 1 - idx]
    else:
        raise ValueError("delta_kind must be 'occ' or 'emp'")
    return out[()] if np.ndim(out) == 0 else out


def gaussian_to_uniform_H(sigma: float, cell_width: float) -> int:
    """Uniform half-width (cells) matching the Gaussian's variance."""
    if sigma <= 0 or cell_width <= 0:
        raise ValueError("sigma and cell_width must be positive")
    s = sigma / cell_width
    return max(0, int(round(math.sqrt(3.0) * s - 0.5)))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MiTables:
    """Everything a per-beam MI kernel needs besides the beam itself."""

    sensor: SensorModel
    phi: PhiTable
    ftab: FTable


def build_tables(sensor: SensorModel, clamp_eps: float = CLAMP_EPS,
                 f_samples: int = 4096) -> MiTables:
    return MiTables(sensor, build_phi_table(),
                    build_f_table(sensor.delta_occ, clamp_eps, f_samples))
