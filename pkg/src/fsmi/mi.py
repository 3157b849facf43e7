"""Per-beam mutual information on uncompressed occupancy sequences.

Conventions
-----------
Cells are numbered 1..n along the beam.  The all-empty event e_0 is placed
on a virtual cell [l_{n+1}, l_{n+1} + wbar] just past the last boundary; the
kernels store it at index n + 1.  Readings that land outside [0, l_{n+1})
carry no information (F(z) = 0 there), which is what summing k over 1..n
in the FSMI double sum means.

Every kernel returns (mi, mults) where mults counts the floating point
multiplications written in its per-beam loops.  Table lookups are not
counted, so the interpolation arithmetic inside a Phi or f lookup is free.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .grid import RayTrace
from .sensor import CLAMP_EPS, MiTables, SensorModel, f_value

UNIFORM_RTOL = 1e-9
SUPPORT_SIGMAS = 6.0
SHARED_SIGMAS = 8.0


@dataclass(frozen=True)
class BeamView:
    """Occupancies and geometry of the cells one beam crosses."""

    occupancies: np.ndarray
    odds: np.ndarray
    logodds: np.ndarray
    boundaries: np.ndarray
    centers: np.ndarray
    wbar: float
    uniform: bool
    ext_bounds: np.ndarray = field(repr=False)
    ext_centers: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.occupancies)

    @classmethod
    def from_arrays(cls, occupancies, boundaries) -> "BeamView":
        o = np.ascontiguousarray(occupancies, dtype=float)
        l = np.ascontiguousarray(boundaries, dtype=float)
        if o.ndim != 1 or o.size < 1:
            raise ValueError("need at least one cell")
        if l.shape != (o.size + 1,):
            raise ValueError("boundaries must have n + 1 entries")
        if np.any(np.diff(l) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        if np.any(o <= 0) or np.any(o >= 1):
            raise ValueError("occupancies must lie in (0, 1)")
        w = np.diff(l)
        wbar = float((l[-1] - l[0]) / o.size)
        uniform = bool(np.all(np.abs(w - wbar) <= UNIFORM_RTOL * wbar))
        odds = o / (1.0 - o)
        ext_b = np.append(l, l[-1] + wbar)
        ext_c = 0.5 * (ext_b[:-1] + ext_b[1:])
        return cls(o, odds, np.log(odds), l, ext_c[:-1].copy(), wbar, uniform, ext_b, ext_c)

    @classmethod
    def uniform_beam(cls, occupancies, width: float = 0.1) -> "BeamView":
        o = np.asarray(occupancies, dtype=float)
        return cls.from_arrays(o, width * np.arange(o.size + 1))

    @classmethod
    def from_ray(cls, ray: RayTrace) -> "BeamView":
        return cls.from_arrays(ray.occupancies, ray.boundaries)


@dataclass(frozen=True)
class HitDistribution:
    """P(e_0) at index 0 followed by P(e_1)..P(e_n)."""

    p: np.ndarray

    @property
    def p0(self) -> float:
        return float(self.p[0])


@dataclass(frozen=True)
class MiBreakdown:
    mi: float
    multiplications: int
    elapsed_ns: int


# ---------------------------------------------------------------------------
# lookups

@njit(cache=True, inline="always")
def _phi(d, tab, pa, pb):
    pos = d * pa + pb
    if pos <= 0.0:
        return 0.0
    last = tab.shape[0] - 1
    if pos >= last:
        return 1.0
    i = int(pos)
    return tab[i] + (pos - i) * (tab[i + 1] - tab[i])


@njit(cache=True, inline="always")
def _fidx(lr, fa, fb, nf):
    k = int(math.floor(lr * fa + fb + 0.5))
    if k < 0:
        return 0
    if k > nf - 1:
        return nf - 1
    return k


def _phi_args(tables: MiTables):
    ph = tables.phi
    s = tables.sensor.sigma
    return ph.values, 1.0 / (s * ph.step), -ph.lo / ph.step


def _f_args(tables: MiTables):
    ft = tables.ftab
    return ft.values, 1.0 / ft.step, -ft.lo / ft.step


# ---------------------------------------------------------------------------
# building blocks (Alg. 2 / Alg. 3 style forward passes)

@njit(cache=True)
def _pe_kernel(occ, P):
    """P[1..n] = P(e_j), P[n + 1] = P(e_0)."""
    n = occ.shape[0]
    E = 1.0
    for j in range(n):
        p = E * occ[j]
        P[j + 1] = p
        E -= p
    P[n + 1] = E
    return n


@njit(cache=True)
def _ck_kernel(lo, fvals, fa, fb, C, off):
    """C[off + k] = C_k for k = 1..n via the q prefix recurrence."""
    n = lo.shape[0]
    nf = fvals.shape[0]
    q = 0.0
    for k in range(n):
        i = _fidx(lo[k], fa, fb, nf)
        C[off + k + 1] = q + fvals[i]
        q += fvals[nf - 1 - i]


@njit(cache=True)
def _ck_marked_kernel(lo, mask, fvals, fa, fb, C, off):
    """As _ck_kernel but cells with mask != 0 contribute no information."""
    n = lo.shape[0]
    nf = fvals.shape[0]
    q = 0.0
    for k in range(n):
        if mask[k]:
            C[off + k + 1] = q
            continue
        i = _fidx(lo[k], fa, fb, nf)
        C[off + k + 1] = q + fvals[i]
        q += fvals[nf - 1 - i]


def compute_pe(beam: BeamView) -> HitDistribution:
    P = np.empty(beam.n + 2)
    _pe_kernel(beam.occupancies, P)
    return HitDistribution(np.concatenate(([P[beam.n + 1]], P[1:beam.n + 1])))


def compute_ck(beam: BeamView, tables: MiTables) -> np.ndarray:
    """C_1..C_n from the f lookup table."""
    C = np.zeros(beam.n + 1)
    _ck_kernel(beam.logodds, *_f_args(tables), C, 0)
    return C[1:]


def compute_ck_exact(beam: BeamView, sensor: SensorModel) -> np.ndarray:
    """C_1..C_n from the closed-form f (no table)."""
    focc = f_value(sensor.delta_occ, beam.odds)
    femp = f_value(sensor.delta_emp, beam.odds)
    q = np.concatenate(([0.0], np.cumsum(femp)[:-1]))
    return q + focc


# ---------------------------------------------------------------------------
# numerical-integration baseline

@njit(cache=True)
def _f_closed(delta, r):
    return math.log((r + 1.0) / (r + 1.0 / delta)) - math.log(delta) / (r * delta + 1.0)


@njit(cache=True)
def _smi_per_cell(occ, odds, bext, cext, sigma, d_occ, d_emp, step, zmax, shift):
    """Per-cell Riemann sums: sum_i sum_z P(z) f(delta_i(z), r_i) step."""
    n = occ.shape[0]
    P = np.empty(n + 2)
    _pe_kernel(occ, P)
    M = int(math.ceil(zmax / step - shift))
    Pz = np.empty(M)
    cell = np.empty(M, dtype=np.int64)
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    inv2s2 = 0.5 / (sigma * sigma)
    tol = 1e-9 * step
    k = 1
    for m in range(M):
        z = (m + shift) * step
        acc = 0.0
        for j in range(1, n + 2):
            d = z - cext[j - 1]
            acc += P[j] * math.exp(-d * d * inv2s2)
        Pz[m] = acc * norm
        while k <= n and z >= bext[k] - tol:
            k += 1
        cell[m] = k if k <= n else 0
    total = 0.0
    for i in range(1, n + 1):
        r = odds[i - 1]
        acc = 0.0
        for m in range(M):
            c = cell[m]
            if c == 0 or c < i:
                delta = 1.0
            elif c == i:
                delta = d_occ
            else:
                delta = d_emp
            acc += Pz[m] * _f_closed(delta, r)
        total += acc * step
    return total


@njit(cache=True)
def _smi_shared(occ, bext, cext, C, sigma, step, width_sig, shift):
    """sum_j P(e_j) * Riemann sum of N(z; mu_j, sigma) F(z) over mu_j +- width_sig sigma."""
    n = occ.shape[0]
    P = np.empty(n + 2)
    _pe_kernel(occ, P)
    lend = bext[n]
    tol = 1e-9 * step
    norm = step / (math.sqrt(2.0 * math.pi) * sigma)
    inv2s2 = 0.5 / (sigma * sigma)
    ratio_step = math.exp(-step * step / (sigma * sigma))
    total = 0.0
    for j in range(1, n + 2):
        mu = cext[j - 1]
        zlo = max(0.0, mu - width_sig * sigma)
        zhi = min(lend, mu + width_sig * sigma)
        if zhi <= zlo:
            continue
        m0 = int(math.ceil(zlo / step - shift))
        if m0 < 0:
            m0 = 0
        m1 = int(math.floor(zhi / step - shift))
        # locate the cell of the first sample
        k = 1
        z0 = (m0 + shift) * step
        while k < n and z0 >= bext[k] - tol:
            k += 1
        acc = 0.0
        m = m0
        while m <= m1:
            z = (m + shift) * step
            if z >= lend - tol:
                break
            while z >= bext[k] - tol:
                k += 1
            # run of samples inside cell k, at most 1024 per exact reseed
            mend = min(m1, m + 1023)
            d = z - mu
            g = math.exp(-d * d * inv2s2)
            rr = math.exp(-(2.0 * d * step + step * step) * inv2s2)
            ck = C[k]
            cell_acc = 0.0
            edge = bext[k] - tol
            while m <= mend:
                z = (m + shift) * step
                if z >= edge:
                    break
                cell_acc += g
                g *= rr
                rr *= ratio_step
                m += 1
            acc += ck * cell_acc
        total += P[j] * acc
    return total * norm


def _smi_zmax(beam: BeamView, sigma: float) -> float:
    return float(beam.boundaries[-1] + beam.wbar + SUPPORT_SIGMAS * sigma)


SAMPLE_SHIFT = {"left": 0.0, "midpoint": 0.5}


def smi_reference(beam: BeamView, sensor: SensorModel, step: float,
                  method: str = "per_cell", rule: str = "left") -> float:
    """Shannon MI of the beam by numerical integration over the range reading.

    Readings are sampled at z = m * step (rule="left") or (m + 1/2) * step
    (rule="midpoint"), each with weight step.  A sample on a cell boundary
    belongs to the cell that starts there.

    method="per_cell" evaluates each cell's integral separately with the
    closed-form f, the way the numerical baseline is usually written.
    method="shared" folds the cells through F(z) = C_k and truncates each
    Gaussian at 8 sigma; it is the fast path used for fine ground truth.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if rule not in SAMPLE_SHIFT:
        raise ValueError(f"unknown rule {rule!r}")
    shift = SAMPLE_SHIFT[rule]
    if method == "per_cell":
        return float(_smi_per_cell(beam.occupancies, beam.odds, beam.ext_bounds,
                                   beam.ext_centers, sensor.sigma, sensor.delta_occ,
                                   sensor.delta_emp, float(step), _smi_zmax(beam, sensor.sigma),
                                   shift))
    if method == "shared":
        C = np.zeros(beam.n + 2)
        C[1:beam.n + 1] = compute_ck_exact(beam, sensor)
        return float(_smi_shared(beam.occupancies, beam.ext_bounds, beam.ext_centers, C,
                                 sensor.sigma, float(step), SHARED_SIGMAS, shift))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# FSMI

@njit(cache=True)
def _fsmi_cdf(occ, lo, bext, cext, fvals, fa, fb, tab, pa, pb):
    n = occ.shape[0]
    P = np.empty(n + 2)
    C = np.zeros(n + 2)
    E = 1.0
    m = 0
    for j in range(n):
        p = E * occ[j]
        m += 1
        P[j + 1] = p
        E -= p
    P[n + 1] = E
    _ck_kernel(lo, fvals, fa, fb, C, 0)
    total = 0.0
    for j in range(1, n + 2):
        mu = cext[j - 1]
        prev = _phi(bext[0] - mu, tab, pa, pb)
        s = 0.0
        for k in range(1, n + 1):
            cur = _phi(bext[k] - mu, tab, pa, pb)
            s += C[k] * (cur - prev)
            prev = cur
        m += n
        total += P[j] * s
        m += 1
    return total, m


@njit(cache=True)
def _fsmi_offsets(occ, lo, fvals, fa, fb, g):
    """Full double sum with an offset kernel g[|k - j|] (uniform widths)."""
    n = occ.shape[0]
    P = np.empty(n + 2)
    C = np.zeros(n + 2)
    _pe_kernel(occ, P)
    _ck_kernel(lo, fvals, fa, fb, C, 0)
    total = 0.0
    m = n
    for j in range(1, n + 2):
        s = 0.0
        for k in range(1, n + 1):
            d = k - j if k >= j else j - k
            s += C[k] * g[d]
        m += n + 1
        total += P[j] * s
    return total, m


def _offset_kernel(beam: BeamView, tables: MiTables, kernel: str, dmax: int) -> np.ndarray:
    """Symmetric G as a function of the cell offset for uniform beams."""
    if not beam.uniform:
        raise ValueError("offset kernels need constant cell widths")
    sigma = tables.sensor.sigma
    w = beam.wbar
    d = np.arange(dmax + 1, dtype=float)
    if kernel == "pdf":
        sp = sigma / w
        return np.exp(-d * d / (2.0 * sp * sp)) / (math.sqrt(2.0 * math.pi) * sp)
    if kernel == "cdf":
        tab, pa, pb = _phi_args(tables)
        hi = np.array([_phi((di + 0.5) * w, tab, pa, pb) for di in d])
        lo = np.array([_phi((di - 0.5) * w, tab, pa, pb) for di in d])
        return hi - lo
    raise ValueError(f"unknown kernel {kernel!r}")


def _timed(fn, *args):
    t0 = time.perf_counter_ns()
    out = fn(*args)
    return out, time.perf_counter_ns() - t0


def _require_gaussian(sensor: SensorModel):
    if sensor.noise_kind == "uniform":
        raise ValueError("this algorithm needs Gaussian noise")


def fsmi(beam: BeamView, sensor: SensorModel, tables: MiTables,
         kernel: str = "cdf") -> MiBreakdown:
    """Exact FSMI double sum over P(e_j) C_k G_{k,j}.

    kernel="pdf" swaps the cell-integrated G for the Gaussian density at
    integer cell offsets; it exists to compare against the RLE variants.
    """
    _require_gaussian(sensor)
    ftab, fa, fb = _f_args(tables)
    if kernel == "cdf":
        tab, pa, pb = _phi_args(tables)
        (mi, m), dt = _timed(_fsmi_cdf, beam.occupancies, beam.logodds, beam.ext_bounds,
                             beam.ext_centers, ftab, fa, fb, tab, pa, pb)
    else:
        g = _offset_kernel(beam, tables, kernel, beam.n + 1)
        (mi, m), dt = _timed(_fsmi_offsets, beam.occupancies, beam.logodds, ftab, fa, fb, g)
    return MiBreakdown(float(mi), int(m), int(dt))


# ---------------------------------------------------------------------------
# Approx-FSMI

@njit(cache=True)
def _approx_fold(occ, lo, fvals, fa, fb, g):
    """Truncated sum for uniform widths: g[d] = G at offset d, d = 0..Delta.

    Per cell: one product for P(e_j), Delta + 1 for the folded window and one
    for P(e_j) * window, i.e. (Delta + 3) multiplications.
    """
    n = occ.shape[0]
    D = g.shape[0] - 1
    Cp = np.zeros(n + 2 * D + 2)
    _ck_kernel(lo, fvals, fa, fb, Cp, D)
    E = 1.0
    total = 0.0
    m = 0
    for j in range(1, n + 2):
        if j <= n:
            p = E * occ[j - 1]
            E -= p
            m += 1
        else:
            p = E
        c = D + j
        s = g[0] * Cp[c]
        for d in range(1, D + 1):
            s += g[d] * (Cp[c + d] + Cp[c - d])
        total += p * s
        m += D + 2
    return total, m


@njit(cache=True)
def _approx_cdf(occ, lo, bext, cext, fvals, fa, fb, tab, pa, pb, D):
    """Truncated sum with per-pair Phi lookups (any cell widths)."""
    n = occ.shape[0]
    C = np.zeros(n + 2)
    _ck_kernel(lo, fvals, fa, fb, C, 0)
    E = 1.0
    total = 0.0
    m = 0
    for j in range(1, n + 2):
        if j <= n:
            p = E * occ[j - 1]
            E -= p
            m += 1
        else:
            p = E
        mu = cext[j - 1]
        k0 = max(1, j - D)
        k1 = min(n, j + D)
        s = 0.0
        if k0 <= k1:
            prev = _phi(bext[k0 - 1] - mu, tab, pa, pb)
            for k in range(k0, k1 + 1):
                cur = _phi(bext[k] - mu, tab, pa, pb)
                s += C[k] * (cur - prev)
                prev = cur
            m += k1 - k0 + 1
        total += p * s
        m += 1
    return total, m


def approx_fsmi(beam: BeamView, sensor: SensorModel, delta: int, tables: MiTables,
                kernel: str = "cdf") -> MiBreakdown:
    """FSMI with G_{k,j} set to zero for |k - j| > delta."""
    _require_gaussian(sensor)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    ftab, fa, fb = _f_args(tables)
    if beam.uniform:
        D = min(int(delta), beam.n + 1)
        g = _offset_kernel(beam, tables, kernel, D)
        (mi, m), dt = _timed(_approx_fold, beam.occupancies, beam.logodds, ftab, fa, fb, g)
    elif kernel == "cdf":
        tab, pa, pb = _phi_args(tables)
        (mi, m), dt = _timed(_approx_cdf, beam.occupancies, beam.logodds, beam.ext_bounds,
                             beam.ext_centers, ftab, fa, fb, tab, pa, pb, int(delta))
    else:
        raise ValueError("the pdf kernel needs constant cell widths")
    return MiBreakdown(float(mi), int(m), int(dt))


# ---------------------------------------------------------------------------
# Uniform-FSMI

@njit(cache=True)
def _uniform_kernel(occ, lo, fvals, fa, fb, H):
    n = occ.shape[0]
    C = np.zeros(n + 2)
    _ck_kernel(lo, fvals, fa, fb, C, 0)
    Dp = np.empty(n + 1)
    Dp[0] = 0.0
    for i in range(1, n + 1):
        Dp[i] = Dp[i - 1] + C[i]
    E = 1.0
    total = 0.0
    m = 0
    for j in range(1, n + 2):
        if j <= n:
            p = E * occ[j - 1]
            E -= p
            m += 1
        else:
            p = E
        hi = min(n, j + H)
        lo_ = max(0, j - H - 1)
        total += p * (Dp[hi] - Dp[lo_])
        m += 1
    return total / (2 * H + 1), m + 1


def uniform_fsmi(beam: BeamView, sensor: SensorModel, H: int, tables: MiTables) -> MiBreakdown:
    """O(n) MI under uniform noise quantised to H cells on either side.

    Only cell indices enter the formula, so partial first or last cells are
    treated as full width; interior widths must agree.
    """
    if H < 0:
        raise ValueError("H must be >= 0")
    if beam.n > 2:
        w = np.diff(beam.boundaries)[1:-1]
        if np.any(np.abs(w - w[0]) > UNIFORM_RTOL * w[0]):
            raise ValueError("uniform_fsmi needs constant cell widths")
    ftab, fa, fb = _f_args(tables)
    (mi, m), dt = _timed(_uniform_kernel, beam.occupancies, beam.logodds, ftab, fa, fb, int(H))
    return MiBreakdown(float(mi), int(m), int(dt))


# ---------------------------------------------------------------------------
# CSQMI

@njit(cache=True)
def _csqmi_weights(occ, P, W):
    """P(e_l) and w_l = P(e_l)^2 * prod_{j > l} (o_j^2 + (1 - o_j)^2); returns prod over all."""
    n = occ.shape[0]
    E = 1.0
    m = 0
    s = np.empty(n + 2)
    for j in range(n):
        o = occ[j]
        om = 1.0 - o
        p = E * o
        P[j + 1] = p
        E -= p
        t = o * om
        s[j + 1] = 1.0 - (t + t)
        m += 2
    P[n + 1] = E
    S = 1.0
    for l in range(n + 1, 0, -1):
        pl = P[l]
        W[l] = pl * pl * S
        m += 2
        if l <= n:
            S *= s[l]
            m += 1
    return S, m


@njit(cache=True)
def _csqmi_exact_kernel(occ, cext, sigma):
    n = occ.shape[0]
    P = np.zeros(n + 2)
    W = np.zeros(n + 2)
    S, m = _csqmi_weights(occ, P, W)
    var2 = 2.0 * sigma * sigma
    k0 = 1.0 / math.sqrt(2.0 * math.pi * var2)
    inv = 0.5 / var2
    a = 0.0
    for l in range(1, n + 2):
        a += W[l]
    a *= k0
    b = 0.0
    c = 0.0
    for j in range(1, n + 2):
        sb = 0.0
        sc = 0.0
        for l in range(1, n + 2):
            d = cext[l - 1] - cext[j - 1]
            kk = k0 * math.exp(-d * d * inv)
            sb += P[l] * kk
            sc += W[l] * kk
        b += P[j] * sb
        c += P[j] * sc
    return math.log(a) + math.log(S * b) - 2.0 * math.log(c), m


@njit(cache=True)
def _csqmi_fold(occ, K):
    """Truncated CSQMI for uniform widths, K[d] = N(d w; 0, 2 sigma^2)."""
    n = occ.shape[0]
    D = K.shape[0] - 1
    Pp = np.zeros(n + 2 * D + 2)
    Wp = np.zeros(n + 2 * D + 2)
    E = 1.0
    S = 1.0
    m = 0
    s = np.empty(n + 2)
    for j in range(n):
        o = occ[j]
        p = E * o
        Pp[D + j + 1] = p
        E -= p
        t = o * (1.0 - o)
        s[j + 1] = 1.0 - (t + t)
        m += 2
    Pp[D + n + 1] = E
    for l in range(n + 1, 0, -1):
        pl = Pp[D + l]
        Wp[D + l] = pl * pl * S
        m += 2
        if l <= n:
            S *= s[l]
            m += 1
    a = 0.0
    b = 0.0
    c = 0.0
    k0 = K[0]
    for j in range(1, n + 2):
        i = D + j
        a += Wp[i]
        sb = k0 * Pp[i]
        sc = k0 * Wp[i]
        for d in range(1, D + 1):
            sb += K[d] * (Pp[i + d] + Pp[i - d])
            sc += K[d] * (Wp[i + d] + Wp[i - d])
        b += Pp[i] * sb
        c += Pp[i] * sc
        m += 2 * D + 4
    a *= k0
    m += 2
    return math.log(a) + math.log(S * b) - 2.0 * math.log(c), m


@njit(cache=True)
def _csqmi_window(occ, cext, sigma, D):
    """Truncated CSQMI with per-pair kernel evaluation (any widths)."""
    n = occ.shape[0]
    P = np.zeros(n + 2)
    W = np.zeros(n + 2)
    S, m = _csqmi_weights(occ, P, W)
    var2 = 2.0 * sigma * sigma
    k0 = 1.0 / math.sqrt(2.0 * math.pi * var2)
    inv = 0.5 / var2
    a = 0.0
    b = 0.0
    c = 0.0
    for j in range(1, n + 2):
        a += W[j]
        sb = 0.0
        sc = 0.0
        for l in range(max(1, j - D), min(n + 1, j + D) + 1):
            d = cext[l - 1] - cext[j - 1]
            kk = k0 * math.exp(-d * d * inv)
            sb += P[l] * kk
            sc += W[l] * kk
            m += 5
        b += P[j] * sb
        c += P[j] * sc
        m += 2
    a *= k0
    return math.log(a) + math.log(S * b) - 2.0 * math.log(c), m + 2


def csqmi_exact(beam: BeamView, sensor: SensorModel) -> MiBreakdown:
    """Cauchy-Schwarz quadratic MI of the beam, O(n^2)."""
    _require_gaussian(sensor)
    (v, m), dt = _timed(_csqmi_exact_kernel, beam.occupancies, beam.ext_centers, sensor.sigma)
    return MiBreakdown(float(v), int(m), int(dt))


def csqmi_kernel(beam: BeamView, sigma: float, delta: int) -> np.ndarray:
    d = np.arange(delta + 1, dtype=float) * beam.wbar
    var2 = 2.0 * sigma * sigma
    return np.exp(-d * d / (2.0 * var2)) / math.sqrt(2.0 * math.pi * var2)


def csqmi_approx(beam: BeamView, sensor: SensorModel, delta: int) -> MiBreakdown:
    """CSQMI with both double sums restricted to |l - j| <= delta."""
    _require_gaussian(sensor)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if beam.uniform:
        K = csqmi_kernel(beam, sensor.sigma, min(int(delta), beam.n + 1))
        (v, m), dt = _timed(_csqmi_fold, beam.occupancies, K)
    else:
        (v, m), dt = _timed(_csqmi_window, beam.occupancies, beam.ext_centers,
                            sensor.sigma, int(delta))
    return MiBreakdown(float(v), int(m), int(dt))


# ---------------------------------------------------------------------------

def count_multiplications(op: str, beam: BeamView | None, delta: int,
                          tables: MiTables | None = None) -> int:
    """Multiplications performed by one evaluation of op on beam."""
    if beam is None or beam.n == 0:
        return 0
    if op == "approx_fsmi":
        if tables is None:
            raise ValueError("approx_fsmi needs tables")
        return approx_fsmi(beam, tables.sensor, delta, tables).multiplications
    if op == "csqmi_approx":
        sensor = tables.sensor if tables is not None else SensorModel()
        return csqmi_approx(beam, sensor, delta).multiplications
    raise ValueError(f"unknown op {op!r}")


def random_beam(rng: np.random.Generator, n: int = 100, width: float = 0.1,
                clamp_eps: float = CLAMP_EPS) -> BeamView:
    """Uniform-width beam with i.i.d. uniform occupancies (the benchmark setup)."""
    o = np.clip(rng.uniform(0.0, 1.0, n), clamp_eps, 1.0 - clamp_eps)
    return BeamView.uniform_beam(o, width)


# ---------------------------------------------------------------------------
# batched timing drivers: one jitted loop over many beams of equal geometry

@njit(cache=True)
def _batch_smi(O, LO, bext, cext, sigma, d_occ, d_emp, step, zmax):
    acc = 0.0
    for b in range(O.shape[0]):
        acc += _smi_per_cell(O[b], np.exp(LO[b]), bext, cext, sigma, d_occ, d_emp,
                             step, zmax, 0.0)
    return acc


@njit(cache=True)
def _batch_fsmi(O, LO, bext, cext, fvals, fa, fb, tab, pa, pb):
    acc = 0.0
    for b in range(O.shape[0]):
        acc += _fsmi_cdf(O[b], LO[b], bext, cext, fvals, fa, fb, tab, pa, pb)[0]
    return acc


@njit(cache=True)
def _batch_approx(O, LO, fvals, fa, fb, g):
    acc = 0.0
    for b in range(O.shape[0]):
        acc += _approx_fold(O[b], LO[b], fvals, fa, fb, g)[0]
    return acc


@njit(cache=True)
def _batch_uniform(O, LO, fvals, fa, fb, H):
    acc = 0.0
    for b in range(O.shape[0]):
        acc += _uniform_kernel(O[b], LO[b], fvals, fa, fb, H)[0]
    return acc


@njit(cache=True)
def _batch_csqmi(O, K):
    acc = 0.0
    for b in range(O.shape[0]):
        acc += _csqmi_fold(O[b], K)[0]
    return acc


BENCH_ALGOS = ("smi", "fsmi", "approx_fsmi", "uniform_fsmi", "csqmi_approx")


def time_batch(algo: str, occupancies: np.ndarray, width: float, sensor: SensorModel,
               tables: MiTables, delta: int = 3, H: int = 0, step: float = 0.01,
               warmup: int = 1) -> tuple[float, float]:
    """Run algo over every row of occupancies; returns (ns per beam, checksum).

    All rows share one uniform geometry, so per-beam setup such as the
    offset kernels is done once outside the timed loop.
    """
    O = np.ascontiguousarray(occupancies, dtype=float)
    if O.ndim != 2:
        raise ValueError("occupancies must be a 2-D batch")
    LO = np.log(O / (1.0 - O))
    beam = BeamView.uniform_beam(O[0], width)
    ftab, fa, fb = _f_args(tables)
    if algo == "smi":
        fn, args = _batch_smi, (O, LO, beam.ext_bounds, beam.ext_centers, sensor.sigma,
                                sensor.delta_occ, sensor.delta_emp, float(step),
                                _smi_zmax(beam, sensor.sigma))
    elif algo == "fsmi":
        tab, pa, pb = _phi_args(tables)
        fn, args = _batch_fsmi, (O, LO, beam.ext_bounds, beam.ext_centers, ftab, fa, fb,
                                 tab, pa, pb)
    elif algo == "approx_fsmi":
        g = _offset_kernel(beam, tables, "cdf", min(int(delta), beam.n + 1))
        fn, args = _batch_approx, (O, LO, ftab, fa, fb, g)
    elif algo == "uniform_fsmi":
        fn, args = _batch_uniform, (O, LO, ftab, fa, fb, int(H))
    elif algo == "csqmi_approx":
        K = csqmi_kernel(beam, sensor.sigma, min(int(delta), beam.n + 1))
        fn, args = _batch_csqmi, (O, K)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    for _ in range(warmup):
        fn(O[:1], *args[1:]) if algo == "csqmi_approx" else fn(O[:1], LO[:1], *args[2:])
    t0 = time.perf_counter_ns()
    chk = fn(*args)
    dt = time.perf_counter_ns() - t0
    return dt / O.shape[0], float(chk)


def random_batch(rng: np.random.Generator, count: int, n: int = 100,
                 clamp_eps: float = CLAMP_EPS) -> np.ndarray:
    return np.clip(rng.uniform(0.0, 1.0, (count, n)), clamp_eps, 1.0 - clamp_eps)
