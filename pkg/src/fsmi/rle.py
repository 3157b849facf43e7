"""Mutual information on run-length encoded occupancy sequences.

A beam is projected onto n equal virtual cells of width w0 and stored as
groups (o_u, L_u).  Occupancies live on the lattice o = k / K (K = 1 / o_res,
k = 1..K-1).  All tables are indexed by the lattice row of x = 1 - o, so
row i holds x = i / K for i = 0..K.

The noise kernel here is the Gaussian density at integer cell offsets,
exp(-d^2 / 2 s^2) / (sqrt(2 pi) s) with s = sigma / w0.  As in the
uncompressed code, the all-empty event is a virtual cell right after the
last one; it enters the sums as an extra length-1 "group" on the hit side
only, evaluated on table row K (x = 1), which is exact because a length-1
group never raises x to a non-zero power.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import erfc, erfcx

from .mi import _fidx
from .sensor import MiTables, SensorModel

O_RES = 1.0 / 128.0
L_MAX = 4096
EXP_LIMIT = 709.0
TAIL_EPS = 1e-20


class TableRangeError(ValueError):
    """A requested entry lies outside the tabulated range."""


class NumericalRangeError(ArithmeticError):
    """x^(-t) left the double range while evaluating exact FSMI-RLE."""


# ---------------------------------------------------------------------------
# sequences

@dataclass(frozen=True)
class RleSequence:
    """Groups (k_u / K, L_u) over virtual cells of width w0."""

    k: np.ndarray
    lengths: np.ndarray
    w0: float
    levels: int = 128

    def __post_init__(self):
        k = np.ascontiguousarray(self.k, dtype=np.int64)
        L = np.ascontiguousarray(self.lengths, dtype=np.int64)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "lengths", L)
        if k.ndim != 1 or k.size == 0 or k.shape != L.shape:
            raise ValueError("need matching, non-empty k and length arrays")
        if np.any(k < 1) or np.any(k > self.levels - 1):
            raise ValueError("occupancy index outside the lattice interior")
        if np.any(L < 1):
            raise ValueError("group lengths must be positive")
        if not self.w0 > 0:
            raise ValueError("w0 must be positive")

    @property
    def n_r(self) -> int:
        return len(self.k)

    @property
    def n(self) -> int:
        return int(self.lengths.sum())

    @property
    def occupancies(self) -> np.ndarray:
        return self.k / self.levels

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.lengths)[:-1]))

    @property
    def canonical(self) -> bool:
        return bool(np.all(self.k[1:] != self.k[:-1]))

    def decompress(self) -> np.ndarray:
        return np.repeat(self.occupancies, self.lengths)


def quantize(occupancies, o_res: float = O_RES) -> np.ndarray:
    """Nearest lattice index k for each occupancy, kept inside 1..K-1."""
    K = int(round(1.0 / o_res))
    k = np.floor(np.asarray(occupancies, dtype=float) * K + 0.5).astype(np.int64)
    return np.clip(k, 1, K - 1)


def rle_compress(occupancies, o_res: float = O_RES, w0: float = 0.1) -> RleSequence:
    o = np.asarray(occupancies, dtype=float)
    if o.ndim != 1 or o.size == 0:
        raise ValueError("need a non-empty 1-D occupancy vector")
    k = quantize(o, o_res)
    cut = np.flatnonzero(np.diff(k)) + 1
    starts = np.concatenate(([0], cut))
    lengths = np.diff(np.append(starts, k.size))
    return RleSequence(k[starts], lengths, float(w0), int(round(1.0 / o_res)))


def split_long_groups(seq: RleSequence, l_max: int) -> RleSequence:
    """Cut groups longer than l_max into near-equal pieces of the same occupancy."""
    if seq.lengths.max() <= l_max:
        return seq
    ks, Ls = [], []
    for k, L in zip(seq.k, seq.lengths):
        parts = -(-int(L) // l_max)
        base, extra = divmod(int(L), parts)
        for p in range(parts):
            ks.append(k)
            Ls.append(base + (1 if p < extra else 0))
    return RleSequence(np.array(ks), np.array(Ls), seq.w0, seq.levels)


def random_sequence(rng: np.random.Generator, n: int, run: int, levels: int = 128,
                    k_range: tuple[int, int] | None = None, w0: float = 0.1) -> RleSequence:
    """n cells in groups of exactly `run` cells, neighbours with distinct occupancy."""
    if n % run:
        raise ValueError("run must divide n")
    lo, hi = k_range or (1, levels - 1)
    m = n // run
    k = np.empty(m, dtype=np.int64)
    for i in range(m):
        while True:
            c = int(rng.integers(lo, hi + 1))
            if i == 0 or c != k[i - 1] or lo == hi:
                break
        k[i] = c
    return RleSequence(k, np.full(m, run), w0, levels)


def write_rle(path, seq: RleSequence) -> None:
    lines = [f"w0 {float(seq.w0)!r}"]
    lines += [f"{float(o)!r} {int(L)}" for o, L in zip(seq.occupancies, seq.lengths)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rle(path, o_res: float = O_RES) -> RleSequence:
    """Parse the `w0 <m>` header followed by `o L` lines; `#` starts a comment."""
    w0 = None
    ks, Ls = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        a, b = line.split()
        if a == "w0":
            w0 = float(b)
            continue
        ks.append(float(a))
        Ls.append(int(b))
    if w0 is None:
        raise ValueError("missing w0 header")
    K = int(round(1.0 / o_res))
    k = quantize(ks, o_res)
    if np.any(np.abs(k / K - np.array(ks)) > 1e-9):
        raise ValueError("occupancies must lie on the quantisation lattice")
    return RleSequence(k, np.array(Ls), w0, K)


# ---------------------------------------------------------------------------
# direct definitions (oracles)

def _gauss(d, sp):
    return np.exp(-np.square(d) / (2.0 * sp * sp))


def _xpow(x, j):
    # 0 ** 0 is 1 in numpy as well; keep it explicit
    return np.where(j == 0, 1.0, np.power(float(x), j))


def alpha_direct(x, Lu, Lv, sp):
    j = np.arange(Lu)[:, None]
    k = np.arange(Lv)[None, :]
    return float(np.sum(_xpow(x, j) * _gauss(j - k, sp)))


def beta_direct(x, Lu, Lv, sp):
    j = np.arange(Lu)[:, None]
    k = np.arange(Lv)[None, :]
    return float(np.sum(k * _xpow(x, j) * _gauss(j - k, sp)))


def a_direct(x, Lu, Lv, t, sp):
    j = np.arange(Lu)[:, None]
    k = np.arange(Lv)[None, :]
    return float(np.sum(_xpow(x, j) * _gauss(j + t - k, sp)))


def b_direct(x, Lu, Lv, t, sp):
    j = np.arange(Lu)[:, None]
    k = np.arange(Lv)[None, :]
    return float(np.sum(k * _xpow(x, j) * _gauss(j + t - k, sp)))


# ---------------------------------------------------------------------------
# tables

@dataclass(frozen=True)
class AlphaBetaTables:
    """alpha / beta over (x row, L_u, L_v); index 0 along L is the empty sum."""

    levels: int
    sigma_p: float
    l_bound: int
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)

    @property
    def x_axis(self) -> np.ndarray:
        return np.arange(self.levels + 1) / self.levels


@dataclass(frozen=True)
class ThetaGammaTables:
    levels: int
    sigma_p: float
    l_max: int
    theta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)


@njit(cache=True)
def _gauss_table(sp, m):
    g = np.empty(m + 1)
    for d in range(m + 1):
        g[d] = math.exp(-d * d / (2.0 * sp * sp))
    return g


@njit(cache=True)
def _pow_row(x, m, out):
    out[0] = 1.0
    for i in range(1, m + 1):
        out[i] = out[i - 1] * x


@njit(cache=True)
def _fill_alpha_theta(K, sp, Lb, Lm, dcut, alpha, theta):
    top = max(Lb, Lm)
    g = _gauss_table(sp, top)
    xp = np.empty(top + 1)
    for i in range(K + 1):
        _pow_row(i / K, top, xp)
        a = alpha[i]
        a[1, 1] = 1.0
        for Lu in range(2, Lb + 1):
            a[Lu, 1] = a[Lu - 1, 1] + xp[Lu - 1] * g[Lu - 1]
        for Lv in range(2, Lb + 1):
            a[1, Lv] = a[1, Lv - 1] + g[Lv - 1]
        for Lu in range(2, Lb + 1):
            for Lv in range(2, Lb + 1):
                d = Lu - Lv if Lu >= Lv else Lv - Lu
                a[Lu, Lv] = a[Lu, Lv - 1] + a[Lu - 1, Lv] - a[Lu - 1, Lv - 1] + xp[Lu - 1] * g[d]
        for L in range(1, min(Lb, Lm) + 1):
            theta[i, L] = a[L, L]
        for L in range(Lb + 1, Lm + 1):
            v = theta[i, L - 1]
            # terms with g below TAIL_EPS are dropped; theta >= 1 so this is relative
            for ii in range(max(1, L - dcut), L):
                v += (xp[L - 1] + xp[ii - 1]) * g[L - ii]
            theta[i, L] = v + xp[L - 1]


@njit(cache=True)
def _fill_beta_gamma(K, sp, Lb, Lm, dcut, beta, gamma):
    top = max(Lb, Lm)
    g = _gauss_table(sp, top)
    xp = np.empty(top + 1)
    for i in range(K + 1):
        _pow_row(i / K, top, xp)
        b = beta[i]
        for Lu in range(1, Lb + 1):
            b[Lu, 1] = 0.0
        for Lv in range(2, Lb + 1):
            b[1, Lv] = b[1, Lv - 1] + (Lv - 1) * g[Lv - 1]
        for Lu in range(2, Lb + 1):
            for Lv in range(2, Lb + 1):
                d = Lu - Lv if Lu >= Lv else Lv - Lu
                b[Lu, Lv] = (b[Lu, Lv - 1] + b[Lu - 1, Lv] - b[Lu - 1, Lv - 1]
                             + (Lv - 1) * xp[Lu - 1] * g[d])
        for L in range(1, min(Lb, Lm) + 1):
            gamma[i, L] = b[L, L]
        for L in range(Lb + 1, Lm + 1):
            v = gamma[i, L - 1]
            for ii in range(max(1, L - dcut), L):
                v += ((ii - 1) * xp[L - 1] + (L - 1) * xp[ii - 1]) * g[L - ii]
            gamma[i, L] = v + (L - 1) * xp[L - 1]


def _tail_cut(sp: float) -> int:
    return int(math.ceil(sp * math.sqrt(2.0 * math.log(1.0 / TAIL_EPS)))) + 1


def _check_build(o_res, sp, Lb, Lm):
    if not sp > 0:
        raise ValueError("sigma' must be positive")
    if Lb < 1 or Lm < Lb:
        raise ValueError("need 1 <= L_bound <= L_max")
    K = int(round(1.0 / o_res))
    if abs(K * o_res - 1.0) > 1e-12:
        raise ValueError("o_res must be 1 / integer")
    return K


def build_alpha_theta(o_res: float, sigma_p: float, l_bound: int, l_max: int):
    K = _check_build(o_res, sigma_p, l_bound, l_max)
    alpha = np.zeros((K + 1, l_bound + 1, l_bound + 1))
    theta = np.zeros((K + 1, l_max + 1))
    _fill_alpha_theta(K, float(sigma_p), l_bound, l_max, _tail_cut(sigma_p), alpha, theta)
    return alpha, theta


def build_beta_gamma(o_res: float, sigma_p: float, l_bound: int, l_max: int):
    K = _check_build(o_res, sigma_p, l_bound, l_max)
    beta = np.zeros((K + 1, l_bound + 1, l_bound + 1))
    gamma = np.zeros((K + 1, l_max + 1))
    _fill_beta_gamma(K, float(sigma_p), l_bound, l_max, _tail_cut(sigma_p), beta, gamma)
    return beta, gamma


@dataclass(frozen=True)
class RleTables:
    """Everything the compressed-domain kernels read."""

    ab: AlphaBetaTables
    tg: ThetaGammaTables
    ipow: np.ndarray = field(repr=False)     # x^(-t), t = 0..l_bound
    lnx: np.ndarray = field(repr=False)      # ln x per row (row 0: -inf)
    f_occ: np.ndarray = field(repr=False)    # f(delta_occ, r) per lattice k
    f_emp: np.ndarray = field(repr=False)
    w0: float = 0.1
    # theta / gamma packed as [L, x row, (theta, gamma)] so short runs stay in cache
    diag: np.ndarray = field(default=None, repr=False)

    @property
    def levels(self) -> int:
        return self.ab.levels

    @property
    def sigma_p(self) -> float:
        return self.ab.sigma_p


@njit(cache=True)
def _f_on_lattice(K, fvals, fa, fb, fo, fe):
    nf = fvals.shape[0]
    for k in range(1, K):
        o = k / K
        i = _fidx(math.log(o / (1.0 - o)), fa, fb, nf)
        fo[k] = fvals[i]
        fe[k] = fvals[nf - 1 - i]


def build_rle_tables(tables: MiTables, w0: float, l_bound: int, l_max: int | None = None,
                     o_res: float = O_RES) -> RleTables:
    """Tables for cell width w0.  f values reuse the uncompressed f table exactly."""
    sp = tables.sensor.sigma / w0
    l_max = l_bound if l_max is None else max(l_max, l_bound)
    alpha, theta = build_alpha_theta(o_res, sp, l_bound, l_max)
    beta, gamma = build_beta_gamma(o_res, sp, l_bound, l_max)
    K = alpha.shape[0] - 1
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lnx = np.log(np.arange(K + 1) / K)
        ipow = np.exp(-np.outer(lnx, np.arange(l_bound + 1)))
    ipow[0, 1:] = np.inf
    ipow[:, 0] = 1.0
    ft = tables.ftab
    fo = np.zeros(K + 1)
    fe = np.zeros(K + 1)
    _f_on_lattice(K, ft.values, 1.0 / ft.step, -ft.lo / ft.step, fo, fe)
    with np.errstate(divide="ignore", invalid="ignore"):
        xpow = np.exp(np.outer(np.arange(l_max + 1), lnx))
    xpow[0, :] = 1.0
    # packed per (L, xi): theta, gamma, x^L
    diag = np.ascontiguousarray(np.stack([theta.T, gamma.T, xpow], axis=-1))
    for a in (alpha, beta, theta, gamma, ipow, lnx, fo, fe, diag):
        a.setflags(write=False)
    return RleTables(AlphaBetaTables(K, sp, l_bound, alpha, beta),
                     ThetaGammaTables(K, sp, l_max, theta, gamma), ipow, lnx, fo, fe,
                     float(w0), diag)


def _check_tables(seq: RleSequence, rt: RleTables):
    if seq.levels != rt.levels:
        raise ValueError("sequence lattice does not match the tables")
    if abs(seq.w0 - rt.w0) > 1e-12 * rt.w0:
        raise ValueError("sequence w0 does not match the tables")


# ---------------------------------------------------------------------------
# P_E, D_E

def pe_u(seq: RleSequence) -> np.ndarray:
    """P_E(1..n_r): probability that every cell before group u is empty."""
    x = 1.0 - seq.occupancies
    out = np.ones(seq.n_r)
    out[1:] = np.cumprod(x[:-1] ** seq.lengths[:-1])
    return out


def de_v(seq: RleSequence, rt: RleTables) -> np.ndarray:
    """D_E(1..n_r): f(delta_emp) accumulated over all cells before group v."""
    fe = rt.f_emp[seq.k] * seq.lengths
    return np.concatenate(([0.0], np.cumsum(fe)[:-1]))


# ---------------------------------------------------------------------------
# A, B

@njit(cache=True, inline="always")
def _ab_lookup(al, be, ip, lnx, xi, Lu, Lv, t, exact):
    """A, B from alpha / beta; status 1 when x^(-t) overflows (exact path)."""
    if t > 0:
        if exact:
            e = -t * lnx[xi]
            if e > EXP_LIMIT:
                return 0.0, 0.0, 1
            p = math.exp(e)
        else:
            p = ip[xi, t]
        A = p * (al[xi, Lu + t, Lv] - al[xi, t, Lv])
        B = p * (be[xi, Lu + t, Lv] - be[xi, t, Lv])
    elif t == 0:
        A = al[xi, Lu, Lv]
        B = be[xi, Lu, Lv]
    else:
        A = al[xi, Lu, Lv - t] - al[xi, Lu, -t]
        B = be[xi, Lu, Lv - t] - be[xi, Lu, -t] + t * A
    return A, B, 0


def _row_of(x: float, levels: int) -> int:
    i = int(round(x * levels))
    if abs(i - x * levels) > 1e-9 or not 0 <= i <= levels:
        raise ValueError("x must lie on the quantisation lattice")
    return i


def _ab_public(x, Lu, Lv, t, rt: RleTables):
    if Lu < 1 or Lv < 1:
        raise ValueError("block lengths must be >= 1")
    Lb = rt.ab.l_bound
    need = (Lu + t, Lv) if t > 0 else (Lu, Lv - t) if t < 0 else (Lu, Lv)
    if max(need) > Lb:
        raise TableRangeError(f"entry {need} exceeds L_bound={Lb}")
    xi = _row_of(x, rt.levels)
    if t > 0 and xi == 0:
        raise NumericalRangeError("x = 0 with t >= 1")
    A, B, st = _ab_lookup(rt.ab.alpha, rt.ab.beta, rt.ipow, rt.lnx, xi, Lu, Lv, t, True)
    if st:
        raise NumericalRangeError("x^(-t) overflows")
    return A, B


def a_term(x, Lu, Lv, t, rt: RleTables) -> float:
    """A[x, L_u, L_v, t] = sum_j sum_k x^j g(j + t - k) from the alpha table."""
    return float(_ab_public(x, Lu, Lv, t, rt)[0])


def b_term(x, Lu, Lv, t, rt: RleTables) -> float:
    """B[x, L_u, L_v, t] = sum_j sum_k k x^j g(j + t - k) from the beta table."""
    return float(_ab_public(x, Lu, Lv, t, rt)[1])


# ---------------------------------------------------------------------------
# truncation indices

def truncated_indices(su: int, Lu: int, sv: int, Lv: int, delta: int):
    """(s_u', L_u', s_v', L_v') for the sub-blocks that survive truncation.

    Returns None when the pair is too far apart to interact.
    """
    if su < sv:
        if sv >= su + Lu + delta:
            return None
        sup = max(su, sv - delta)
        return sup, su + Lu - sup, sv, min(Lv, su + Lu + delta - sv)
    if su > sv:
        if su >= sv + Lv + delta:
            return None
        svp = max(sv, su - delta)
        return su, min(Lu, sv + Lv + delta - su), svp, sv + Lv - svp
    raise ValueError("distinct groups required")


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _prep_into(k, L, K, lnx, fe, virt, s, PE, DE):
    """Starts, P_E and D_E into caller buffers; the virtual group is appended when virt."""
    nr = k.shape[0]
    acc_s = 0
    pe = 1.0
    de = 0.0
    for u in range(nr):
        s[u] = acc_s
        PE[u] = pe
        DE[u] = de
        pe *= math.exp(L[u] * lnx[K - k[u]])
        de += L[u] * fe[k[u]]
        acc_s += L[u]
    if virt:
        s[nr] = acc_s
        PE[nr] = pe
        return nr + 1
    return nr


@njit(cache=True)
def _prep(k, L, K, lnx, fe, virt):
    nr = k.shape[0]
    s = np.empty(nr + 1, dtype=np.int64)
    PE = np.empty(nr + 1)
    DE = np.empty(nr + 1)
    m = _prep_into(k, L, K, lnx, fe, virt, s, PE, DE)
    return s[:m], PE[:m], DE[:nr]


@njit(cache=True)
def _rle_exact_kernel(k, L, K, al, be, ip, lnx, fo, fe, sp, virt):
    nr = k.shape[0]
    s, PE, DE = _prep(k, L, K, lnx, fe, virt)
    m = s.shape[0]
    total = 0.0
    for u in range(m):
        if u < nr:
            xi = K - k[u]
            ou = k[u] / K
            Lu = L[u]
        else:
            xi = K
            ou = 1.0
            Lu = 1
        pref = PE[u] * ou
        if pref == 0.0:
            continue
        acc = 0.0
        for v in range(nr):
            A, B, st = _ab_lookup(al, be, ip, lnx, xi, Lu, L[v], s[u] - s[v], True)
            if st:
                return np.nan, 1
            acc += (DE[v] + fo[k[v]]) * A + fe[k[v]] * B
        total += pref * acc
    return total / (math.sqrt(2.0 * math.pi) * sp), 0


@njit(cache=True)
def _rle_approx_kernel(k, L, K, al, be, dg, ip, lnx, fo, fe, sp, D, virt, s, PE, DE):
    nr = k.shape[0]
    acc_s = 0
    pe = 1.0
    de = 0.0
    for u in range(nr):
        s[u] = acc_s
        PE[u] = pe
        DE[u] = de
        pe *= dg[L[u], K - k[u], 2]
        de += L[u] * fe[k[u]]
        acc_s += L[u]
    m = nr
    if virt:
        s[nr] = acc_s
        PE[nr] = pe
        m = nr + 1
    total = 0.0
    for u in range(m):
        if u < nr:
            xi = K - k[u]
            pref = PE[u] * (k[u] / K)
            Lu = L[u]
            total += pref * ((DE[u] + fo[k[u]]) * dg[Lu, xi, 0] + fe[k[u]] * dg[Lu, xi, 1])
        else:
            xi = K
            pref = PE[u]
            Lu = 1
        su = s[u]
        end = su + Lu
        # v after u: after truncation t = s_u' - s_v lies in [-D, -1]
        for v in range(u + 1, nr):
            sv = s[v]
            if sv >= end + D:
                break
            sup = max(su, sv - D)
            Lup = end - sup
            Lvp = min(L[v], end + D - sv)
            nt = sv - sup
            A = al[xi, Lup, Lvp + nt] - al[xi, Lup, nt]
            B = be[xi, Lup, Lvp + nt] - be[xi, Lup, nt] - nt * A
            w = pref
            if sup > su:
                w *= dg[sup - su, xi, 2]
            kv = k[v]
            total += w * ((DE[v] + fo[kv]) * A + fe[kv] * B)
        # v before u: t = s_u - s_v' lies in [1, D]
        for v in range(min(u, nr) - 1, -1, -1):
            sv = s[v]
            ev = sv + L[v]
            if su >= ev + D:
                break
            Lup = min(Lu, ev + D - su)
            svp = max(sv, su - D)
            t = su - svp
            Lvp = ev - svp
            p = ip[xi, t]
            A = p * (al[xi, Lup + t, Lvp] - al[xi, t, Lvp])
            B = p * (be[xi, Lup + t, Lvp] - be[xi, t, Lvp])
            kv = k[v]
            total += pref * ((DE[v] + (svp - sv) * fe[kv] + fo[kv]) * A + fe[kv] * B)
    return total / (math.sqrt(2.0 * math.pi) * sp)


def fsmi_rle(seq: RleSequence, sensor: SensorModel, rt: RleTables,
             include_virtual: bool = True):
    """Exact FSMI-RLE, O(n_r^2).  Reference use only: unstable for long runs.

    Raises NumericalRangeError when x^(-t) overflows.  Cancellation inside
    alpha differences is not detected and can silently corrupt the result.
    """
    from .mi import MiBreakdown, _require_gaussian
    _require_gaussian(sensor)
    _check_tables(seq, rt)
    if seq.n + 1 > rt.ab.l_bound:
        raise TableRangeError(f"exact variant needs L_bound >= n + 1 = {seq.n + 1}")
    t0 = time.perf_counter_ns()
    v, st = _rle_exact_kernel(seq.k, seq.lengths, rt.levels, rt.ab.alpha, rt.ab.beta, rt.ipow,
                              rt.lnx, rt.f_occ, rt.f_emp, rt.sigma_p, include_virtual)
    dt = time.perf_counter_ns() - t0
    if st:
        raise NumericalRangeError("x^(-t) overflows the double range")
    return MiBreakdown(float(v), 0, int(dt))


def approx_fsmi_rle(seq: RleSequence, sensor: SensorModel, delta: int, rt: RleTables,
                    include_virtual: bool = True):
    """Approx-FSMI-RLE, O(delta n_r).  Tables need L_bound >= 2 delta."""
    from .mi import MiBreakdown, _require_gaussian
    _require_gaussian(sensor)
    _check_tables(seq, rt)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    if rt.ab.l_bound < 2 * delta:
        raise TableRangeError(f"need L_bound >= 2 delta = {2 * delta}")
    seq = split_long_groups(seq, rt.tg.l_max)
    t0 = time.perf_counter_ns()
    m = seq.n_r + 1
    v = _rle_approx_kernel(seq.k, seq.lengths, rt.levels, rt.ab.alpha, rt.ab.beta,
                           rt.diag, rt.ipow, rt.lnx, rt.f_occ, rt.f_emp,
                           rt.sigma_p, int(delta), include_virtual,
                           np.empty(m, dtype=np.int64), np.empty(m), np.empty(m))
    dt = time.perf_counter_ns() - t0
    return MiBreakdown(float(v), 0, int(dt))


# ---------------------------------------------------------------------------
# uniform noise

@dataclass(frozen=True)
class UniformRleTables:
    """x^m and the moment prefix sums Q_p[m] = sum_{i<=m} i^p x^i per lattice row."""

    levels: int
    l_max: int
    xpow: np.ndarray = field(repr=False)
    q0: np.ndarray = field(repr=False)
    q1: np.ndarray = field(repr=False)
    q2: np.ndarray = field(repr=False)
    lnx: np.ndarray = field(repr=False)
    f_occ: np.ndarray = field(repr=False)
    f_emp: np.ndarray = field(repr=False)


def build_uniform_rle_tables(tables: MiTables, l_max: int, o_res: float = O_RES) -> UniformRleTables:
    K = int(round(1.0 / o_res))
    x = np.arange(K + 1) / K
    m = np.arange(l_max + 1)
    xp = np.ones((K + 1, l_max + 1))
    for i in range(1, l_max + 1):
        xp[:, i] = xp[:, i - 1] * x
    q0 = np.cumsum(xp, axis=1)
    q1 = np.cumsum(xp * m, axis=1)
    q2 = np.cumsum(xp * m * m, axis=1)
    with np.errstate(divide="ignore"):
        lnx = np.log(x)
    ft = tables.ftab
    fo = np.zeros(K + 1)
    fe = np.zeros(K + 1)
    _f_on_lattice(K, ft.values, 1.0 / ft.step, -ft.lo / ft.step, fo, fe)
    return UniformRleTables(K, l_max, xp, q0, q1, q2, lnx, fo, fe)


@njit(cache=True, inline="always")
def _fg(xi, Lu, Lv, t, H, xp, q0, q1, q2):
    """F and G of the indicator kernel |j + t - k| <= H, in O(1).

    For each j the admissible k form [lo(j), hi(j)] with lo, hi piecewise
    linear in j; on each linear piece the sums reduce to moment sums of x^j.
    """
    jlo = max(0, -t - H)
    jhi = min(Lu - 1, Lv - 1 - t + H)
    if jlo > jhi:
        return 0.0, 0.0
    c1 = H - t              # lo(j) = j + t - H from here on
    c2 = Lv - t - H         # hi(j) = Lv - 1 from here on
    F = 0.0
    G = 0.0
    a = jlo
    while a <= jhi:
        b = jhi
        if a < c1 <= b:
            b = c1 - 1
        if a < c2 <= b:
            b = c2 - 1
        la = a + t - H if a >= c1 else 0
        lb = 1 if a >= c1 else 0
        ha = a + t + H if a < c2 else Lv - 1
        hb = 1 if a < c2 else 0
        Na = ha - la + 1
        n1 = hb - lb
        Pa = la + ha
        p1 = lb + hb
        m = b - a
        Q0 = q0[xi, m]
        Q1 = q1[xi, m]
        Q2 = q2[xi, m]
        xa = xp[xi, a]
        F += xa * (Na * Q0 + n1 * Q1)
        G += 0.5 * xa * (Pa * Na * Q0 + (Pa * n1 + p1 * Na) * Q1 + p1 * n1 * Q2)
        a = b + 1
    return F, G


@njit(cache=True)
def _rle_uniform_kernel(k, L, K, xp, q0, q1, q2, lnx, fo, fe, H, virt):
    nr = k.shape[0]
    s, PE, DE = _prep(k, L, K, lnx, fe, virt)
    m = s.shape[0]
    total = 0.0
    for u in range(m):
        if u < nr:
            xi = K - k[u]
            ou = k[u] / K
            Lu = L[u]
        else:
            xi = K
            ou = 1.0
            Lu = 1
        su = s[u]
        acc = 0.0
        # walk outwards from u while groups can still see each other
        vstart = min(u, nr - 1)
        for v in range(vstart, -1, -1):
            if su - (s[v] + L[v] - 1) > H:
                break
            F, G = _fg(xi, Lu, L[v], su - s[v], H, xp, q0, q1, q2)
            acc += (DE[v] + fo[k[v]]) * F + fe[k[v]] * G
        for v in range(vstart + 1, nr):
            if s[v] - (su + Lu - 1) > H:
                break
            F, G = _fg(xi, Lu, L[v], su - s[v], H, xp, q0, q1, q2)
            acc += (DE[v] + fo[k[v]]) * F + fe[k[v]] * G
        total += PE[u] * ou * acc
    return total / (2 * H + 1)


def fg_terms(x, Lu, Lv, t, H, ut: UniformRleTables):
    if max(Lu, Lv) > ut.l_max + 1:
        raise TableRangeError("block longer than the moment tables")
    return _fg(_row_of(x, ut.levels), int(Lu), int(Lv), int(t), int(H),
               ut.xpow, ut.q0, ut.q1, ut.q2)


def uniform_fsmi_rle(seq: RleSequence, sensor: SensorModel, H: int, ut: UniformRleTables,
                     include_virtual: bool = True):
    """MI under uniform noise of half-width H virtual cells, O(n_r H)."""
    from .mi import MiBreakdown
    if H < 0:
        raise ValueError("H must be >= 0")
    if seq.levels != ut.levels:
        raise ValueError("sequence lattice does not match the tables")
    if seq.lengths.max() > ut.l_max + 1:
        raise TableRangeError("group longer than the moment tables")
    t0 = time.perf_counter_ns()
    v = _rle_uniform_kernel(seq.k, seq.lengths, ut.levels, ut.xpow, ut.q0, ut.q1, ut.q2,
                            ut.lnx, ut.f_occ, ut.f_emp, int(H), include_virtual)
    return MiBreakdown(float(v), 0, int(time.perf_counter_ns() - t0))


# ---------------------------------------------------------------------------
# closed-form integral approximation of A

def _theta_corner(lam, sp, a1, a2, t):
    """Integral of x^j exp(-(j - k + t)^2 / 2 sp^2) over j >= a1, k >= a2."""
    r2s = math.sqrt(2.0) * sp
    y = (a1 - a2 + t) / r2s
    first = math.exp(lam * a1) * erfc(-y)
    z = (a1 - a2 + t - lam * sp * sp) / r2s
    base = lam * (a2 - t) + 0.5 * lam * lam * sp * sp
    if z > 0:
        second = math.exp(base - z * z) * erfcx(z)
    else:
        second = math.exp(base) * erfc(z)
    return -sp * math.sqrt(math.pi / 2.0) / lam * (first + second)


def analytic_a_approx(x: float, Lu: int, Lv: int, t: int, sigma_p: float) -> float:
    """O(1) approximation of A by the integral over [-1/2, L_u - 1/2] x [-1/2, L_v - 1/2]."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie strictly between 0 and 1")
    if not sigma_p > 0:
        raise ValueError("sigma' must be positive")
    lam = math.log(x)
    ju, kv = Lu - 0.5, Lv - 0.5
    return (_theta_corner(lam, sigma_p, -0.5, -0.5, t)
            - _theta_corner(lam, sigma_p, ju, -0.5, t)
            - _theta_corner(lam, sigma_p, -0.5, kv, t)
            + _theta_corner(lam, sigma_p, ju, kv, t))


# ---------------------------------------------------------------------------
# batched timing

@njit(cache=True)
def _batch_rle_approx(KS, LS, K, al, be, dg, ip, lnx, fo, fe, sp, D):
    m = KS.shape[1] + 1
    s = np.empty(m, dtype=np.int64)
    PE = np.empty(m)
    DE = np.empty(m)
    acc = 0.0
    for b in range(KS.shape[0]):
        acc += _rle_approx_kernel(KS[b], LS[b], K, al, be, dg, ip, lnx, fo, fe, sp, D, True,
                                  s, PE, DE)
    return acc


def time_rle_batch(ks: np.ndarray, lengths: np.ndarray, delta: int, rt: RleTables,
                   warmup: int = 1) -> tuple[float, float]:
    """approx_fsmi_rle over rows of (ks, lengths); returns (ns per sequence, checksum)."""
    KS = np.ascontiguousarray(ks, dtype=np.int64)
    LS = np.ascontiguousarray(lengths, dtype=np.int64)
    args = (rt.levels, rt.ab.alpha, rt.ab.beta, rt.diag, rt.ipow, rt.lnx,
            rt.f_occ, rt.f_emp, rt.sigma_p, int(delta))
    for _ in range(warmup):
        _batch_rle_approx(KS[:1], LS[:1], *args)
    t0 = time.perf_counter_ns()
    chk = _batch_rle_approx(KS, LS, *args)
    return (time.perf_counter_ns() - t0) / KS.shape[0], float(chk)
