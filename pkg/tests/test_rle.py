import itertools
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import dblquad

from fsmi import rle
from fsmi.mi import BeamView, approx_fsmi, compute_pe, fsmi, uniform_fsmi
from fsmi.sensor import SensorModel, build_tables, f_value

FIXTURES = Path(__file__).parent / "fixtures"
K = 128


@pytest.fixture(scope="module")
def approx_rt(tables):
    return rle.build_rle_tables(tables, 0.1, 6, l_max=rle.L_MAX)


@pytest.fixture(scope="module")
def exact_rt(tables):
    return rle.build_rle_tables(tables, 0.1, 257)


@pytest.fixture(scope="module")
def uni_rt(tables):
    return rle.build_uniform_rle_tables(tables, 256)


def beam_of(seq):
    return BeamView.uniform_beam(seq.decompress(), seq.w0)


def rel(a, b):
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------------------
# sequences

def test_compress_constant_run():
    s = rle.rle_compress([0.5, 0.5, 0.5])
    assert s.n_r == 1 and s.lengths.tolist() == [3] and s.occupancies.tolist() == [0.5]


def test_compress_distinct_neighbours():
    o = np.arange(1, 11) / 16
    assert rle.rle_compress(o).n_r == 10


def test_compress_round_trip(rng):
    o = rng.uniform(0, 1, 300)
    o[100:180] = 0.25
    s = rle.rle_compress(o)
    q = rle.quantize(o) / K
    np.testing.assert_array_equal(s.decompress(), q)
    assert s.canonical
    assert s.starts[0] == 0 and np.all(np.diff(s.starts) > 0)


def test_compress_rejects_empty():
    with pytest.raises(ValueError):
        rle.rle_compress([])


def test_quantize_keeps_interior():
    assert rle.quantize([0.0, 1.0, 0.5]).tolist() == [1, 127, 64]


def test_sequence_validation():
    with pytest.raises(ValueError):
        rle.RleSequence(np.array([0]), np.array([1]), 0.1)
    with pytest.raises(ValueError):
        rle.RleSequence(np.array([3]), np.array([0]), 0.1)
    with pytest.raises(ValueError):
        rle.RleSequence(np.array([3, 4]), np.array([1]), 0.1)
    with pytest.raises(ValueError):
        rle.RleSequence(np.array([3]), np.array([1]), 0.0)


def test_split_long_groups():
    s = rle.RleSequence(np.array([5, 9]), np.array([10, 3]), 0.1)
    t = rle.split_long_groups(s, 4)
    assert t.lengths.tolist() == [4, 3, 3, 3]
    np.testing.assert_array_equal(t.decompress(), s.decompress())


def test_random_sequence_shape(rng):
    s = rle.random_sequence(rng, 256, 8)
    assert s.n == 256 and s.n_r == 32 and s.canonical
    with pytest.raises(ValueError):
        rle.random_sequence(rng, 256, 7)


def test_rle_file_round_trip(tmp_path, rng):
    s = rle.random_sequence(rng, 64, 4)
    p = tmp_path / "s.rle"
    rle.write_rle(p, s)
    t = rle.read_rle(p)
    assert t.w0 == s.w0
    np.testing.assert_array_equal(t.k, s.k)
    np.testing.assert_array_equal(t.lengths, s.lengths)


def test_read_rle_errors(tmp_path):
    p = tmp_path / "bad.rle"
    p.write_text("0.5 3\n")
    with pytest.raises(ValueError):
        rle.read_rle(p)
    p.write_text("w0 0.1\n0.3001 3\n")
    with pytest.raises(ValueError):
        rle.read_rle(p)


# ---------------------------------------------------------------------------
# P_E, D_E

def test_pe_cases(rng):
    s = rle.RleSequence(np.array([64]), np.array([5]), 0.1)
    assert rle.pe_u(s).tolist() == [1.0]
    s = rle.rle_compress([0.5, 0.5, 0.3])
    assert rle.pe_u(s)[1] == pytest.approx(0.25)


def test_pe_matches_decompressed(rng):
    s = rle.random_sequence(rng, 120, 6)
    p = compute_pe(beam_of(s)).p          # P(e_1..e_n) at p[1:]
    want = p[1:][s.starts] / s.occupancies
    np.testing.assert_allclose(rle.pe_u(s), want, rtol=1e-12)


def test_de_cases(rng, tables, approx_rt):
    s = rle.random_sequence(rng, 64, 8)
    assert rle.de_v(rle.RleSequence(np.array([30]), np.array([4]), 0.1), approx_rt)[0] == 0.0
    de = rle.de_v(s, approx_rt)
    femp = f_value(1 / 1.5, s.occupancies / (1 - s.occupancies))
    direct = [sum(s.lengths[i] * femp[i] for i in range(v)) for v in range(s.n_r)]
    np.testing.assert_allclose(de, direct, rtol=1e-3, atol=1e-12)
    neutral = SensorModel(delta_occ=1.0)
    rt1 = rle.build_rle_tables(build_tables(neutral), 0.1, 6)
    assert np.all(rle.de_v(s, rt1) == 0)


# ---------------------------------------------------------------------------
# direct sums and tables

def test_direct_sum_examples():
    for x in (0.0, 0.3, 0.99):
        assert rle.alpha_direct(x, 1, 1, 0.5) == 1.0
        assert rle.beta_direct(x, 7, 1, 0.5) == 0.0
    sp = 0.7
    want = sum(math.exp(-k * k / (2 * sp * sp)) for k in range(6))
    assert rle.alpha_direct(0.0, 4, 6, sp) == pytest.approx(want, rel=1e-14)


def test_table_identities():
    al, th = rle.build_alpha_theta(1 / 128, 0.5, 8, 40)
    be, ga = rle.build_beta_gamma(1 / 128, 0.5, 8, 40)
    assert np.all(al[:, 1, 1] == 1.0)
    assert np.all(be[:, 1:, 1] == 0.0)
    assert np.all(th[:, 1] == 1.0)
    assert np.all(ga[:, 1] == 0.0)


@pytest.mark.parametrize("sp", [0.5, 2.0])
def test_tables_match_direct_sums(sp):
    rng = np.random.default_rng(5)
    Lb, Lm = 12, 300
    al, th = rle.build_alpha_theta(1 / 128, sp, Lb, Lm)
    be, ga = rle.build_beta_gamma(1 / 128, sp, Lb, Lm)
    for _ in range(200):
        i = int(rng.integers(0, 129))
        Lu, Lv = (int(v) for v in rng.integers(1, Lb + 1, 2))
        x = i / 128
        assert al[i, Lu, Lv] == pytest.approx(rle.alpha_direct(x, Lu, Lv, sp), rel=1e-9)
        assert be[i, Lu, Lv] == pytest.approx(rle.beta_direct(x, Lu, Lv, sp), rel=1e-9, abs=1e-300)
    for L in (1, 13, 64, 150, 300):
        for i in (0, 1, 64, 127, 128):
            x = i / 128
            assert th[i, L] == pytest.approx(rle.alpha_direct(x, L, L, sp), rel=1e-9)
            assert ga[i, L] == pytest.approx(rle.beta_direct(x, L, L, sp), rel=1e-9, abs=1e-300)


def test_build_rejects():
    with pytest.raises(ValueError):
        rle.build_alpha_theta(1 / 128, 0.0, 4, 4)
    with pytest.raises(ValueError):
        rle.build_alpha_theta(1 / 128, 0.5, 4, 2)
    with pytest.raises(ValueError):
        rle.build_beta_gamma(0.3, 0.5, 4, 4)


# ---------------------------------------------------------------------------
# A, B

def test_ab_terms_match_brute_force(exact_rt):
    rng = np.random.default_rng(8)
    sp = exact_rt.sigma_p
    for _ in range(300):
        # A and B come out of differences of table entries, so the error is
        # absolute at the scale of those entries; x^(-t) amplifies it for t > 0
        t = int(rng.integers(-20, 21))
        i = int(rng.integers(64 if t > 0 else 1, 129))
        Lu, Lv = (int(v) for v in rng.integers(1, 20, 2))
        x = i / 128
        assert rle.a_term(x, Lu, Lv, t, exact_rt) == pytest.approx(
            rle.a_direct(x, Lu, Lv, t, sp), rel=1e-8, abs=1e-9)
        assert rle.b_term(x, Lu, Lv, t, exact_rt) == pytest.approx(
            rle.b_direct(x, Lu, Lv, t, sp), rel=1e-8, abs=1e-8)


def test_ab_special_cases(approx_rt):
    assert rle.a_term(0.5, 3, 4, 0, approx_rt) == approx_rt.ab.alpha[64, 3, 4]
    assert rle.b_term(0.25, 5, 1, 0, approx_rt) == 0.0


def test_ab_range_errors(approx_rt):
    with pytest.raises(rle.TableRangeError):
        rle.a_term(0.5, 4, 4, 3, approx_rt)
    with pytest.raises(rle.NumericalRangeError):
        rle.a_term(0.0, 2, 2, 1, approx_rt)
    with pytest.raises(ValueError):
        rle.a_term(0.3, 2, 2, 1, approx_rt)      # not on the lattice


# ---------------------------------------------------------------------------
# truncation algebra

def brute_indices(su, Lu, sv, Lv, d):
    js, ks = [], []
    for j in range(su, su + Lu):
        for k in range(sv, sv + Lv):
            if abs(j - k) <= d:
                js.append(j)
                ks.append(k)
    if not js:
        return None
    return min(js), max(js) - min(js) + 1, min(ks), max(ks) - min(ks) + 1


def test_truncated_indices_brute_force():
    rng = np.random.default_rng(21)
    for _ in range(3000):
        d = int(rng.integers(1, 6))
        su, sv = (int(v) for v in rng.integers(0, 40, 2))
        Lu, Lv = (int(v) for v in rng.integers(1, 15, 2))
        if su == sv or not (su + Lu <= sv or sv + Lv <= su):
            continue                        # groups never overlap
        assert rle.truncated_indices(su, Lu, sv, Lv, d) == brute_indices(su, Lu, sv, Lv, d)


def test_truncated_indices_same_group():
    with pytest.raises(ValueError):
        rle.truncated_indices(3, 2, 3, 2, 3)


# ---------------------------------------------------------------------------
# MI

def test_exact_rle_length_one_groups(rng, sensor, tables):
    s = rle.random_sequence(rng, 40, 1)
    rt = rle.build_rle_tables(tables, 0.1, 41)
    want = fsmi(beam_of(s), sensor, tables, kernel="pdf").mi
    assert rle.fsmi_rle(s, sensor, rt).mi == pytest.approx(want, rel=1e-9)


def test_exact_rle_well_conditioned(rng, sensor, tables, exact_rt):
    for run in (2, 8, 32):
        s = rle.random_sequence(rng, 256, run, k_range=(1, 6))
        want = fsmi(beam_of(s), sensor, tables, kernel="pdf").mi
        assert rel(rle.fsmi_rle(s, sensor, exact_rt).mi, want) <= 1e-6


def test_neutral_model_gives_zero(rng):
    s0 = SensorModel(delta_occ=1.0)
    t0 = build_tables(s0)
    seq = rle.random_sequence(rng, 32, 4)
    assert rle.fsmi_rle(seq, s0, rle.build_rle_tables(t0, 0.1, 33)).mi == 0.0
    assert rle.approx_fsmi_rle(seq, s0, 3, rle.build_rle_tables(t0, 0.1, 6)).mi == 0.0


def test_exact_rle_needs_big_table(rng, sensor, approx_rt):
    with pytest.raises(rle.TableRangeError):
        rle.fsmi_rle(rle.random_sequence(rng, 64, 4), sensor, approx_rt)


def test_adversarial_fixture(sensor, tables, approx_rt):
    seq = rle.read_rle(FIXTURES / "adversarial.rle")
    b = beam_of(seq)
    rt = rle.build_rle_tables(tables, seq.w0, seq.n + 1)
    want = fsmi(b, sensor, tables, kernel="pdf").mi
    try:
        bad = rle.fsmi_rle(seq, sensor, rt).mi
        assert not rel(bad, want) <= 0.1
    except rle.NumericalRangeError:
        pass
    good = rle.approx_fsmi_rle(seq, sensor, 3, approx_rt).mi
    assert rel(good, approx_fsmi(b, sensor, 3, tables, kernel="pdf").mi) <= 1e-6


def test_approx_rle_matches_decompressed(rng, sensor, tables, approx_rt):
    for run in (1, 8, 64):
        s = rle.random_sequence(rng, 256, run)
        want = approx_fsmi(beam_of(s), sensor, 3, tables, kernel="pdf").mi
        assert rel(rle.approx_fsmi_rle(s, sensor, 3, approx_rt).mi, want) <= 1e-6


def test_approx_rle_full_window(rng, sensor, tables):
    s = rle.random_sequence(rng, 48, 4, k_range=(1, 6))
    big = rle.build_rle_tables(tables, 0.1, 2 * 49, l_max=64)
    a = rle.approx_fsmi_rle(s, sensor, 49, big).mi
    e = rle.fsmi_rle(s, sensor, big).mi
    assert a == pytest.approx(e, rel=1e-9)


def test_approx_rle_splits_long_runs(sensor, tables):
    rt = rle.build_rle_tables(tables, 0.1, 6, l_max=16)
    s = rle.RleSequence(np.array([20, 90]), np.array([50, 30]), 0.1)
    want = approx_fsmi(beam_of(s), sensor, 3, tables, kernel="pdf").mi
    assert rel(rle.approx_fsmi_rle(s, sensor, 3, rt).mi, want) <= 1e-6


def test_approx_rle_argument_checks(rng, sensor, tables, approx_rt):
    s = rle.random_sequence(rng, 16, 2)
    with pytest.raises(ValueError):
        rle.approx_fsmi_rle(s, sensor, 0, approx_rt)
    with pytest.raises(rle.TableRangeError):
        rle.approx_fsmi_rle(s, sensor, 4, approx_rt)
    with pytest.raises(ValueError):
        rle.approx_fsmi_rle(rle.RleSequence(s.k, s.lengths, 0.2), sensor, 3, approx_rt)


@pytest.mark.parametrize("H", [0, 1, 3, 5])
def test_uniform_rle_length_one(rng, sensor, tables, uni_rt, H):
    s = rle.random_sequence(rng, 60, 1)
    want = uniform_fsmi(beam_of(s), sensor, H, tables).mi
    assert rel(rle.uniform_fsmi_rle(s, sensor, H, uni_rt).mi, want) <= 1e-12


@pytest.mark.parametrize("run", [2, 4, 16, 64])
def test_uniform_rle_matches_decompressed(rng, sensor, tables, uni_rt, run):
    s = rle.random_sequence(rng, 256, run)
    for H in (0, 3):
        want = uniform_fsmi(beam_of(s), sensor, H, tables).mi
        assert rel(rle.uniform_fsmi_rle(s, sensor, H, uni_rt).mi, want) <= 1e-12


def test_fg_terms_brute_force(uni_rt):
    rng = np.random.default_rng(4)
    for _ in range(300):
        i = int(rng.integers(0, 129))
        Lu, Lv = (int(v) for v in rng.integers(1, 12, 2))
        t = int(rng.integers(-15, 16))
        H = int(rng.integers(0, 5))
        x = i / 128
        F = G = 0.0
        for j in range(Lu):
            for k in range(Lv):
                if abs(j + t - k) <= H:
                    xj = 1.0 if j == 0 else x ** j
                    F += xj
                    G += k * xj
        f, g = rle.fg_terms(x, Lu, Lv, t, H, uni_rt)
        assert f == pytest.approx(F, rel=1e-12, abs=1e-300)
        assert g == pytest.approx(G, rel=1e-12, abs=1e-300)


def test_uniform_rle_rejects(rng, sensor, uni_rt):
    with pytest.raises(ValueError):
        rle.uniform_fsmi_rle(rle.random_sequence(rng, 8, 2), sensor, -1, uni_rt)


# ---------------------------------------------------------------------------
# closed-form approximation of A

@pytest.mark.parametrize("x,t,sp", [(0.1, 0, 1.0), (0.5, 3, 2.0), (0.9, -5, 4.0), (0.3, 1, 0.5)])
def test_analytic_unit_square_quadrature(x, t, sp):
    q, _ = dblquad(lambda k, j: x ** j * math.exp(-(j - k + t) ** 2 / (2 * sp * sp)),
                   -0.5, 0.5, -0.5, 0.5, epsabs=1e-13, epsrel=1e-12)
    assert rle.analytic_a_approx(x, 1, 1, t, sp) == pytest.approx(q, abs=1e-6)


def test_analytic_larger_blocks_quadrature():
    x, Lu, Lv, t, sp = 0.3, 4, 8, -3, 1.0
    q, _ = dblquad(lambda k, j: x ** j * math.exp(-(j - k + t) ** 2 / (2 * sp * sp)),
                   -0.5, Lu - 0.5, -0.5, Lv - 0.5, epsabs=1e-13, epsrel=1e-12)
    assert rle.analytic_a_approx(x, Lu, Lv, t, sp) == pytest.approx(q, rel=1e-9)


def test_analytic_calibration_fixture():
    rows = np.loadtxt(FIXTURES / "analytic_calibration.csv", delimiter=",", skiprows=2)
    for x, Lu, Lv, t, sp, dev in rows[::97]:
        d = rle.a_direct(x, int(Lu), int(Lv), int(t), sp)
        a = rle.analytic_a_approx(x, int(Lu), int(Lv), int(t), sp)
        assert abs(a - d) / d == pytest.approx(dev, rel=1e-6)


def test_analytic_median_deviation_falls_with_sigma():
    rows = np.loadtxt(FIXTURES / "analytic_calibration.csv", delimiter=",", skiprows=2)
    med = [np.median(rows[rows[:, 4] == sp, 5]) for sp in (1, 2, 4)]
    assert med[0] > med[1] > med[2]


@pytest.mark.parametrize("x,sp", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0)])
def test_analytic_rejects(x, sp):
    with pytest.raises(ValueError):
        rle.analytic_a_approx(x, 1, 1, 0, sp)


# ---------------------------------------------------------------------------

def test_runtime_scales_linearly(sensor, approx_rt):
    rng = np.random.default_rng(2)
    sizes = [16, 64, 256, 1024]
    times = []
    for nr in sizes:
        ks = np.stack([rle.random_sequence(rng, nr, 1).k for _ in range(200)])
        Ls = np.full_like(ks, 3)
        times.append(min(rle.time_rle_batch(ks, Ls, 3, approx_rt)[0] for _ in range(3)))
    slope = np.polyfit(np.log(sizes), np.log(times), 1)[0]
    assert slope <= 1.2


def test_time_rle_batch_checksum(rng, sensor, approx_rt):
    seqs = [rle.random_sequence(rng, 64, 4) for _ in range(5)]
    ks = np.stack([s.k for s in seqs])
    Ls = np.stack([s.lengths for s in seqs])
    _, chk = rle.time_rle_batch(ks, Ls, 3, approx_rt)
    want = sum(rle.approx_fsmi_rle(s, sensor, 3, approx_rt).mi for s in seqs)
    assert chk == pytest.approx(want, rel=1e-12)
