import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.special import ndtr

from fsmi.sensor import (
    SensorModel, build_f_table, build_phi_table, f_index, f_lookup, f_value,
    gaussian_to_uniform_H, phi,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_f_neutral_delta_is_zero():
    assert np.all(f_value(1.0, np.array([0.01, 1.0, 7.0])) == 0.0)


def test_f_hand_value():
    want = math.log(1.2) - math.log(1.5) / 2.5
    assert f_value(1.5, 1.0) == pytest.approx(want, rel=1e-14)
    assert want == pytest.approx(0.02013, abs=1e-5)


def test_f_reciprocal_identity():
    assert f_value(2 / 3, 2.0) == pytest.approx(f_value(1.5, 0.5), rel=1e-13)
    r = np.logspace(-3, 3, 31)
    np.testing.assert_allclose(f_value(1 / 1.5, r), f_value(1.5, 1 / r), rtol=1e-12)


def test_f_positive_for_informative_model():
    r = np.logspace(-4, 4, 101)
    assert np.all(f_value(1.5, r) > 0)
    assert np.all(f_value(4.0, r) > 0)


@pytest.mark.parametrize("d,r", [(0.0, 1.0), (1.5, 0.0), (-1.0, 1.0), (1.5, -2.0)])
def test_f_rejects_non_positive(d, r):
    with pytest.raises(ValueError):
        f_value(d, r)


def test_f_lookup_on_lattice_is_exact():
    t = build_f_table(1.5)
    lr = t.lo + t.step * np.array([0, 17, 2048, 4095])
    np.testing.assert_array_equal(f_lookup(t, "occ", np.exp(lr)), t.values[[0, 17, 2048, 4095]])
    np.testing.assert_allclose(f_lookup(t, "occ", np.exp(lr)), f_value(1.5, np.exp(lr)),
                               rtol=1e-12)


def test_f_lookup_reciprocal():
    t = build_f_table(1.5)
    lr = t.lo + t.step * np.arange(0, 4096, 37)
    r = np.exp(lr)
    np.testing.assert_array_equal(f_lookup(t, "emp", r), f_lookup(t, "occ", 1 / r))


def test_f_lookup_bound_fixture():
    fx = json.loads((FIXTURES / "f_lookup_bound.json").read_text())
    t = build_f_table(fx["delta_occ"], fx["clamp_eps"], fx["samples"])
    rng = np.random.default_rng(fx["draw_seed"])
    a = math.log((1 - fx["clamp_eps"]) / fx["clamp_eps"])
    r = np.exp(rng.uniform(-a, a, fx["draws"]))
    for kind, d in (("occ", fx["delta_occ"]), ("emp", 1 / fx["delta_occ"])):
        dev = np.abs(f_lookup(t, kind, r) - f_value(d, r)).max()
        assert dev <= fx["half_step_slope_bound"]
        assert dev == pytest.approx(fx["measured_max_abs_dev"][kind], rel=1e-9)


def test_f_lookup_clamps_outside_domain():
    t = build_f_table(1.5)
    assert f_lookup(t, "occ", 1e-30) == t.values[0]
    assert f_lookup(t, "occ", 1e30) == t.values[-1]
    assert f_index(t, 1e9) == t.size - 1


def test_f_lookup_bad_kind():
    with pytest.raises(ValueError):
        f_lookup(build_f_table(1.5), "hit", 1.0)


def test_phi_table_basics():
    t = build_phi_table()
    assert phi(t, 0.0) == 0.5
    assert phi(t, 50.0) == 1.0 and phi(t, -50.0) == 0.0
    assert phi(t, 1.0) == pytest.approx(ndtr(1.0), abs=1e-6)
    assert phi(t, 1.0) == pytest.approx(0.841345, abs=1e-6)


def test_phi_table_monotone_and_symmetric():
    t = build_phi_table()
    v = t.values
    assert np.all(np.diff(v) >= 0)
    assert np.max(np.abs(v + v[::-1] - 1.0)) <= 1e-9
    u = np.linspace(-5.9, 5.9, 1001)
    np.testing.assert_allclose(phi(t, u) + phi(t, -u), 1.0, atol=1e-9)
    np.testing.assert_allclose(phi(t, u), ndtr(u), atol=1e-6)


@pytest.mark.parametrize("sigma,w,H", [(0.05, 0.1, 0), (0.2, 0.1, 3), (1e-9, 0.1, 0),
                                       (0.1, 0.1, 1)])
def test_gaussian_to_uniform_H(sigma, w, H):
    assert gaussian_to_uniform_H(sigma, w) == H


def test_gaussian_to_uniform_H_rejects():
    with pytest.raises(ValueError):
        gaussian_to_uniform_H(0.0, 0.1)


def test_sensor_model_validation():
    s = SensorModel(delta_occ=2.0)
    assert s.delta_emp == 0.5
    for kw in ({"sigma": 0}, {"delta_occ": 0.5}, {"max_range": -1}, {"noise_kind": "laplace"},
               {"trunc": 0}, {"uniform_h": -1}):
        with pytest.raises(ValueError):
            SensorModel(**kw)
