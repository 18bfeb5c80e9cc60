import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import airy

from maslovindex import presets
from maslovindex.errors import InvalidInputError

import suite


def airy_field(t):
    # X'' = -t X with X(0) = 0: X = Bi(0) Ai(-t) - Ai(0) Bi(-t)
    ai0, _, bi0, _ = airy(0.0)
    ai, _, bi, _ = airy(-t)
    return bi0 * ai - ai0 * bi


def airy_zeros(b):
    ts = np.linspace(0.05, b, 2000)
    xs = airy_field(ts)
    return [brentq(airy_field, ts[i], ts[i + 1], xtol=1e-15)
            for i in range(ts.size - 1) if xs[i] * xs[i + 1] < 0]


def test_airy_oracle_sanity():
    zs = airy_zeros(6.0)
    assert len(zs) == 3
    np.testing.assert_allclose(zs, [2.66635, 4.34248, 5.74103], atol=1e-5)


def test_piecewise_zero_closed_form():
    # the continued field sin(4)/2 cos(t-2) + cos(4) sin(t-2) vanishes there
    t = presets._piecewise_second_zero()
    assert math.sin(4) / 2 * math.cos(t - 2) + math.cos(4) * math.sin(t - 2) == pytest.approx(0.0, abs=1e-14)
    assert 2.0 < t < 5.0


@pytest.mark.parametrize("name", list(presets.PRESETS))
def test_preset_report(name):
    pre = presets.PRESETS[name]
    r = suite.preset_report(name)
    assert r.certified, r.diagnostics["problems"]
    assert r.conjugate_total == r.spectral_total == r.hessian_index == pre.index
    assert r.rectangle_residual == 0
    times = [e.u_star for e in r.conjugate_events]
    if name == "polynomial-n1":
        np.testing.assert_allclose(times, airy_zeros(pre.profile.b), atol=1e-8)
    elif pre.conjugate_times:
        np.testing.assert_allclose(times, pre.conjugate_times, atol=1e-8)
        assert tuple(e.multiplicity for e in r.conjugate_events) == pre.multiplicities


def test_sphere_n2_payload():
    p = presets.get_preset("sphere-like-n2").profile
    np.testing.assert_array_equal(p(1.0), -np.eye(2))
    assert (p.a, p.b) == (0.0, 4.0)


def test_unknown_preset():
    with pytest.raises(InvalidInputError):
        presets.get_preset("torus")


def test_random_suite_is_reproducible_and_bounded():
    a = presets.random_suite(3, count=5)
    b = presets.random_suite(3, count=5)
    for p, q in zip(a, b):
        assert p.to_dict() == q.to_dict() and (p.a, p.b) == (q.a, q.b)
    for p in suite.random_profiles():
        assert p.n <= 4 and p.b - p.a <= 6.0
        assert p.payload["cos"].shape[0] <= 3
        ev = np.linalg.eigvalsh(p.evaluate(np.linspace(p.a, p.b, 400)))
        assert ev.min() >= -10.0 and ev.max() <= 10.0


def test_random_profile_validation():
    with pytest.raises(InvalidInputError):
        presets.random_trigonometric_profile(np.random.default_rng(0), 0, 1, 1.0)
