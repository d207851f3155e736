import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from critmax import model as M
from oracles import LOGNORMAL_ALPHA, LOGNORMAL_MU, TWO_POINT_ALPHA, TWO_POINT_P


def test_lognormal_closed_form(lognormal):
    assert abs(lognormal.alpha - LOGNORMAL_ALPHA) < 1e-9
    assert abs(lognormal.law.step.mu - LOGNORMAL_MU) < 1e-9
    assert max(lognormal.residuals) < 1e-9


def test_two_point_closed_form(two_point):
    assert abs(two_point.alpha - TWO_POINT_ALPHA) < 1e-9
    assert abs(two_point.params["p"] - TWO_POINT_P) < 1e-9
    assert two_point.arithmetic_flag


@given(st.floats(0.3, 3.0))
def test_lognormal_alpha_scales_with_sigma(sigma):
    # critical exponent of the lognormal family is sqrt(2 ln 2) / sigma
    m = M.calibrate_critical("LognormalFixedN", {"b": 2, "sigma": sigma}, ["mu"])
    assert m.alpha == pytest.approx(LOGNORMAL_ALPHA / sigma, rel=1e-9)


@given(st.floats(0.2, 5.0))
def test_power_transform_moves_the_exponent(alpha0):
    base = M.calibrate_critical("LognormalFixedN", {"b": 2, "sigma": 1.0}, ["mu"])
    t = M.power_transform(base, alpha0)
    assert t.alpha == alpha0
    assert abs(M.m_of_s(t.law, alpha0) - 1) < 1e-9
    assert abs(M.m_prime(t.law, alpha0)) < 1e-9
    assert t.law.delta == pytest.approx(base.law.delta * alpha0 / base.alpha)


def test_power_transform_rejects_nonpositive(lognormal):
    with pytest.raises(ValueError):
        M.power_transform(lognormal, 0.0)


@pytest.mark.parametrize("values,expected", [((1.0, -1.0), True), ((1.0, -math.sqrt(2)), True),
                                             ((0.0, 1.0, 2.5), True), ((0.0, 1.0, math.sqrt(2)), None)])
def test_lattice_test(values, expected):
    probs = (1 / len(values),) * len(values)
    assert M.lattice_test(values, probs) is expected


def test_checked_mean_flags_dominant_term():
    terms = np.ones(2000)
    terms[0] = 1e6
    with pytest.raises(M.OutOfBandError):
        M.checked_mean(terms)


def test_out_of_band_moment():
    law = M.lognormal_law({"b": 2, "sigma": 1.0, "mu": 0.0})
    law = M.BranchingLaw(law.family, law.num_children, law.step, band=(0.0, 2.0))
    with pytest.raises(M.OutOfBandError):
        M.m_of_s(law, 3.0)


def test_supercritical_two_point_has_no_solution():
    # p fixed far from the critical value: min_s m(s) != 1
    with pytest.raises(M.CalibrationError):
        M.calibrate_critical("TwoPointFixedN", {"b": 2, "x1": 1.0, "x2": -1.0, "p": 0.4})


def test_assumption_report(lognormal, two_point):
    assert all(e.status == "pass" for e in lognormal.validation.entries)
    # two atoms always sit on a lattice: only the non-lattice assumption fails
    status = {e.id: e.status for e in two_point.validation.entries}
    assert status.pop("A5") == "fail"
    assert set(status.values()) == {"pass"}
