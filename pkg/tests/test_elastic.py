"""Modulus family properties and the admissibility scan."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defectoscope.elastic import (PowerModulus, TabulatedModulus,
                                  check_hypotheses, require_admissible)

PS = [1.2, 1.5, 1.8]
BS = [0.0, 1.0]


@pytest.mark.parametrize("p", PS)
@pytest.mark.parametrize("b", BS)
def test_power_modulus_basics(p, b):
    mod = PowerModulus(p=p, b=b)
    assert mod.phi(0.0) == 0.0
    assert float(np.asarray(mod.dphi(np.array([0.0])))[0]) == 0.0
    t = np.linspace(0.0, 50.0, 400)
    ph = mod.phi(t)
    assert np.all(np.diff(ph) > 0)
    slopes = np.diff(ph) / np.diff(t)
    assert np.all(np.diff(slopes) > -1e-12)
    assert mod.alpha == 1.0
    assert mod.M == pytest.approx(p * b ** (p / 2.0), abs=1e-15)


@pytest.mark.parametrize("p", PS)
@pytest.mark.parametrize("b", BS)
def test_psi_range(p, b):
    # t phi'(t) - p phi(t) stays in [0, M] for this family
    mod = PowerModulus(p=p, b=b)
    t = np.concatenate([[0.0], np.logspace(-6, 6, 500)])
    psi = mod.psi(t)
    assert np.all(psi >= -1e-12)
    assert np.all(psi <= mod.M + 1e-12)
    # the defining formula cancels two O(t^p) terms, so scale the
    # comparison by their magnitude
    direct = t * mod.dphi(t) - p * mod.phi(t)
    scale = 1.0 + np.abs(t * mod.dphi(t))
    assert np.all(np.abs(psi - direct) <= 1e-12 * scale)


def test_dphi_matches_finite_differences():
    mod = PowerModulus(p=1.5, b=1.0)
    t = np.linspace(0.1, 20.0, 100)
    e = 1e-6
    fd = (mod.phi(t + e) - mod.phi(t - e)) / (2 * e)
    assert np.allclose(mod.dphi(t), fd, rtol=1e-8)


def test_weight_consistent_with_dphi():
    mod = PowerModulus(p=1.3, b=0.5)
    t = np.linspace(0.01, 10.0, 50)
    assert np.allclose(mod.weight(t), mod.dphi(t) / t, rtol=1e-13)


@pytest.mark.parametrize("p", PS)
@pytest.mark.parametrize("b", BS)
def test_check_hypotheses_builtin(p, b):
    rep = check_hypotheses(PowerModulus(p=p, b=b))
    assert rep.admissible
    assert rep.alpha == 1.0
    assert rep.M == pytest.approx(p * b ** (p / 2.0), abs=1e-6)
    assert all(rep.checks.values()), rep.checks
    assert "power_ratio_pairs" in rep.checks


def test_bad_parameters_rejected():
    with pytest.raises(ValueError):
        PowerModulus(p=2.5)
    with pytest.raises(ValueError):
        PowerModulus(p=1.0)
    with pytest.raises(ValueError):
        PowerModulus(p=1.5, b=-1.0)
    with pytest.raises(ValueError):
        PowerModulus(p=1.5).phi(np.array([-0.1]))


def test_tabulated_admissible_roundtrip():
    p = 1.5
    tab = TabulatedModulus(p, lambda t: (t * t + 1.0) ** (p / 2) - 1.0)
    with pytest.raises(ValueError):
        require_admissible(tab)  # unchecked tabulated modulus
    rep = check_hypotheses(tab)
    assert rep.admissible
    # the scan estimate approaches sup psi from below at rate t^{p-2}
    assert tab.M == pytest.approx(1.5, rel=5e-2)
    require_admissible(tab)


def test_tabulated_nonconvex_fails():
    tab = TabulatedModulus(1.5, lambda t: np.sqrt(np.abs(np.sin(t)) + t))
    rep = check_hypotheses(tab)
    assert not rep.admissible
    assert not rep.checks["strictly_monotone"] or \
        not rep.checks["strictly_convex"]
    with pytest.raises(ValueError):
        require_admissible(tab)


@settings(deadline=None, max_examples=40)
@given(p=st.floats(1.05, 1.95), b=st.floats(0.0, 10.0), t=st.floats(0, 1e5))
def test_psi_bound_property(p, b, t):
    mod = PowerModulus(p=p, b=b)
    psi = float(mod.psi(np.array([t]))[0])
    assert -1e-9 <= psi <= mod.M * (1 + 1e-12) + 1e-9


@settings(deadline=None, max_examples=25)
@given(p=st.floats(1.05, 1.95), b=st.floats(0.0, 4.0),
       s=st.floats(1.0, 100.0), factor=st.floats(1.0, 100.0))
def test_power_ratio_pair_property(p, b, s, factor):
    # |phi(t)/t^p - phi(s)/s^p| <= M / (p s^p) for t >= s >= 1
    mod = PowerModulus(p=p, b=b)
    t = s * factor
    lhs = abs(float(mod.phi(t)) / t ** p - float(mod.phi(s)) / s ** p)
    assert lhs <= mod.M / (p * s ** p) + 1e-12
