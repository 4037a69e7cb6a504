import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from gbh_stab.exceptions import DegenerateSeries
from gbh_stab.fitting import DecayRateEstimator, fit_decay_rate, fit_envelope_rate, peak_envelope


def test_exact_exponential():
    t = np.arange(0, 5.0001, 0.01)
    fit = fit_decay_rate(t, np.exp(-2 * t))
    assert fit.rate == pytest.approx(2.0, abs=1e-6)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.window[0] == pytest.approx(1.0)


def test_modulated_exponential():
    t = np.arange(0, 5.0001, 0.01)
    fit = fit_decay_rate(t, np.exp(-2 * t) * (1 + 0.1 * np.sin(10 * t)), (1, 5))
    assert fit.rate == pytest.approx(2.0, abs=0.05)


def test_zero_series():
    t = np.linspace(0, 1, 50)
    with pytest.raises(DegenerateSeries):
        fit_decay_rate(t, np.zeros_like(t))


def test_too_few_samples():
    t = np.linspace(0, 1, 8)
    with pytest.raises(DegenerateSeries):
        fit_decay_rate(t, np.exp(-t))


def test_shape_mismatch():
    with pytest.raises(DegenerateSeries):
        fit_decay_rate(np.arange(20.0), np.ones(19))


@settings(max_examples=50)
@given(st.floats(-5, 20), st.floats(-3, 3))
def test_rate_recovered(rate, logc):
    t = np.linspace(0, 3, 301)
    fit = fit_decay_rate(t, np.exp(logc - rate * t))
    assert fit.rate == pytest.approx(rate, abs=1e-8)
    assert fit.intercept == pytest.approx(logc, abs=1e-7)


def test_envelope_of_damped_oscillation():
    t = np.arange(0, 6, 1e-3)
    x = np.exp(-1.5 * t) * np.cos(7 * t)
    fit = fit_envelope_rate(t, x, (0.5, 6))
    assert fit.rate == pytest.approx(1.5, rel=1e-3)
    tp, ap = peak_envelope(t, x)
    assert np.all(np.diff(tp) > 0) and np.all(ap > 0)


def test_envelope_falls_back_without_sign_change():
    t = np.linspace(0, 3, 301)
    assert fit_envelope_rate(t, np.exp(-t)).rate == pytest.approx(1.0)


def test_estimator():
    t = np.linspace(0, 4, 401)
    est = DecayRateEstimator(t_start=1.0).fit(t, 3 * np.exp(-2.5 * t))
    assert est.rate_ == pytest.approx(2.5)
    assert est.window_ == (1.0, 4.0)
    assert np.allclose(est.predict(t), 3 * np.exp(-2.5 * t))
    assert clone(est).get_params() == {"t_start": 1.0, "t_end": None, "envelope": False}
