"""Exponential decay-rate estimation by log-linear least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateSeries

MIN_SAMPLES = 10


@dataclass(frozen=True)
class DecayFit:
    rate: float
    window: tuple
    r2: float
    intercept: float = 0.0
    n_samples: int = 0


def fit_decay_rate(t, norm, window=None) -> DecayFit:
    """Least-squares slope of -log(norm) against t inside ``window``.

    ``window`` defaults to (t0 + 0.2 * horizon, t_end) so the initial
    transient is excluded.
    """
    t = np.asarray(t, dtype=float)
    norm = np.asarray(norm, dtype=float)
    if t.shape != norm.shape or t.ndim != 1 or t.size == 0:
        raise DegenerateSeries("t and norm must be 1-D arrays of equal length")
    if window is None:
        window = (t[0] + 0.2 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < MIN_SAMPLES:
        raise DegenerateSeries(f"only {int(sel.sum())} samples in window {window}")
    y = norm[sel]
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DegenerateSeries("norms must be finite and positive inside the window")
    logy = np.log(y)
    if np.ptp(logy) == 0.0:
        return DecayFit(0.0, (float(lo), float(hi)), 1.0, float(logy[0]), int(sel.sum()))
    res = linregress(t[sel], logy)
    return DecayFit(float(-res.slope), (float(lo), float(hi)), float(res.rvalue**2),
                    float(res.intercept), int(sel.sum()))


def peak_envelope(t, x):
    """Times and values of the local maxima of |x| (parabolic refinement).

    Used for oscillatory series, where log|x| itself has singularities at the
    zero crossings.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(x, dtype=float))
    i = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:])) + 1
    if i.size == 0:
        return t[:0], a[:0]
    y0, y1, y2 = a[i - 1], a[i], a[i + 1]
    den = y0 - 2 * y1 + y2
    off = np.where(den != 0, 0.5 * (y0 - y2) / np.where(den != 0, den, 1), 0.0)
    dt = t[i + 1] - t[i]
    return t[i] + off * dt, y1 - 0.25 * (y0 - y2) * off


def fit_envelope_rate(t, x, window=None) -> DecayFit:
    """Decay rate of |x|, using the peak envelope when x changes sign in the window."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if window is None:
        window = (t[0] + 0.2 * (t[-1] - t[0]), t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if np.all(np.sign(x[sel]) == np.sign(x[sel][0])) and x[sel][0] != 0:
        return fit_decay_rate(t, np.abs(x), window)
    tp, ap = peak_envelope(t[sel], x[sel])
    if tp.size < 2:
        raise DegenerateSeries("fewer than two envelope peaks in the window")
    res = linregress(tp, np.log(ap))
    r2 = float(res.rvalue**2) if tp.size > 2 else 1.0
    return DecayFit(float(-res.slope), tuple(window), r2, float(res.intercept), int(tp.size))


class DecayRateEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_decay_rate`.

    Parameters
    ----------
    t_start, t_end : float or None
        Fit window; ``None`` gives the default transient-excluding window.
    envelope : bool
        Fit the peak envelope of an oscillating signal instead of ``|x|``.
    """

    def __init__(self, t_start=None, t_end=None, envelope=False):
        self.t_start = t_start
        self.t_end = t_end
        self.envelope = envelope

    def fit(self, t, norm):
        t = np.asarray(t, dtype=float)
        window = None
        if self.t_start is not None or self.t_end is not None:
            lo = t[0] + 0.2 * (t[-1] - t[0]) if self.t_start is None else self.t_start
            hi = t[-1] if self.t_end is None else self.t_end
            window = (lo, hi)
        fit = fit_envelope_rate(t, norm, window) if self.envelope else fit_decay_rate(t, norm, window)
        self.fit_ = fit
        self.rate_, self.r2_, self.window_ = fit.rate, fit.r2, fit.window
        return self

    def predict(self, t):
        """Fitted norm exp(intercept - rate t)."""
        check_is_fitted(self, "fit_")
        return np.exp(self.fit_.intercept - self.rate_ * np.asarray(t, dtype=float))
