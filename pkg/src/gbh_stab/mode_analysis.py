"""Per-mode integro-ODEs of the lifted closed loop and their decay rates.

Each Galerkin amplitude obeys

    z'(t) = A z(t) + B int_0^t exp(-delta (t - s)) z(s) ds,

which, with m(t) = int_0^t exp(-delta (t - s)) z(s) ds, is the linear system
(z, m)' = [[A, B], [1, -delta]] (z, m).  The spectral abscissa of that
companion matrix is the decay rate of the mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import GainConditionFailed

TAIL_DEPTH = 5


@dataclass(frozen=True)
class ModeSystem:
    i: int
    A: float
    B: float
    delta: float
    lam: float = float("nan")
    controlled: bool = True

    @property
    def companion(self) -> np.ndarray:
        return np.array([[self.A, self.B], [1.0, -self.delta]])

    @property
    def char_poly(self):
        """Coefficients (1, p, q) of xi^2 + p xi + q."""
        return 1.0, self.delta - self.A, -self.A * self.delta - self.B

    @property
    def hurwitz(self) -> bool:
        _, p, q = self.char_poly
        return p > 0 and q > 0


def mode_coefficients(i, spec, p, lambdas):
    """(A_i, B_i) of a controlled mode; ``i`` is 1-based."""
    lam_i = lambdas[i - 1]
    lam1 = lambdas[0]
    eta, bg = p.eta, p.beta * p.gamma
    om, k = spec.omega, spec.k
    den = k + eta * lam_i - lam1 * eta
    A = (-(eta * lam_i + bg - om) * (k + eta * lam_i) - (om + k - bg) * lam1 * eta) / den
    B = (-lam_i * (k + eta * lam_i) - k * lam1) / den
    return A, B


def tail_coefficients(lam, omega, p):
    """Uncontrolled mode: A = -(eta lam + beta gamma - omega), B = -lam."""
    return -(p.eta * lam + p.beta * p.gamma - omega), -lam


def mode_system(i, spec, p, lambdas, controlled=True):
    if controlled:
        A, B = mode_coefficients(i, spec, p, lambdas)
    else:
        A, B = tail_coefficients(lambdas[i - 1], spec.omega, p)
    return ModeSystem(i, A, B, p.delta, lambdas[i - 1], controlled)


def spectral_abscissa(ms: ModeSystem) -> float:
    return float(np.max(np.linalg.eigvals(ms.companion).real))


def expm2(M: np.ndarray, t: float) -> np.ndarray:
    """Closed-form exponential of a real 2x2 matrix."""
    s = 0.5 * (M[0, 0] + M[1, 1])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    q = np.sqrt(complex(s * s - det))
    N = M - s * np.eye(2)
    if abs(q * t) < 1e-8:
        shc = t * (1.0 + (q * t) ** 2 / 6.0)
    else:
        shc = np.sinh(q * t) / q
    E = np.exp(s * t) * (np.cosh(q * t) * np.eye(2) + shc * N)
    return E.real


def simulate_mode_ode(ms: ModeSystem, z0, dt, T, m0=0.0):
    """Exact propagation of (z, m) sampled every ``dt`` up to ``T``.

    Returns ``(t, z, m)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(T / dt))
    P = expm2(ms.companion, dt)
    X = np.empty((n + 1, 2))
    X[0] = (z0, m0)
    for s in range(n):
        X[s + 1] = P @ X[s]
    return np.arange(n + 1) * dt, X[:, 0], X[:, 1]


@dataclass
class DecayPrediction:
    alpha: float
    omega: float
    systems: list
    abscissas: np.ndarray

    @property
    def total_rate(self):
        """Decay rate of the unshifted fluctuation, omega + alpha."""
        return self.omega + self.alpha

    @property
    def limiting_mode(self):
        return self.systems[int(np.argmax(self.abscissas))]


def mode_table(controller, p, tail_depth=TAIL_DEPTH):
    """Controlled modes 1..N and tail modes N+1..N+tail_depth."""
    spec = controller.spec_
    lambdas = controller.lambdas_
    N = controller.n_modes_
    if len(lambdas) < N + tail_depth:
        raise ValueError("controller carries too few eigenvalues for the tail")
    systems = [mode_system(i, spec, p, lambdas, True) for i in range(1, N + 1)]
    systems += [
        mode_system(i, spec, p, lambdas, False) for i in range(N + 1, N + tail_depth + 1)
    ]
    return systems


def predict_decay(controller, p, tail_depth=TAIL_DEPTH) -> DecayPrediction:
    """Worst mode abscissa of the shifted closed loop over controlled and tail modes."""
    report = getattr(controller, "conditions_", None)
    if report is not None and not report.passed:
        raise GainConditionFailed("gain conditions fail; no decay guarantee", report)
    systems = mode_table(controller, p, tail_depth)
    absc = np.array([spectral_abscissa(ms) for ms in systems])
    return DecayPrediction(alpha=float(-absc.max()), omega=controller.spec_.omega,
                           systems=systems, abscissas=absc)
