"""Finite-dimensional Dirichlet boundary feedback.

The feedback acting on Gamma_1 is

    u = lambda_1 * sum_{j <= N} mu_j (w, phi_j) Phi_j,
    mu_j = (k + eta lambda_j) / (k + eta (lambda_j - lambda_1)),
    Phi_i = sum_j a_ij dphi_j/dn,   a = G^{-1},  G_jl = (dphi_j/dn, dphi_l/dn)_{Gamma_1},

so that (Phi_i, dphi_j/dn)_{Gamma_1} = delta_ij.  :class:`BoundaryFeedbackController`
synthesizes it from a grid and the physical constants (``fit``) and evaluates
it on state fields (``predict``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .eigenbasis import (
    BoundaryTrace,
    enumerate_modes,
    eval_eigenfunction,
    gram_condition,
    gram_matrix,
    normal_derivative_trace,
)
from .exceptions import A1Violated, DegenerateController, GainConditionFailed, ListTooShort
from .mode_analysis import TAIL_DEPTH, mode_coefficients
from .params import DomainSpec, Grid, PhysicalParams, validate_params

K_SWEEP = np.logspace(-3, 1, 41)


@dataclass(frozen=True)
class ControllerSpec:
    omega: float
    epsilon: float
    k: float


def compute_N_omega(omega, epsilon, eigenvalues, eta=1.0) -> int:
    """Smallest N with -eta lambda_j + omega + epsilon < 0 for every j > N.

    Returns 0 when every listed mode already decays fast enough.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    ok = -eta * lam + omega + epsilon < 0
    if lam.size == 0 or not ok[-1]:
        raise ListTooShort(
            f"eigenvalue list ends below (omega + epsilon)/eta = {(omega + epsilon) / eta:g}"
        )
    bad = np.flatnonzero(~ok)
    return int(bad[-1] + 1) if bad.size else 0


def compute_omega0(k, eta, beta, gamma, lambda1, lambdaN) -> float:
    return 2 * eta * lambda1 + beta * gamma + lambda1**2 * eta**2 / (k + eta * (lambdaN - lambda1))


@dataclass
class ConditionReport:
    omega0: float
    margin: float
    A: np.ndarray
    B: np.ndarray
    a_ok: np.ndarray = field(init=False)
    b_ok: np.ndarray = field(init=False)
    epsilon: float = 0.0

    def __post_init__(self):
        self.a_ok = self.A + self.epsilon < 0
        self.b_ok = self.B < 0

    @property
    def passed(self) -> bool:
        return bool(self.margin < 0 and self.a_ok.all() and self.b_ok.all())

    def describe(self) -> str:
        lines = [
            f"omega0 = {self.omega0:.6g}, omega + eps - omega0 = {self.margin:.6g}"
            f" ({'ok' if self.margin < 0 else 'FAIL'})"
        ]
        for j, (A, B, ao, bo) in enumerate(zip(self.A, self.B, self.a_ok, self.b_ok), 1):
            lines.append(
                f"mode {j}: A+eps = {A + self.epsilon:.6g} ({'ok' if ao else 'FAIL'}), "
                f"B = {B:.6g} ({'ok' if bo else 'FAIL'})"
            )
        return "\n".join(lines)


def check_gain_conditions(spec: ControllerSpec, p: PhysicalParams, lambdas, N=None) -> ConditionReport:
    """Conditions A_j + eps < 0 and B_j < 0 for the controlled modes, plus omega + eps < omega0.

    ``lambdas`` holds the controlled eigenvalues, lambda_1 first.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    N = len(lambdas) if N is None else N
    if N < 1:
        raise DegenerateController("no controlled modes")
    AB = np.array([mode_coefficients(j, spec, p, lambdas) for j in range(1, N + 1)])
    omega0 = compute_omega0(spec.k, p.eta, p.beta, p.gamma, lambdas[0], lambdas[N - 1])
    return ConditionReport(
        omega0=omega0,
        margin=spec.omega + spec.epsilon - omega0,
        A=AB[:, 0],
        B=AB[:, 1],
        epsilon=spec.epsilon,
    )


def _modes_for_rate(domain, omega, epsilon, eta, extra):
    count = 8
    while True:
        modes = enumerate_modes(domain, count)
        lam = [m.lam for m in modes]
        try:
            N = compute_N_omega(omega, epsilon, lam, eta)
        except ListTooShort:
            count *= 2
            continue
        if len(modes) >= N + extra:
            return modes, N
        count = N + extra


def select_k(omega, epsilon, p, lambdas, sweep=K_SWEEP):
    """Smallest k in the sweep satisfying all gain conditions (largest omega0)."""
    for k in sweep:
        if check_gain_conditions(ControllerSpec(omega, epsilon, float(k)), p, lambdas).passed:
            return float(k)
    raise GainConditionFailed(
        f"no k in [{sweep[0]:g}, {sweep[-1]:g}] satisfies the gain conditions at omega={omega}"
    )


class BoundaryFeedbackController(BaseEstimator):
    """Boundary feedback synthesized for a prescribed decay rate.

    Parameters
    ----------
    omega : float
        Target decay rate.
    epsilon : float
        Stability margin, used both for the mode count and the gain conditions.
    k : float or None
        Elliptic-lift parameter; ``None`` picks the smallest admissible value
        of a logarithmic sweep over [1e-3, 10].
    n_modes : int or None
        Number of controlled modes.  Defaults to the minimal count for
        ``omega``; larger values are allowed, smaller ones are rejected.
    mode_indices : sequence of (m, n) or None
        Explicit controlled modes (lattice indices) instead of the lowest ones.
        The first must be the fundamental mode.
    gram_cond_max : float
        Condition-number threshold above which the boundary Gram matrix is
        declared singular.

    Attributes
    ----------
    n_modes_ : int
    modes_ : list of EigenMode
        The controlled modes.
    lambdas_ : ndarray
        Controlled eigenvalues followed by the next uncontrolled ones.
    gram_, gram_inv_ : ndarray
    gram_cond_ : float
    phi_traces_ : list of BoundaryTrace
    mu_ : ndarray
    omega0_ : float
    conditions_ : ConditionReport
    """

    def __init__(self, omega=6.0, epsilon=0.1, k=0.1, n_modes=None, mode_indices=None,
                 gram_cond_max=1e8):
        self.omega = omega
        self.epsilon = epsilon
        self.k = k
        self.n_modes = n_modes
        self.mode_indices = mode_indices
        self.gram_cond_max = gram_cond_max

    def fit(self, grid: Grid, params: PhysicalParams):
        validate_params(params, grid.domain)
        if not (self.omega > 0 and self.epsilon > 0):
            raise ValueError("omega and epsilon must be positive")
        domain = grid.domain
        extra = TAIL_DEPTH + 1 + (self.n_modes or 0)
        all_modes, n_omega = _modes_for_rate(domain, self.omega, self.epsilon, params.eta, extra)
        if self.mode_indices is not None:
            modes, tail = _pick_modes(domain, all_modes, self.mode_indices)
        else:
            N = n_omega if self.n_modes is None else int(self.n_modes)
            if N < n_omega:
                raise ValueError(f"n_modes={N} is below the required count {n_omega}")
            if N == 0:
                raise DegenerateController(
                    f"omega={self.omega}: every mode already decays faster than omega + epsilon"
                )
            if len(all_modes) < N + TAIL_DEPTH:
                all_modes = enumerate_modes(domain, N + TAIL_DEPTH)
            modes, tail = all_modes[:N], all_modes[N:N + TAIL_DEPTH]
        N = len(modes)
        if np.isclose(modes[-1].lam, tail[0].lam, rtol=1e-9):
            self.cluster_split_ = True
            warnings.warn(
                f"controlled set splits an eigenvalue cluster at lambda={modes[-1].lam:.6g}",
                RuntimeWarning,
                stacklevel=2,
            )
        else:
            self.cluster_split_ = False
        self.n_omega_ = n_omega
        self.lambdas_ = np.array([m.lam for m in modes + tail])
        k = self.k
        if k is None:
            k = select_k(self.omega, self.epsilon, params, self.lambdas_[:N])
        self.spec_ = ControllerSpec(float(self.omega), float(self.epsilon), float(k))
        self.conditions_ = check_gain_conditions(self.spec_, params, self.lambdas_[:N])
        self.omega0_ = self.conditions_.omega0
        if not self.conditions_.passed:
            raise GainConditionFailed(
                "gain conditions fail:\n" + self.conditions_.describe(), self.conditions_
            )

        traces = [normal_derivative_trace(m, grid) for m in modes]
        G = gram_matrix(traces)
        cond = gram_condition(G)
        if not cond <= self.gram_cond_max:
            raise A1Violated(
                f"boundary Gram matrix condition {cond:.3g} exceeds {self.gram_cond_max:.3g}"
            )
        a = np.linalg.inv(G)
        self.gram_, self.gram_inv_, self.gram_cond_ = G, a, cond
        weights = grid.gamma1_weights
        dn = np.array([t.values for t in traces])
        self.dn_traces_ = traces
        self.phi_traces_ = [BoundaryTrace(row, weights) for row in a @ dn]
        lam = self.lambdas_[:N]
        lam1 = lam[0]
        eta = params.eta
        self.mu_ = (k + eta * lam) / (k + eta * (lam - lam1))
        self.lambda1_ = lam1
        self.modes_ = modes
        self.tail_modes_ = tail
        self.n_modes_ = N
        self.params_ = params
        self.grid_ = grid
        self.phis_ = np.stack([eval_eigenfunction(m, grid) for m in modes])
        self._phi_matrix = np.array([t.values for t in self.phi_traces_])
        return self

    def transform(self, w):
        """Modal coordinates (w, phi_j) for j <= N (grid quadrature)."""
        check_is_fitted(self, "phis_")
        w = np.asarray(w, dtype=float)
        wphi = self.phis_ * self.grid_.weights
        if w.shape == self.grid_.shape:
            return np.tensordot(wphi, w, axes=w.ndim)
        axes = tuple(range(1, w.ndim))
        return np.tensordot(w, wphi, axes=(axes, axes))

    def predict(self, w):
        """Gamma_1 values of the feedback for one field or a stack of fields."""
        return (self.lambda1_ * self.mu_ * self.transform(w)) @ self._phi_matrix

    def predict_z(self, z):
        """Feedback written in the lifted variable: gains lambda_1 without mu_j."""
        return (self.lambda1_ * self.transform(z)) @ self._phi_matrix

    def feedback_trace(self, w) -> BoundaryTrace:
        return BoundaryTrace(self.predict(w), self.grid_.gamma1_weights)

    def feedback_trace_z(self, z) -> BoundaryTrace:
        return BoundaryTrace(self.predict_z(z), self.grid_.gamma1_weights)

    @property
    def feedback_gain(self):
        """Largest direct modal gain eta lambda_1 mu_j of the boundary loop."""
        check_is_fitted(self, "mu_")
        return float(self.params_.eta * self.lambda1_ * np.max(self.mu_))


def _pick_modes(domain: DomainSpec, modes, indices):
    wanted = [tuple(ix) for ix in indices]
    need = max(m for m, _ in wanted) * max(n + 1 for _, n in wanted) + TAIL_DEPTH + len(modes)
    pool = enumerate_modes(domain, max(need, len(modes)))
    lookup = {(m.m, m.n): m for m in pool}
    try:
        chosen = [lookup[ix] for ix in wanted]
    except KeyError as exc:
        raise ValueError(f"mode {exc.args[0]} not available on this domain") from exc
    if chosen[0].rank != 1:
        raise ValueError("the first controlled mode must be the fundamental one")
    tail = [m for m in pool if (m.m, m.n) not in set(wanted)][:TAIL_DEPTH]
    return chosen, tail


def synthesize(spec: ControllerSpec, p: PhysicalParams, d: DomainSpec, g: Grid, **kwargs):
    if g.domain != d:
        raise ValueError("grid was built on a different domain")
    ctrl = BoundaryFeedbackController(spec.omega, spec.epsilon, spec.k, **kwargs)
    return ctrl.fit(g, p)
