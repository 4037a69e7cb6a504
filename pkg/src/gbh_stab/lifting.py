"""Elliptic Dirichlet map psi = D g:  -eta Lap psi + k psi = 0,  psi = g on Gamma_1.

Gamma_2 is insulated.  The discrete problem is factorized once per (k, grid)
and reused; the same class serves the implicit half of the time stepper,
where ``k`` becomes ``1/dt`` plus the linear reaction coefficient.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .eigenbasis import BoundaryTrace, eval_eigenfunction
from .exceptions import InsufficientSamples, SolverSingular
from .params import Grid


class DirichletMap(TransformerMixin, BaseEstimator):
    """Discrete solution operator of the elliptic lift.

    Parameters
    ----------
    k : float
        Zeroth-order coefficient, must be positive.
    eta : float
        Diffusion coefficient.

    Examples
    --------
    >>> from gbh_stab.params import DomainSpec, build_grid
    >>> g = build_grid(DomainSpec(2, (1.0, 2.0)), 15, 15)
    >>> D = DirichletMap(k=0.1, eta=1.0).fit(g)
    >>> D.transform(np.zeros(g.n_gamma1)).shape
    (17, 17)
    """

    def __init__(self, k=0.1, eta=1.0):
        self.k = k
        self.eta = eta

    def fit(self, grid: Grid, y=None):
        if not self.k > 0:
            raise SolverSingular(f"lift parameter k must be positive, got {self.k}")
        n = grid.n_unknowns
        op = sp.csc_matrix(-self.eta * grid.laplacian_matrix + self.k * sp.identity(n))
        try:
            self.lu_ = spla.splu(op)
        except RuntimeError as exc:  # exactly singular factor
            raise SolverSingular(str(exc)) from exc
        self.grid_ = grid
        self.coupling_ = self.eta * grid.boundary_coupling
        return self

    def solve(self, source, gamma1):
        """Solve with an interior right-hand side (on the unknowns) and Dirichlet data."""
        check_is_fitted(self, "lu_")
        g1 = np.atleast_1d(np.asarray(gamma1, dtype=float))
        rhs = self.coupling_ @ g1
        if source is not None:
            rhs = rhs + source
        u = self.lu_.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SolverSingular("non-finite solution of the lift system")
        return self.grid_.assemble(u, g1)

    def transform(self, X):
        """Lift one trace (1-D array or :class:`BoundaryTrace`) or a stack of traces."""
        check_is_fitted(self, "lu_")
        if isinstance(X, BoundaryTrace):
            X = X.values
        X = np.asarray(X, dtype=float)
        if X.ndim <= 1:
            return self.solve(None, X)
        return np.stack([self.solve(None, row) for row in X])


def dirichlet_map(k, eta, trace, g: Grid) -> np.ndarray:
    return DirichletMap(k, eta).fit(g).transform(trace)


def verify_duality(c, k=None, eta=None, g=None, lift=None) -> np.ndarray:
    """Matrix M_ij = (D Phi_j, phi_i); ideally -eta / (k + eta lambda_i) on the diagonal."""
    check_is_fitted(c, "phi_traces_")
    k = c.spec_.k if k is None else k
    eta = c.params_.eta if eta is None else eta
    g = c.grid_ if g is None else g
    lift = lift or DirichletMap(k, eta).fit(g)
    lifted = [lift.transform(tr) for tr in c.phi_traces_]
    phis = [eval_eigenfunction(m, g) for m in c.modes_]
    return np.array([[g.inner(L, phi) for L in lifted] for phi in phis])


def duality_target(c) -> np.ndarray:
    eta = c.params_.eta
    lam = np.array([m.lam for m in c.modes_])
    return np.diag(-eta / (c.spec_.k + eta * lam))


def s_diagnostic(c, z_series, dt, lift=None):
    """Evaluate S(u~) = (omega + k - beta gamma) D u~ - (D u~)_t + (k/eta) conv(D u~).

    ``z_series`` is a sequence of lifted-variable fields sampled every ``dt``;
    u~ is the z-form feedback.  The time derivative is a backward difference
    (the first sample reuses the first available difference); the convolution
    uses the exponential recursion of the memory term.
    """
    from .memory_pde import memory_update

    z_series = list(z_series)
    if len(z_series) < 2:
        raise InsufficientSamples("s_diagnostic needs at least two time samples")
    p, spec = c.params_, c.spec_
    lift = lift or DirichletMap(spec.k, p.eta).fit(c.grid_)
    Du = [lift.transform(c.feedback_trace_z(z)) for z in z_series]
    coef = spec.omega + spec.k - p.beta * p.gamma
    conv = np.zeros_like(Du[0])
    out = []
    for n, field in enumerate(Du):
        if n > 0:
            conv = memory_update(conv, Du[n - 1], dt, p.delta, field)
        dDu = (Du[max(n, 1)] - Du[max(n, 1) - 1]) / dt
        out.append(coef * field - dDu + (spec.k / p.eta) * conv)
    return out
