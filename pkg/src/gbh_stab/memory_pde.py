"""Time integration of the fluctuation system with exponential memory.

The memory term int_0^t exp(-delta (t - s)) Lap w(s) ds is carried as an
auxiliary field M with M' = -delta M + Lap w, so no history is stored.  One
IMEX step treats diffusion and the linear reaction implicitly (the same
factorized operator as the elliptic lift) and everything else explicitly:

    (1/dt + c) w_{n+1} - eta Lap_h w_{n+1} = w_n / dt + M_n + f_n + F_n,

with c = beta gamma (physical variable) or beta gamma - omega (the variable
scaled by exp(omega t)).  The Gamma_1 value is the feedback of w_n.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigenbasis import enumerate_modes, eval_eigenfunction
from .exceptions import FieldOverflow, NewtonDiverged, UnstableStep
from .lifting import DirichletMap
from .params import Grid, PhysicalParams

OVERFLOW_LIMIT = 1e15
GROWTH_LIMIT = 1e3


def discrete_laplacian(w, g: Grid, gamma1_values=None) -> np.ndarray:
    """5-point Laplacian on the unknown nodes; the Gamma_1 column of the result is 0.

    Dirichlet data come from ``gamma1_values`` if given, else from ``w[0]``.
    """
    g1 = g.gamma1_values(w) if gamma1_values is None else np.atleast_1d(gamma1_values)
    lap = g.laplacian_matrix @ g.unknowns(w) + g.boundary_coupling @ g1
    return g.assemble(lap, np.zeros(g.n_gamma1))


def memory_update(mem, lap_w, dt, delta, lap_next=None):
    """Advance the exponential-kernel convolution by one step.

    M_{n+1} = exp(-delta dt) M_n + dt exp(-delta dt / 2) Lap w_{n+1/2}, where the
    midpoint value is the average of ``lap_w`` and ``lap_next`` (or ``lap_w``
    itself when ``lap_next`` is omitted).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    mid = lap_w if lap_next is None else 0.5 * (lap_w + lap_next)
    return np.exp(-delta * dt) * mem + dt * np.exp(-0.5 * delta * dt) * mid


def gradient_sum_matrix(g: Grid) -> sp.csr_matrix:
    """Sum of first partials on the full grid: centered inside, second-order one-sided at edges."""
    dx = _diff_1d(g.nx + 2, g.hx)
    if g.dim == 1:
        return dx
    ny2 = g.ny + 2
    dy = _diff_1d(ny2, g.hy)
    return sp.csr_matrix(sp.kron(dx, sp.identity(ny2)) + sp.kron(sp.identity(g.nx + 2), dy))


def _diff_1d(n, h):
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5
        D[i, i + 1] = 0.5
    D[0, 0:3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:n] = [0.5, -2.0, 1.5]
    return sp.csr_matrix(D) / h


def _grad_sum(w, g):
    D = _cached(g, "gradsum", lambda: gradient_sum_matrix(g))
    return (D @ np.ravel(w)).reshape(g.shape)


def _cached(g, key, build):
    cache = g.__dict__.setdefault("_op_cache", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


def _power_difference(w, y, n):
    """(w + y)^n - y^n expanded so that no cancellation occurs for small w."""
    if not np.any(y):
        return w**n
    out = np.zeros_like(w)
    for r in range(1, n + 1):
        out = out + comb(n, r) * w**r * y ** (n - r)
    return out


def nonlinear_F(w_t, y_inf, t, p: PhysicalParams, omega, g: Grid = None, lap_y_inf=None):
    """Nonlinear forcing of the exp(omega t)-scaled fluctuation equation.

    With w = exp(-omega t) w_t (the unscaled fluctuation) and
    N(y) = a y^kappa sum_i dy/dx_i + beta y^(2 kappa + 1) - beta (1 + gamma) y^(kappa + 1),

        F = -exp(omega t) [N(w + y_inf) - N(y_inf)] - (1/delta) exp((omega - delta) t) Lap y_inf,

    which is the convective part F_1 plus the reaction part F_2.  ``g`` is
    required for the gradient; ``lap_y_inf`` may be passed precomputed.
    """
    return _F_parts(w_t, y_inf, t, p, omega, g, lap_y_inf)[0]


def _F_parts(w_t, y_inf, t, p, omega, g, lap_y_inf=None):
    if np.max(np.abs(w_t)) > OVERFLOW_LIMIT:
        raise FieldOverflow(f"field magnitude exceeds {OVERFLOW_LIMIT:g} at t={t:g}")
    kap = int(p.kappa)
    scale = np.exp(omega * t)
    w = w_t / scale
    y = np.zeros_like(w) if y_inf is None else np.asarray(y_inf, dtype=float)
    v = w + y
    gw = _grad_sum(w, g)
    gy = _grad_sum(y, g) if np.any(y) else 0.0
    # (w+y)^k grad(w+y) - y^k grad y = (w+y)^k grad w + [(w+y)^k - y^k] grad y
    conv = v**kap * gw + _power_difference(w, y, kap) * gy
    F1 = -p.a * scale * conv
    react = _power_difference(w, y, 2 * kap + 1) - (1 + p.gamma) * _power_difference(w, y, kap + 1)
    F2 = -p.beta * scale * react
    if np.any(y):
        if lap_y_inf is None:
            lap_y_inf = discrete_laplacian(y, g)
        F2 = F2 - np.exp((omega - p.delta) * t) / p.delta * lap_y_inf
    return F1 + F2, F1, F2


def nonlinear_F_parts(w_t, y_inf, t, p, omega, g, lap_y_inf=None):
    """``(F, F1, F2)``."""
    return _F_parts(w_t, y_inf, t, p, omega, g, lap_y_inf)


@dataclass
class SimState:
    w: np.ndarray
    mem: np.ndarray
    t: float = 0.0
    shifted: bool = False
    lap: np.ndarray | None = field(default=None, repr=False)
    control: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def initial(cls, w0, g: Grid, shifted=False):
        w0 = np.array(w0, dtype=float)
        return cls(w=w0, mem=np.zeros(g.shape), t=0.0, shifted=shifted,
                   lap=discrete_laplacian(w0, g))


@dataclass
class Trajectory:
    t: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    amplitudes: np.ndarray
    control_energy: np.ndarray
    l2_state: np.ndarray
    omega: float = 0.0
    shifted: bool = False
    final: SimState | None = None

    def columns(self):
        cols = {"t": self.t, "l2": self.l2, "h1": self.h1}
        for j in range(self.amplitudes.shape[1]):
            cols[f"a{j + 1}"] = self.amplitudes[:, j]
        cols["control_energy"] = self.control_energy
        if self.shifted:
            cols["l2_shifted"] = self.l2_state
        return cols


class IMEXIntegrator:
    """First-order IMEX integrator for the linear or nonlinear fluctuation system.

    Parameters
    ----------
    params : PhysicalParams
    grid : Grid
    dt : float
    controller : fitted BoundaryFeedbackController or None
        ``None`` gives zero Dirichlet data (open loop) unless ``boundary`` is set.
    shifted : bool
        Integrate the exp(omega t)-scaled variable with reaction (omega - beta gamma);
        ``omega`` defaults to the controller's target rate.
    nonlinear : bool
        Add the explicit forcing :func:`nonlinear_F`.
    y_inf : ndarray or None
        Steady state around which the fluctuation is taken (nonlinear only).
    memory : bool
        ``False`` drops the memory term (M = 0), emulating delta -> infinity.
    source : ndarray or None
        Extra explicit forcing f (linear runs only).
    boundary : callable or None
        Prescribed Dirichlet data ``boundary(t) -> Gamma_1 values`` (overrides feedback).
    """

    def __init__(self, params, grid, dt, controller=None, shifted=False, omega=None,
                 nonlinear=False, y_inf=None, memory=True, source=None, boundary=None):
        self.params = params
        self.grid = grid
        self.dt = float(dt)
        self.controller = controller
        self.shifted = bool(shifted)
        if omega is None:
            omega = controller.spec_.omega if (controller is not None and shifted) else 0.0
        self.omega = float(omega) if shifted else 0.0
        self.nonlinear = nonlinear
        self.y_inf = None if y_inf is None or not np.any(y_inf) else np.asarray(y_inf, float)
        self.lap_y_inf = None if self.y_inf is None else discrete_laplacian(self.y_inf, grid)
        self.memory = memory
        self.source = source
        self.boundary = boundary
        c = params.beta * params.gamma - self.omega
        if 1.0 / self.dt + c <= 0:
            raise ValueError(f"dt={dt} too large for reaction coefficient {-c}")
        self.solver = DirichletMap(k=1.0 / self.dt + c, eta=params.eta).fit(grid)

    def dt_ceiling(self, w=None) -> float:
        """Explicit-part stability ceiling at the current amplitude."""
        p, g = self.params, self.grid
        rates = [1e-12]
        if self.controller is not None and self.boundary is None:
            rates.append(self.controller.feedback_gain)
        h = min(g.h)
        conv_limit = np.inf
        if self.nonlinear and w is not None:
            amp = np.max(np.abs(w)) + (0 if self.y_inf is None else np.max(np.abs(self.y_inf)))
            kap = p.kappa
            rates.append(p.beta * ((2 * kap + 1) * amp ** (2 * kap)
                                   + (1 + p.gamma) * (kap + 1) * amp**kap))
            if amp > 0:
                conv_limit = h / (2 * p.a * amp**kap)
        return float(min(0.1 / max(rates), conv_limit))

    def control_values(self, state: SimState):
        if self.boundary is not None:
            return np.atleast_1d(self.boundary(state.t)).astype(float)
        if self.controller is None:
            return np.zeros(self.grid.n_gamma1)
        return self.controller.predict(state.w)

    def step(self, state: SimState) -> SimState:
        g, p, dt = self.grid, self.params, self.dt
        u = self.control_values(state)
        rhs = state.w / dt
        if self.memory:
            rhs = rhs + state.mem
        if self.source is not None:
            rhs = rhs + self.source
        if self.nonlinear:
            rhs = rhs + nonlinear_F(state.w, self.y_inf, state.t, p, self.omega, g, self.lap_y_inf)
        w_new = self.solver.solve(g.unknowns(rhs), u)
        old = np.max(np.abs(state.w))
        new = np.max(np.abs(w_new))
        if not np.isfinite(new) or new > OVERFLOW_LIMIT:
            raise FieldOverflow(f"field magnitude {new:.3g} at t={state.t + dt:g}")
        if old > 0 and new > GROWTH_LIMIT * old:
            raise UnstableStep(f"growth factor {new / old:.3g} in one step at t={state.t + dt:g}")
        lap_new = discrete_laplacian(w_new, g)
        mem = memory_update(state.mem, state.lap, dt, p.delta, lap_new) if self.memory else state.mem
        return SimState(w=w_new, mem=mem, t=state.t + dt, shifted=self.shifted, lap=lap_new,
                        control=u)

    def run(self, w0, t_end, record_every=1, n_amplitudes=None, check_dt=True) -> Trajectory:
        """Integrate from ``w0`` to ``t_end``, recording norms every ``record_every`` steps.

        Recorded norms refer to the unscaled fluctuation exp(-omega t) w.
        """
        g = self.grid
        state = SimState.initial(w0, g, self.shifted)
        if check_dt:
            ceiling = self.dt_ceiling(w0)
            if self.dt > ceiling:
                raise ValueError(f"dt={self.dt:g} exceeds the stability ceiling {ceiling:.3g}")
        if n_amplitudes is None:
            n_amplitudes = (self.controller.n_modes_ + 2) if self.controller is not None else 3
        phis = np.stack([eval_eigenfunction(m, g) for m in enumerate_modes(g.domain, n_amplitudes)])
        wphi = phis * g.weights
        n_steps = int(round(t_end / self.dt))
        rows = []

        def record(s, u):
            scale = np.exp(-self.omega * s.t)
            norms = energy_norms(s.w, g)
            amps = np.tensordot(wphi, s.w, axes=s.w.ndim) * scale
            ce = g.gamma1_inner(u, u) * scale**2 if u is not None else 0.0
            rows.append((s.t, norms["l2"] * scale, norms["h1"] * scale, amps, ce, norms["l2"]))

        record(state, self.control_values(state))
        for n in range(1, n_steps + 1):
            state = self.step(state)
            if n % record_every == 0 or n == n_steps:
                if self.nonlinear and check_dt and n % (10 * record_every) == 0:
                    amp = np.max(np.abs(state.w)) * np.exp(-self.omega * state.t)
                    if self.dt > self.dt_ceiling(np.array([amp])):
                        raise UnstableStep(f"dt exceeds the stability ceiling at t={state.t:g}")
                record(state, self.control_values(state))
        t, l2, h1, amps, ce, l2s = zip(*rows)
        return Trajectory(np.array(t), np.array(l2), np.array(h1), np.array(amps), np.array(ce),
                          np.array(l2s), self.omega, self.shifted, state)


_INTEGRATORS = {}


def _integrator(p, g, dt, c, shifted, nonlinear, y_inf=None):
    omega = c.spec_.omega if (c is not None and shifted) else 0.0
    key = (id(p), id(g), dt, id(c), shifted, nonlinear, id(y_inf))
    integ = _INTEGRATORS.get(key)
    if integ is None:
        if len(_INTEGRATORS) > 32:
            _INTEGRATORS.clear()
        integ = IMEXIntegrator(p, g, dt, c, shifted=shifted, omega=omega, nonlinear=nonlinear,
                               y_inf=y_inf, source=None if nonlinear or shifted else p.f_s)
        _INTEGRATORS[key] = integ
    return integ


def step_linear(s: SimState, c, p: PhysicalParams, dt, shifted=False, g: Grid = None) -> SimState:
    """One step of the principal (linear) system; ``c=None`` is the open loop."""
    g = g or c.grid_
    return _integrator(p, g, dt, c, shifted, False).step(s)


def step_nonlinear(s: SimState, c, y_inf, p: PhysicalParams, dt) -> SimState:
    """One step of the exp(omega t)-scaled nonlinear closed loop."""
    return _integrator(p, c.grid_, dt, c, True, True, y_inf).step(s)


def energy_norms(w, g: Grid) -> dict:
    """Grid L2 norm and full H1 norm (L2 plus gradient, centered differences)."""
    w = w.w if isinstance(w, SimState) else np.asarray(w)
    l2sq = g.inner(w, w)
    grads = np.gradient(w, *g.h, edge_order=2)
    if g.dim == 1:
        grads = [grads]
    gsq = sum(g.inner(d, d) for d in grads)
    return {"l2": float(np.sqrt(l2sq)), "h1": float(np.sqrt(l2sq + gsq))}


# steady state -------------------------------------------------------------


@dataclass
class SteadyState:
    y_inf: np.ndarray
    residual: float
    iterations: int


def steady_operator(y, p: PhysicalParams, g: Grid, f_s=None):
    """Residual of -(eta + 1/delta) Lap y + a y^k sum dy/dx_i + beta y (y^k - 1)(y^k - gamma) - f_s.

    Evaluated on the unknowns with y = 0 on Gamma_1; returned as a full field.
    """
    y = np.array(y, dtype=float)
    y[0, ...] = 0.0
    kap = int(p.kappa)
    lap = discrete_laplacian(y, g)
    r = (-(p.eta + 1.0 / p.delta) * lap + p.a * y**kap * _grad_sum(y, g)
         + p.beta * y * (y**kap - 1) * (y**kap - p.gamma))
    if f_s is not None:
        r = r - f_s
    r[0, ...] = 0.0
    return r


def _steady_jacobian(y, p, g):
    kap = int(p.kappa)
    D = _cached(g, "gradsum", lambda: gradient_sum_matrix(g))
    # Gamma_1 values are pinned to 0, so their columns drop out
    idx = g.unknowns(np.arange(np.prod(g.shape)).reshape(g.shape))
    Du = sp.csr_matrix(D[idx][:, idx])
    yu = g.unknowns(y)
    gy = g.unknowns(_grad_sum(y, g))
    dreact = (2 * kap + 1) * yu ** (2 * kap) - (1 + p.gamma) * (kap + 1) * yu**kap + p.gamma
    dconv = kap * yu ** (kap - 1) * gy
    J = (-(p.eta + 1.0 / p.delta) * g.laplacian_matrix
         + p.a * (sp.diags(dconv) + sp.diags(yu**kap) @ Du)
         + p.beta * sp.diags(dreact))
    return sp.csc_matrix(J)


def solve_steady_state(f_s, p: PhysicalParams, g: Grid, tol=1e-10, max_iter=50) -> SteadyState:
    """Damped Newton iteration from y = 0 with an analytic Jacobian."""
    f_s = np.zeros(g.shape) if f_s is None else np.asarray(f_s, dtype=float)
    y = np.zeros(g.shape)
    r = steady_operator(y, p, g, f_s)
    res = float(np.max(np.abs(r)))
    for it in range(max_iter + 1):
        if not np.isfinite(res):
            break
        if res <= tol:
            return SteadyState(y, res, it)
        if it == max_iter:
            break
        J = _steady_jacobian(y, p, g)
        try:
            step = spla.spsolve(J, -g.unknowns(r))
        except RuntimeError as exc:
            raise NewtonDiverged(f"singular Jacobian at iteration {it}") from exc
        if not np.all(np.isfinite(step)):
            raise NewtonDiverged(f"singular Jacobian at iteration {it}")
        lam = 1.0
        while lam > 1e-4:
            y_try = g.assemble(g.unknowns(y) + lam * step, np.zeros(g.n_gamma1))
            r_try = steady_operator(y_try, p, g, f_s)
            res_try = float(np.max(np.abs(r_try)))
            if res_try < res:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged(f"line search failed at iteration {it}, residual {res:.3g}")
        y, r, res = y_try, r_try, res_try
    raise NewtonDiverged(f"no convergence in {max_iter} iterations (residual {res:.3g})")


def manufactured_steady_state(amplitude, p: PhysicalParams, g: Grid):
    """``(y_star, f_s)`` with y_star = amplitude * phi_1 and f_s its steady residual."""
    phi1 = eval_eigenfunction(enumerate_modes(g.domain, 1)[0], g)
    y_star = amplitude * phi1
    return y_star, steady_operator(y_star, p, g)
