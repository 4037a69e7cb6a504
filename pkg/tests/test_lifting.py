import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbh_stab.eigenbasis import BoundaryTrace
from gbh_stab.exceptions import InsufficientSamples, SolverSingular
from gbh_stab.lifting import (
    DirichletMap,
    dirichlet_map,
    duality_target,
    s_diagnostic,
    verify_duality,
)
from gbh_stab.memory_pde import discrete_laplacian


def trace(g, values):
    return BoundaryTrace(np.asarray(values, dtype=float), g.gamma1_weights)


def separable(g, n, k=0.1, eta=1.0):
    # X(x) cos(n pi y / Ly) with -eta X'' + (k + eta (n pi/Ly)^2) X = 0, X(0)=1, X'(Lx)=0
    Lx, Ly = g.domain.Lx, g.domain.Ly
    s = np.sqrt((k + eta * (n * np.pi / Ly) ** 2) / eta)
    X = np.cosh(s * (Lx - g.x)) / np.cosh(s * Lx)
    return np.outer(X, np.cos(n * np.pi * g.y / Ly))


def test_zero_trace_zero_field(grid31):
    psi = dirichlet_map(0.1, 1.0, trace(grid31, np.zeros(grid31.n_gamma1)), grid31)
    assert np.all(psi == 0)


@pytest.mark.parametrize("n", [0, 1, 3])
def test_separable_solution_second_order(domain, n):
    from gbh_stab.params import build_grid

    errs = []
    for nx in (31, 63):
        g = build_grid(domain, nx, nx)
        exact = separable(g, n)
        psi = dirichlet_map(0.1, 1.0, trace(g, exact[0]), g)
        errs.append(np.abs(psi - exact).max())
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_boundary_values_and_residual(grid31, rng):
    vals = rng.normal(size=grid31.n_gamma1)
    lift = DirichletMap(0.1, 1.0).fit(grid31)
    psi = lift.transform(trace(grid31, vals))
    assert np.allclose(psi[0], vals)
    res = -discrete_laplacian(psi, grid31) + 0.1 * psi
    assert np.abs(res[1:]).max() < 1e-9 * max(1.0, np.abs(vals).max() / grid31.hx**2)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_linearity(alpha, seed):
    from gbh_stab.params import DomainSpec, build_grid

    g = build_grid(DomainSpec(2, (1.0, 2.0)), 7, 7)
    r = np.random.default_rng(seed)
    g1, g2 = trace(g, r.normal(size=g.n_gamma1)), trace(g, r.normal(size=g.n_gamma1))
    lift = DirichletMap(0.3, 1.2).fit(g)
    lhs = lift.transform(g1 * alpha + g2)
    rhs = alpha * lift.transform(g1) + lift.transform(g2)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(alpha)))


def test_transform_stack(grid31, rng):
    lift = DirichletMap().fit(grid31)
    X = rng.normal(size=(3, grid31.n_gamma1))
    out = lift.transform(X)
    assert out.shape == (3,) + grid31.shape
    assert np.allclose(out[1], lift.transform(X[1]))


def test_nonpositive_k_rejected(grid31):
    with pytest.raises(SolverSingular):
        DirichletMap(k=0.0).fit(grid31)


def test_duality_canonical(ctrl63):
    M = verify_duality(ctrl63)
    assert M[0, 0] == pytest.approx(-1 / (0.1 + np.pi**2 / 4), abs=1e-3)
    assert M[1, 1] == pytest.approx(-1 / (0.1 + np.pi**2 / 2), abs=1e-3)
    assert abs(M[0, 1]) < 1e-10 and abs(M[1, 0]) < 1e-10
    assert np.abs(M - duality_target(ctrl63)).max() <= 5e-3


def test_duality_defect_quarters(ctrl31, ctrl63):
    d31 = np.abs(verify_duality(ctrl31) - duality_target(ctrl31)).max()
    d63 = np.abs(verify_duality(ctrl63) - duality_target(ctrl63)).max()
    assert d31 / d63 == pytest.approx(4.0, rel=0.25)


def test_s_zero(ctrl31, grid31):
    out = s_diagnostic(ctrl31, [grid31.zeros()] * 5, 0.01)
    assert all(np.all(s == 0) for s in out)


def test_s_too_short(ctrl31, grid31):
    with pytest.raises(InsufficientSamples):
        s_diagnostic(ctrl31, [grid31.zeros()], 0.01)


def test_s_constant_z(ctrl31):
    c, p, spec = ctrl31, ctrl31.params_, ctrl31.spec_
    dt, n = 1e-3, 1001
    z = c.phis_[0] + 0.3 * c.phis_[1]
    out = s_diagnostic(c, [z] * n, dt)
    D = dirichlet_map(spec.k, p.eta, c.feedback_trace_z(z), c.grid_)
    # direct Riemann sum of the kernel against a constant history
    s = np.arange(n) * dt
    for i in (10, 500, 1000):
        t = s[i]
        kern = np.exp(-p.delta * (t - s[: i + 1]))
        conv = dt * (kern.sum() - 0.5 * (kern[0] + kern[-1]))
        want = (spec.omega + spec.k - p.beta * p.gamma + spec.k / p.eta * conv) * D
        assert np.abs(out[i] - want).max() < 1e-6 * np.abs(want).max()


def random_trajectory(c, r, n=200, dt=0.01):
    t = np.arange(n)[:, None] * dt
    freq, phase, amp = r.uniform(0.5, 4, (1, 4)), r.uniform(0, 6, (1, 4)), r.normal(size=(1, 4))
    coef = amp * np.sin(freq * t + phase)
    from gbh_stab.eigenbasis import enumerate_modes, eval_eigenfunction

    basis = np.stack([eval_eigenfunction(m, c.grid_) for m in enumerate_modes(c.grid_.domain, 4)])
    return np.einsum("tk,kij->tij", coef, basis), dt


def s_ratio(c, zs, dt):
    g = c.grid_
    S = s_diagnostic(c, zs, dt)
    z1 = np.array([c.transform(z) for z in zs])
    dz1 = np.gradient(z1, dt, axis=0)
    s2 = np.array([g.norm(s) ** 2 for s in S])
    rhs = (dz1**2).sum(axis=1) + (z1**2).sum(axis=1)
    return s2[1:], rhs[1:]


def test_s_bound_held_out(ctrl31):
    r = np.random.default_rng(7)
    train = []
    for _ in range(6):
        zs, dt = random_trajectory(ctrl31, r)
        s2, rhs = s_ratio(ctrl31, zs, dt)
        train.append((s2 / rhs).max())
    C = 2.0 * max(train)
    for _ in range(6):
        zs, dt = random_trajectory(ctrl31, r)
        s2, rhs = s_ratio(ctrl31, zs, dt)
        assert np.all(s2 <= C * rhs)
