"""Analytic eigenpairs of -Laplacian with Dirichlet on x = 0 and Neumann elsewhere.

On (0, Lx) x (0, Ly) the eigenfunctions are

    phi_{m,n}(x, y) = c_{m,n} sin((m - 1/2) pi x / Lx) cos(n pi y / Ly),
    lambda_{m,n} = ((m - 1/2) pi / Lx)^2 + (n pi / Ly)^2,   m >= 1, n >= 0,

and in 1-D only n = 0 occurs.  The discrete Laplacian is checked against
these, never the other way round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import DomainSpec, Grid


@dataclass(frozen=True)
class EigenMode:
    m: int
    n: int
    lam: float
    norm_const: float
    rank: int
    domain: DomainSpec

    @property
    def kx(self):
        return (self.m - 0.5) * np.pi / self.domain.Lx

    @property
    def ky(self):
        return self.n * np.pi / self.domain.Ly if self.domain.dim == 2 else 0.0


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Samples on the Gamma_1 nodes with their trapezoid weights."""

    values: np.ndarray
    weights: np.ndarray

    def inner(self, other) -> float:
        other = other.values if isinstance(other, BoundaryTrace) else other
        return float(np.sum(self.weights * self.values * other))

    def __add__(self, other):
        return BoundaryTrace(self.values + other.values, self.weights)

    def __mul__(self, scalar):
        return BoundaryTrace(self.values * scalar, self.weights)

    __rmul__ = __mul__


def eigenvalue(m, n, d: DomainSpec) -> float:
    lam = ((m - 0.5) * np.pi / d.Lx) ** 2
    if d.dim == 2:
        lam += (n * np.pi / d.Ly) ** 2
    return lam


def norm_constant(n, d: DomainSpec) -> float:
    c = np.sqrt(2.0 / d.Lx)
    if d.dim == 2:
        c *= np.sqrt((1.0 if n == 0 else 2.0) / d.Ly)
    return float(c)


def enumerate_modes(d: DomainSpec, count: int) -> list[EigenMode]:
    """First ``count`` eigenpairs, nondecreasing in lambda, ties broken by (n, m)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    m_max = n_max = 1
    while True:
        ns = range(n_max + 1) if d.dim == 2 else range(1)
        cand = [(eigenvalue(m, n, d), n, m) for m in range(1, m_max + 1) for n in ns]
        cand.sort(key=lambda c: (_tie_key(c[0]), c[1], c[2]))
        # smallest eigenvalue not yet enumerated
        outside = eigenvalue(m_max + 1, 0, d)
        if d.dim == 2:
            outside = min(outside, eigenvalue(1, n_max + 1, d))
        if len(cand) >= count and cand[count - 1][0] < outside * (1 - 1e-12):
            break
        m_max += 1
        n_max += 1
    return [
        EigenMode(m=m, n=n, lam=lam, norm_const=norm_constant(n, d), rank=r + 1, domain=d)
        for r, (lam, n, m) in enumerate(cand[:count])
    ]


def _tie_key(lam):
    return round(lam, 9)


def eval_eigenfunction(mode: EigenMode, g: Grid) -> np.ndarray:
    sx = np.sin(mode.kx * g.x)
    if g.dim == 1:
        return mode.norm_const * sx
    return mode.norm_const * np.outer(sx, np.cos(mode.ky * g.y))


def normal_derivative_trace(mode: EigenMode, g: Grid) -> BoundaryTrace:
    """Outward normal derivative on Gamma_1, i.e. -d(phi)/dx at x = 0."""
    vals = -mode.norm_const * mode.kx * np.cos(mode.ky * g.gamma1_coords)
    return BoundaryTrace(np.atleast_1d(vals), g.gamma1_weights)


def field_residual(phi: np.ndarray, lam: float, g: Grid) -> float:
    """Relative residual ||-Lap_h phi - lam phi|| / ||phi|| over the unknowns."""
    u = g.unknowns(phi)
    lap = g.laplacian_matrix @ u + g.boundary_coupling @ np.atleast_1d(g.gamma1_values(phi))
    w = g.unknowns(g.weights)
    nrm = np.sqrt(np.sum(w * u * u))
    if nrm == 0.0:
        return 0.0
    r = -lap - lam * u
    return float(np.sqrt(np.sum(w * r * r)) / nrm)


def eigen_residual(mode: EigenMode, g: Grid) -> float:
    return field_residual(eval_eigenfunction(mode, g), mode.lam, g)


def gram_matrix(traces) -> np.ndarray:
    n = len(traces)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = traces[i].inner(traces[j])
    return G


def gram_condition(G: np.ndarray) -> float:
    if G.size == 0:
        return 1.0
    s = np.linalg.svd(G, compute_uv=False)
    return float(np.inf) if s[-1] <= s[0] * np.finfo(float).eps else float(s[0] / s[-1])


def mass_matrix(modes, g: Grid) -> np.ndarray:
    """Grid quadrature of (phi_i, phi_j)."""
    phis = [eval_eigenfunction(m, g) for m in modes]
    return np.array([[g.inner(p, q) for q in phis] for p in phis])
