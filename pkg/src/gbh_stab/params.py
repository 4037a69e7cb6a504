"""Physical parameters, the rectangular domain and its finite-difference grid.

Fields live on the full tensor grid, boundary nodes included: a 2-D field has
shape ``(nx + 2, ny + 2)`` indexed ``[i, j]`` at ``(i * hx, j * hy)``; a 1-D
field has shape ``(nx + 2,)``.  Column ``i = 0`` is the controlled edge
Gamma_1 = {x = 0} and carries Dirichlet data; every other node is an unknown
of the evolution (boundary ones closed by ghost-node reflection).
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, InadmissibleKappa, NonPositiveCoefficient, TooCoarse

INTERIOR, GAMMA1, GAMMA2 = 0, 1, 2


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """Constants of the generalized Burgers-Huxley equation with memory.

    ``f_s`` is a grid-sampled source or ``None`` for an identically zero one.
    """

    eta: float = 1.0
    delta: float = 1.0
    a: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    kappa: int = 1
    f_s: np.ndarray | None = field(default=None, repr=False)

    def with_source(self, f_s):
        return PhysicalParams(self.eta, self.delta, self.a, self.beta, self.gamma, self.kappa, f_s)


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle (0, Lx) x (0, Ly), or the interval (0, Lx) when ``dim == 1``.

    Gamma_1 is the edge {x = 0} (the point x = 0 in 1-D), corners included;
    Gamma_2 is the rest of the boundary.
    """

    dim: int = 2
    lengths: tuple = (1.0, 2.0)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) < self.dim:
            raise ValueError(f"need {self.dim} side lengths, got {lengths}")
        lengths = lengths[: self.dim]
        if any(v <= 0 for v in lengths):
            raise ValueError(f"side lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def Lx(self):
        return self.lengths[0]

    @property
    def Ly(self):
        return self.lengths[1] if self.dim == 2 else 1.0


@dataclass(frozen=True)
class ValidatedConfig:
    params: PhysicalParams
    domain: DomainSpec | int


def validate_params(p: PhysicalParams, d) -> ValidatedConfig:
    """Check sign constraints and the admissible nonlinearity exponent.

    ``d`` is a :class:`DomainSpec` or a bare spatial dimension (3 is accepted
    here only so that the d = 3 exponent restriction can be checked).
    All violations are collected before raising.
    """
    dim = d.dim if isinstance(d, DomainSpec) else int(d)
    signs = [
        f"{name} must be > 0 (got {getattr(p, name)})"
        for name in ("eta", "delta", "a", "beta")
        if not getattr(p, name) > 0
    ]
    kappa = []
    if int(p.kappa) != p.kappa or p.kappa < 1:
        kappa.append(f"kappa must be a positive integer (got {p.kappa})")
    elif dim == 3 and p.kappa not in (1, 2):
        kappa.append(f"kappa must be 1 or 2 when d = 3 (got {p.kappa})")
    if dim not in (1, 2, 3):
        kappa.append(f"unsupported dimension {dim}")
    if signs:
        raise NonPositiveCoefficient(signs + kappa)
    if kappa:
        raise InadmissibleKappa(kappa)
    if p.f_s is not None and not np.all(np.isfinite(p.f_s)):
        raise NonPositiveCoefficient(["f_s contains non-finite values"])
    return ValidatedConfig(p, d)


class Grid:
    """Uniform tensor grid with node classification and discrete operators."""

    def __init__(self, domain: DomainSpec, nx: int, ny: int = 0):
        self.domain = domain
        self.dim = domain.dim
        self.nx = int(nx)
        self.ny = int(ny) if domain.dim == 2 else 0
        self.hx = domain.Lx / (self.nx + 1)
        self.x = np.linspace(0.0, domain.Lx, self.nx + 2)
        if self.dim == 2:
            self.hy = domain.Ly / (self.ny + 1)
            self.y = np.linspace(0.0, domain.Ly, self.ny + 2)
            self.shape = (self.nx + 2, self.ny + 2)
        else:
            self.hy = 1.0
            self.y = np.zeros(1)
            self.shape = (self.nx + 2,)

    def __repr__(self):
        return f"Grid(dim={self.dim}, nx={self.nx}, ny={self.ny}, h=({self.hx:.4g}, {self.hy:.4g}))"

    @property
    def h(self):
        return (self.hx, self.hy) if self.dim == 2 else (self.hx,)

    @cached_property
    def node_kind(self) -> np.ndarray:
        kind = np.full(self.shape, GAMMA2, dtype=np.int8)
        if self.dim == 2:
            kind[1:-1, 1:-1] = INTERIOR
        else:
            kind[1:-1] = INTERIOR
        kind[0, ...] = GAMMA1
        return kind

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.node_kind == INTERIOR))

    @property
    def n_gamma1(self):
        return int(np.count_nonzero(self.node_kind == GAMMA1))

    @property
    def n_gamma2(self):
        return int(np.count_nonzero(self.node_kind == GAMMA2))

    @property
    def unknown_shape(self):
        return (self.nx + 1,) + self.shape[1:]

    @property
    def n_unknowns(self):
        return int(np.prod(self.unknown_shape))

    def mesh(self):
        if self.dim == 1:
            return (self.x,)
        return np.meshgrid(self.x, self.y, indexing="ij")

    def zeros(self):
        return np.zeros(self.shape)

    # quadrature ---------------------------------------------------------

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on the full grid."""
        wx = _trapezoid_weights(self.nx + 2, self.hx)
        if self.dim == 1:
            return wx
        return np.outer(wx, _trapezoid_weights(self.ny + 2, self.hy))

    @cached_property
    def gamma1_weights(self) -> np.ndarray:
        if self.dim == 1:
            return np.ones(1)
        return _trapezoid_weights(self.ny + 2, self.hy)

    @property
    def gamma1_coords(self):
        return self.y

    def inner(self, u, v):
        return float(np.sum(self.weights * u * v))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def gamma1_inner(self, g, h):
        return float(np.sum(self.gamma1_weights * g * h))

    # discrete Laplacian ---------------------------------------------------

    @cached_property
    def _laplacian_parts(self):
        lx = _neumann_right_1d(self.nx + 1, self.hx)
        if self.dim == 1:
            L = lx
            B = sp.csr_matrix(([1.0 / self.hx**2], ([0], [0])), shape=(self.nx + 1, 1))
        else:
            ny2 = self.ny + 2
            ly = _neumann_both_1d(ny2, self.hy)
            L = sp.kron(lx, sp.identity(ny2)) + sp.kron(sp.identity(self.nx + 1), ly)
            rows = np.arange(ny2)
            B = sp.csr_matrix(
                (np.full(ny2, 1.0 / self.hx**2), (rows, rows)), shape=(self.n_unknowns, ny2)
            )
        return sp.csr_matrix(L), sp.csr_matrix(B)

    @property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """5-point Laplacian on the unknowns (ghost reflection on Gamma_2)."""
        return self._laplacian_parts[0]

    @property
    def boundary_coupling(self) -> sp.csr_matrix:
        """Maps Gamma_1 Dirichlet values to their contribution to the Laplacian."""
        return self._laplacian_parts[1]

    def unknowns(self, w):
        return np.asarray(w)[1:, ...].reshape(-1)

    def gamma1_values(self, w):
        return np.atleast_1d(np.asarray(w)[0, ...]).copy()

    def assemble(self, unknowns, gamma1):
        w = np.empty(self.shape)
        w[1:, ...] = np.reshape(unknowns, self.unknown_shape)
        w[0, ...] = gamma1 if self.dim == 2 else np.asarray(gamma1).reshape(-1)[0]
        return w


def _trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _neumann_right_1d(n, h):
    # unknowns 1..n; Dirichlet neighbour at index 0 handled by the coupling matrix
    main = np.full(n, -2.0)
    lower = np.ones(n - 1)
    upper = np.ones(n - 1)
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def _neumann_both_1d(n, h):
    main = np.full(n, -2.0)
    lower = np.ones(n - 1)
    upper = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def build_grid(d: DomainSpec, nx: int, ny: int = 3) -> Grid:
    if nx < 3 or (d.dim == 2 and ny < 3):
        raise TooCoarse(f"need at least 3 interior nodes per axis, got nx={nx}, ny={ny}")
    return Grid(d, nx, ny)


# configuration files ------------------------------------------------------

_SCHEMA = {
    "physics": {
        "eta": float, "delta": float, "a": float, "beta": float, "gamma": float,
        "kappa": int, "steady_amplitude": float,
    },
    "domain": {"dim": int, "lx": float, "ly": float},
    "grid": {"nx": int, "ny": int},
    "controller": {
        "omega": float, "epsilon": float, "k": float, "n_modes": int, "gram_cond_max": float,
    },
    "simulation": {
        "dt": float, "t_end": float, "amplitude": float, "initial": str,
        "record_every": int, "fit_start": float, "fit_end": float,
    },
}
_REQUIRED = ("physics", "domain", "grid")

CANONICAL_CONFIG = """\
[physics]
eta = 1.0
delta = 1.0
a = 1.0
beta = 1.0
gamma = 0.5
kappa = 1

[domain]
dim = 2
lx = 1.0
ly = 2.0

[grid]
nx = 63
ny = 63

[controller]
omega = 6.0
epsilon = 0.1
k = 0.1

[simulation]
dt = 0.001
t_end = 3.0
"""


@dataclass
class RunConfig:
    params: PhysicalParams
    domain: DomainSpec
    nx: int
    ny: int
    controller: dict
    simulation: dict
    steady_amplitude: float = 0.0


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse ``key = value`` lines under ``[section]`` headers; unknown keys are errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for section in _REQUIRED:
        if not cp.has_section(section):
            raise ConfigError(f"{source}: missing section [{section}]")
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key}: {raw!r}") from exc
    phys = dict(values["physics"])
    steady_amp = phys.pop("steady_amplitude", 0.0)
    params = PhysicalParams(**phys)
    dom = values["domain"]
    dim = dom.get("dim", 2)
    domain = DomainSpec(dim, (dom.get("lx", 1.0), dom.get("ly", 2.0)))
    validate_params(params, domain)
    g = values["grid"]
    if "nx" not in g:
        raise ConfigError(f"{source}: [grid] needs nx")
    return RunConfig(
        params=params,
        domain=domain,
        nx=g["nx"],
        ny=g.get("ny", g["nx"]),
        controller=values.get("controller", {}),
        simulation=values.get("simulation", {}),
        steady_amplitude=steady_amp,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
