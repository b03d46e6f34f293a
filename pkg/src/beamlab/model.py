"""Grids, potential families, spectral cutoffs and experiment configuration."""

import json
import logging
from dataclasses import dataclass, field, asdict
from functools import cached_property, lru_cache
from pathlib import Path

import jsonschema
import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigError

log = logging.getLogger(__name__)

FAMILIES = ("zero", "scaled_sech2", "embedded_example", "resonance_example", "tabulated")


# --------------------------------------------------------------------------
# grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L) with n nodes."""

    L: float
    n: int

    @property
    def h(self):
        return 2.0 * self.L / self.n

    @cached_property
    def x(self):
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def k(self):
        # FFT ordering: 0, 1, ..., n/2-1, -n/2, ..., -1 (times pi/L)
        return np.pi / self.L * np.fft.fftfreq(self.n, d=1.0 / self.n)


def build_grid(L, n):
    if not L > 0:
        raise ConfigError(f"grid half-length must be positive, got {L}", key="grid.L")
    n_int = int(n)
    if n_int != n or n_int < 64 or n_int & (n_int - 1):
        raise ConfigError(f"grid size must be a power of two >= 64, got {n}", key="grid.n")
    return Grid(float(L), n_int)


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    family: str
    params: dict = field(default_factory=dict)
    decay_exponent: float = 30.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown potential family {self.family!r}", key="potential.family")
        if not self.decay_exponent > 0:
            raise ConfigError("decay exponent must be positive", key="potential.mu")
        if self.family == "resonance_example":
            c, d = self.params.get("c", 1.0), self.params.get("d", 1.0)
            if c < 0 or d < 0 or (c == 0 and d == 0):
                raise ConfigError("resonance_example needs c >= 0, d >= 0, (c, d) != (0, 0)",
                                  key="potential.params")
        if self.family == "tabulated" and "file" not in self.params:
            raise ConfigError("tabulated family needs params.file", key="potential.params.file")

    def label(self):
        if not self.params:
            return self.family
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.family}({inner})"


@dataclass(frozen=True, eq=False)
class PotentialSample:
    """V on the grid together with its factorisation V = U v^2."""

    grid: Grid
    V: np.ndarray
    v: np.ndarray
    U: np.ndarray
    spec: PotentialSpec = None
    resonance_function: np.ndarray = None

    @classmethod
    def from_values(cls, grid, values, spec=None, resonance_function=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise ConfigError(f"potential has shape {values.shape}, grid needs ({grid.n},)")
        if not np.all(np.isfinite(values)):
            raise ConfigError("potential has non-finite values")
        v = np.sqrt(np.abs(values))
        U = np.sign(values)
        V = U * v * v
        for a in (V, v, U):
            a.setflags(write=False)
        return cls(grid, V, v, U, spec, resonance_function)

    @property
    def support(self):
        """Indices where V does not vanish."""
        return np.flatnonzero(self.U)

    @property
    def l1_norm(self):
        return float(self.grid.h * np.abs(self.V).sum())

    @property
    def is_zero(self):
        return not np.any(self.U)


@lru_cache(maxsize=None)
def resonance_blend_coefficients():
    """Coefficients a_0..a_4 of the even polynomial sum a_k x^(2k) that meets |x| to
    fourth order at x = 1."""
    A = np.zeros((5, 5))
    rhs = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
    for k in range(5):
        p = Polynomial.basis(2 * k)
        for order in range(5):
            A[order, k] = p.deriv(order)(1.0) if order else p(1.0)
    return np.linalg.solve(A, rhs)


def _blend_polynomial():
    a = resonance_blend_coefficients()
    coef = np.zeros(9)
    coef[::2] = a
    return Polynomial(coef)


def _bump_polynomial():
    # (1 - x^2)^5, vanishing to fourth order at x = +-1
    return Polynomial([1.0, 0.0, -1.0]) ** 5


def _resonance_values(grid, c, d, bump, moment_correction):
    """V = -(d^4 phi)/phi for phi = d + c*rho + bump*(1-x^2)^5 on [-1, 1].

    The fourth derivative q = d^4 phi comes from the polynomial form.  With
    moment_correction, q is nudged (weight (1-x^2)^2) so its grid moments that
    vanish in the continuum vanish exactly, and phi is rebuilt on the support from
    the grid Green's function.  This makes the resonance exact for the Nystrom
    discretisation instead of O(h^2) approximate.
    """
    x, h = grid.x, grid.h
    inside = np.abs(x) < 1.0
    q = np.zeros(grid.n)
    d4 = c * _blend_polynomial().deriv(4) + bump * _bump_polynomial().deriv(4)
    q[inside] = -d4(x[inside])
    phi = d + c * np.abs(x)
    phi[inside] = d + c * _blend_polynomial()(x[inside]) + bump * _bump_polynomial()(x[inside])
    if not np.any(q):
        raise ConfigError("resonance_example with c = 0 needs a nonzero bump amplitude",
                          key="potential.params.bump")
    if moment_correction:
        # moments 0, 1 vanish for any (c, d); moment 2 too when c = 0
        n_mom = 2 if c > 0 else 3
        xs = x[inside]
        P = np.vstack([xs**j for j in range(n_mom)])
        w = (1.0 - xs**2) ** 2
        alpha = np.linalg.solve((P * w) @ P.T, P @ q[inside])
        q[inside] -= w * (P.T @ alpha)
        green = np.abs(xs[:, None] - xs[None, :]) ** 3 / 12.0
        phi[inside] = d - h * green @ q[inside]
    if np.any(phi[inside] <= 0):
        raise ConfigError("resonance function vanishes on the grid")
    V = np.zeros(grid.n)
    V[inside] = q[inside] / phi[inside]
    return V, phi


def _tabulated_values(grid, path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"tabulated potential file {path} not found", key="potential.params.file")
    data = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ConfigError(f"{path}: expected two columns (x, V)")
    xt, vt = data[:, 0], data[:, 1]
    if np.any(np.diff(xt) <= 0):
        raise ConfigError(f"{path}: x column must be strictly increasing")
    covers = xt[0] <= grid.x[0] and xt[-1] >= grid.x[-1]
    if not covers and max(abs(vt[0]), abs(vt[-1])) > 1e-12:
        raise ConfigError(f"{path}: table does not cover [-L, L] and does not decay at its ends")
    return np.interp(grid.x, xt, vt, left=0.0, right=0.0)


def sample_potential(spec, grid):
    """Evaluate a potential family on the grid."""
    x = grid.x
    p = spec.params
    phi = None
    if spec.family == "zero":
        V = np.zeros(grid.n)
    elif spec.family == "scaled_sech2":
        V = p.get("a", -0.3) / np.cosh(x) ** 2
    elif spec.family == "embedded_example":
        s2 = 1.0 / np.cosh(x) ** 2
        V = 20.0 * s2 - 24.0 * s2**2
    elif spec.family == "resonance_example":
        c, d = float(p.get("c", 1.0)), float(p.get("d", 1.0))
        bump = float(p.get("bump", 0.0 if c > 0 else 1.0))
        V, phi = _resonance_values(grid, c, d, bump, p.get("moment_correction", True))
    else:
        V = _tabulated_values(grid, p["file"])
    return PotentialSample.from_values(grid, spec.coupling * V, spec, phi)


# --------------------------------------------------------------------------
# cutoffs
# --------------------------------------------------------------------------

def smoothstep(u):
    """C^2 ramp 6u^5 - 15u^4 + 10u^3 clamped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Low-energy cutoff chi_1 (1 below lambda0, 0 above 2*lambda0) in the energy variable."""

    lambda0: float

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ConfigError("lambda0 must be positive", key="cutoff.lambda0")

    def chi1(self, energy):
        return 1.0 - smoothstep((np.abs(energy) - self.lambda0) / self.lambda0)

    def chi2(self, energy):
        return 1.0 - self.chi1(energy)

    def lifted(self, which, lam):
        """chi_j(lam^4), the cutoff seen by the spectral variable lam."""
        e = np.asarray(lam, dtype=float) ** 4
        return self.chi1(e) if which == "low" else self.chi2(e)

    @property
    def band(self):
        """Transition band in lam: [lambda0^(1/4), (2 lambda0)^(1/4)]."""
        return self.lambda0**0.25, (2.0 * self.lambda0) ** 0.25


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "potential"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L", "n"],
            "properties": {"L": {"type": "number", "exclusiveMinimum": 0},
                           "n": {"type": "integer", "minimum": 64}},
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "params": {"type": "object"},
                "coupling": {"type": "number"},
                "mu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "cutoff": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda0": {"anyOf": [{"type": "number", "exclusiveMinimum": 0},
                                                 {"const": "auto"}]}},
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"rel_tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
                           "max_nodes": {"type": "integer", "minimum": 64}},
        },
        "rank_tol": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "format": {"enum": ["csv", "json"]}},
        },
    },
}

DEFAULTS = {
    "cutoff": {"lambda0": "auto"},
    "quadrature": {"rel_tol": 1e-6, "max_nodes": 200_000},
    "rank_tol": 1e-8,
    "output": {"dir": "beamlab_out", "format": "csv"},
}


@dataclass(frozen=True)
class QuadratureSettings:
    rel_tol: float = 1e-6
    max_nodes: int = 200_000


@dataclass(frozen=True)
class ExperimentConfig:
    grid: Grid
    potential: PotentialSpec
    lambda0: object = "auto"
    quadrature: QuadratureSettings = QuadratureSettings()
    rank_tol: float = 1e-8
    output_dir: str = "beamlab_out"
    output_format: str = "csv"

    def resolved(self):
        """Plain-dict echo of every setting, defaults included."""
        return {
            "grid": {"L": self.grid.L, "n": self.grid.n},
            "potential": {"family": self.potential.family, "params": dict(self.potential.params),
                          "coupling": self.potential.coupling, "mu": self.potential.decay_exponent},
            "cutoff": {"lambda0": self.lambda0},
            "quadrature": asdict(self.quadrature),
            "rank_tol": self.rank_tol,
            "output": {"dir": self.output_dir, "format": self.output_format},
        }


def config_from_dict(raw):
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        key = ".".join(str(p) for p in exc.absolute_path) or exc.validator
        if exc.validator == "additionalProperties":
            key = exc.message.split("'")[1] if "'" in exc.message else key
        raise ConfigError(f"config error at {key!r}: {exc.message}", key=key) from None
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in DEFAULTS.items()}
    for k, v in raw.items():
        merged[k] = {**merged.get(k, {}), **v} if isinstance(v, dict) else v
    g, p = merged["grid"], merged["potential"]
    return ExperimentConfig(
        grid=build_grid(g["L"], g["n"]),
        potential=PotentialSpec(p["family"], dict(p.get("params", {})),
                                float(p.get("mu", 30.0)), float(p.get("coupling", 1.0))),
        lambda0=merged["cutoff"]["lambda0"],
        quadrature=QuadratureSettings(**merged["quadrature"]),
        rank_tol=float(merged["rank_tol"]),
        output_dir=merged["output"]["dir"],
        output_format=merged["output"]["format"],
    )


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found", key="--config")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)
