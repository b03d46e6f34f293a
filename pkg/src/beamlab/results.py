"""Result records shared by the spectral and Stone propagator routes."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class KernelSlice:
    """Propagator kernel sampled on a point set, K[a, b] = K(xs[a], ys[b])."""

    t: float
    m: float
    ell: float
    kind: str
    cutoff: str
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    route: str
    valid: bool = True
    t_max: float = np.inf

    @property
    def supnorm(self):
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    stderr: float
    window: tuple
    n_points: int

    def predict(self, t):
        return np.exp(self.intercept) * np.asarray(t, dtype=float) ** self.slope


@dataclass(frozen=True, eq=False)
class DecayCurve:
    t: np.ndarray
    supnorm: np.ndarray
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.supnorm) <= 0):
            raise ValueError("sup-norms must be positive")

    def rows(self):
        return list(zip(self.t.tolist(), self.supnorm.tolist()))
