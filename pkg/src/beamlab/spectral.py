"""Pseudospectral matrix of H = d^4/dx^4 + V on the periodic grid and the
eigenfunction-expansion propagator used as the second route."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ValidityWindowError
from .results import KernelSlice

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    matrix: np.ndarray
    grid: object
    m: float = 0.0

    @property
    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenpairs with Euclidean-orthonormal columns; grid functions are vectors / sqrt(h)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    participation: np.ndarray
    grid: object
    bound_state_indices: tuple = ()

    def with_bound_states(self, indices):
        return SpectralData(self.eigenvalues, self.vectors, self.participation, self.grid,
                            tuple(sorted(int(i) for i in indices)))

    def eigenfunction(self, j):
        """Eigenvector j normalised in the h-weighted inner product."""
        return self.vectors[:, j] / np.sqrt(self.grid.h)


def build_hamiltonian(grid, sample, m=0.0):
    if sample.grid != grid:
        raise ConfigError("potential sample lives on a different grid")
    eye = np.eye(grid.n)
    d4 = np.fft.ifft(grid.k[:, None] ** 4 * np.fft.fft(eye, axis=0), axis=0).real
    H = d4 + np.diag(sample.V)
    H = 0.5 * (H + H.T)
    return DiscreteOperator(H, grid, float(m))


def eigendecompose(op, residual_tol=1e-8):
    H = op.matrix
    if not np.all(np.isfinite(H)):
        raise NumericalError("operator has non-finite entries")
    try:
        mu, vecs = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from None
    residual = np.linalg.norm(H @ vecs - vecs * mu, axis=0).max()
    if residual > residual_tol * op.norm:
        raise NumericalError(f"eigen residual {residual:.3e} too large")
    pr = 1.0 / (op.grid.n * np.sum(vecs**4, axis=0))
    return SpectralData(mu, vecs, pr, op.grid)


def detect_bound_states(sd, pr_threshold=0.2):
    """Negative eigenvalues plus localized (low participation) nonnegative modes."""
    negative = np.flatnonzero(sd.eigenvalues < 0)
    localized = np.flatnonzero((sd.eigenvalues >= 0) & (sd.participation < pr_threshold))
    for j in negative:
        log.info("bound state %d: mu=%.6g (negative)", j, sd.eigenvalues[j])
    for j in localized:
        log.info("embedded candidate %d: mu=%.6g PR=%.3g", j, sd.eigenvalues[j], sd.participation[j])
    return tuple(sorted(set(negative.tolist()) | set(localized.tolist())))


def validity_window(grid, lam_max):
    """Latest time before waves with |k| <= lam_max wrap around the periodic box."""
    return grid.L / (4.0 * lam_max)


def spectral_lam_max(grid, cutoff=None, which="full"):
    if cutoff is not None and which == "low":
        return cutoff.band[1]
    return np.pi * grid.n / (2.0 * grid.L)


def _profile(w, t, ell, kind):
    """cos(t sqrt w) w^(ell/2) or sin(t sqrt w)/sqrt(w), with w = 0 handled by limits."""
    root = np.sqrt(np.maximum(w, 0.0))
    zero = root <= 1e-12 * max(1.0, float(root.max(initial=0.0)))
    if kind == "cos":
        with np.errstate(divide="ignore"):
            g = np.cos(t * root) * np.where(zero, 1.0 if ell == 0 else 0.0, root**ell)
        return g
    if kind == "sin_over":
        safe = np.where(zero, 1.0, root)
        return np.where(zero, t, np.sin(t * root) / safe)
    raise ValueError(f"unknown kind {kind!r}")


def propagate_spectral(sd, t, m=0.0, kind="cos", ell=0, cutoff=None, which="full",
                       rows=None, cols=None, enforce_window=False):
    """Kernel of g(H + m^2) P_ac on grid indices rows x cols (default: all nodes)."""
    kind = "sin_over" if kind == "sinc" else kind
    grid = sd.grid
    keep = np.setdiff1d(np.arange(grid.n), np.asarray(sd.bound_state_indices, dtype=int))
    mu = sd.eigenvalues[keep]
    w = mu + m * m
    if np.any(w < -1e-9 * max(1.0, np.abs(sd.eigenvalues).max())):
        raise NumericalError("negative mu + m^2 among kept modes; bound states not removed")
    g = _profile(w, t, ell, kind)
    if cutoff is not None and which != "full":
        g = g * (cutoff.chi1(mu) if which == "low" else cutoff.chi2(mu))
    rows = np.arange(grid.n) if rows is None else np.asarray(rows)
    cols = np.arange(grid.n) if cols is None else np.asarray(cols)
    E = sd.vectors[:, keep]
    K = (E[rows] * g) @ E[cols].T / grid.h
    t_max = validity_window(grid, spectral_lam_max(grid, cutoff, which))
    valid = abs(t) <= t_max
    if enforce_window and not valid:
        raise ValidityWindowError(f"t={t} exceeds the validity window {t_max:.4g}")
    return KernelSlice(float(t), float(m), ell, kind, which, grid.x[rows], grid.x[cols], K,
                       "spectral", bool(valid), t_max)


def pac_projector(sd):
    keep = np.setdiff1d(np.arange(sd.grid.n), np.asarray(sd.bound_state_indices, dtype=int))
    E = sd.vectors[:, keep]
    return E @ E.T
