"""scikit-learn style wrappers: decay-exponent regression and zero-energy classification."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import PotentialSample, build_grid
from .propagator import fit_exponent
from .resonance import CLASSES, classify
from .results import DecayCurve


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Fits y ~ C t^slope by least squares on (log t, log y).

    X is a single column of times, y the positive sup-norms.
    """

    def __init__(self, window=None, min_points=8, min_decades=1.5):
        self.window = window
        self.min_points = min_points
        self.min_decades = min_decades

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=2)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one column (the times)")
        t = X[:, 0]
        if np.any(t <= 0):
            raise ValueError("times must be positive")
        fit = fit_exponent(DecayCurve(t, y), self.window, self.min_points, self.min_decades)
        self.fit_ = fit
        self.slope_, self.intercept_, self.stderr_ = fit.slope, fit.intercept, fit.stderr
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return self.fit_.predict(X[:, 0])


class ZeroEnergyClassifier(ClassifierMixin, BaseEstimator):
    """Regular / FirstKind / SecondKind from potentials sampled on a fixed grid.

    Each row of X holds V at the n nodes of the grid [-L, L).  Classification is
    a direct computation, so fit only checks shapes and records the labels.
    """

    def __init__(self, L=15.0, rank_tol=1e-8):
        self.L = L
        self.rank_tol = rank_tol

    def fit(self, X, y=None):
        X = check_array(X)
        self.grid_ = build_grid(self.L, X.shape[1])
        self.classes_ = np.array(CLASSES)
        self.n_features_in_ = X.shape[1]
        return self

    def reports(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} grid values per row, got {X.shape[1]}")
        return [classify(PotentialSample.from_values(self.grid_, row), self.rank_tol) for row in X]

    def predict(self, X):
        return np.array([r.classification for r in self.reports(X)])
