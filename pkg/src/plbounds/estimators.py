"""scikit-learn style wrappers over the numerical core.

The core has no training step, so fit only validates parameters and
records input shape; the wrappers exist for pipeline and grid-search use.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cubic import CubicParams, slice_rasters
from .errors import PreconditionError
from .extremal import annulus_modulus, round_annulus
from .poly import Poly, green_potential_grid


def _points(X) -> np.ndarray:
    """(n, 2) real array of (re, im) rows to complex points."""
    X = check_array(X, dtype=float, ensure_min_features=2)
    if X.shape[1] != 2:
        raise PreconditionError("expected two columns: real and imaginary parts")
    return X[:, 0] + 1j * X[:, 1]


class GreenPotentialTransformer(TransformerMixin, BaseEstimator):
    """Maps points of the plane to the Green potential of a monic polynomial."""

    def __init__(self, coefficients=(0.0, 0.0, 1.0)):
        self.coefficients = coefficients

    def fit(self, X, y=None):
        self.poly_ = Poly(tuple(complex(c) for c in self.coefficients))
        self.n_features_in_ = check_array(X, dtype=float).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "poly_")
        return green_potential_grid(self.poly_, _points(X)).reshape(-1, 1)


class CubicSliceClassifier(ClassifierMixin, BaseEstimator):
    """Labels b-values of a lambda-slice: 0 outside the connectedness locus,
    1 connected but not shown principal hyperbolic, 2 principal hyperbolic."""

    def __init__(self, lam=0.0, max_iter=500, ph_iter=2000):
        self.lam = lam
        self.max_iter = max_iter
        self.ph_iter = ph_iter

    def fit(self, X, y=None):
        CubicParams(complex(self.lam), 0)
        if self.max_iter < 1 or self.ph_iter < 1:
            raise PreconditionError("iteration counts must be positive")
        self.n_features_in_ = check_array(X, dtype=float).shape[1]
        self.classes_ = np.array([0, 1, 2])
        return self

    def predict(self, X):
        check_is_fitted(self, "classes_")
        b = _points(X).reshape(1, -1)
        conn, ph = slice_rasters(complex(self.lam), b, self.max_iter, self.ph_iter)
        conn, ph = conn.ravel(), ph.ravel()
        return np.where(conn == 0, 0, np.where(ph == 2, 2, 1))


class RoundAnnulusModulusEstimator(BaseEstimator):
    """Modulus brackets of round annuli given as (r1, r2) rows."""

    def __init__(self, n_radial=64, n_angular=256):
        self.n_radial = n_radial
        self.n_angular = n_angular

    def fit(self, X, y=None):
        if self.n_radial < 2 or self.n_angular < 4:
            raise PreconditionError("mesh too coarse")
        self.n_features_in_ = check_array(X, dtype=float).shape[1]
        return self

    def predict(self, X):
        """(n, 2) array of [lower, upper] modulus bounds."""
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise PreconditionError("expected (r1, r2) rows")
        out = []
        for r1, r2 in X:
            m = annulus_modulus(round_annulus(r1, r2, self.n_radial, self.n_angular))
            out.append([m.lower, m.upper])
        return np.array(out)
