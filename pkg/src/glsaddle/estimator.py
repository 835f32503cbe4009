"""Estimator-style wrapper around the octant solve.

``SaddleSolver().fit()`` builds the grid and the boundary datum, runs the
symmetric minimisation and keeps the result; ``predict(X)`` returns the
complex field at arbitrary points of the ball by trilinear interpolation of
the symmetric extension.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .boundary import DEFAULT_CAP_RADIUS, DEFAULT_MESH_LEVEL, build_boundary_datum
from .geometry import build_octant_geometry, field_interpolator
from .solver import SolveConfig, el_residual, initialize, minimize


class SaddleSolver(TransformerMixin, BaseEstimator):
    """Symmetric Ginzburg-Landau minimiser on ``B_R``.

    Parameters mirror the solve configuration; ``fit`` ignores its data
    arguments (the problem is fully specified by the parameters).
    """

    def __init__(self, R=12.0, h=0.25, cap_radius=DEFAULT_CAP_RADIUS, mesh_level=DEFAULT_MESH_LEVEL,
                 optimizer="lbfgs", max_iters=4000, grad_tol=1e-6, energy_tol=1e-15,
                 truncate_every=10, seed=0):
        self.R = R
        self.h = h
        self.cap_radius = cap_radius
        self.mesh_level = mesh_level
        self.optimizer = optimizer
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.energy_tol = energy_tol
        self.truncate_every = truncate_every
        self.seed = seed

    def fit(self, X=None, y=None):
        self.geometry_ = build_octant_geometry(self.R, self.h)
        self.datum_ = build_boundary_datum(self.cap_radius, self.mesh_level)
        cfg = SolveConfig(
            max_iters=self.max_iters, grad_tol=self.grad_tol, energy_tol=self.energy_tol,
            truncate_every=self.truncate_every, optimizer=self.optimizer, seed=self.seed,
        )
        f0 = initialize(self.geometry_, self.datum_)
        self.initial_field_ = f0
        self.field_, self.report_ = minimize(f0, cfg)
        self.energy_ = self.report_.final_energy
        self.residual_ = el_residual(self.field_)
        self._interp = field_interpolator(self.field_)
        return self

    def predict(self, X):
        """Complex field values at points ``X`` of shape ``(n, 3)``."""
        check_is_fitted(self, "field_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise ValueError(f"expected points with 3 coordinates, got {X.shape[1]}")
        return self._interp(X)

    def transform(self, X):
        """``(u1, u2)`` columns at points ``X``."""
        u = self.predict(X)
        return np.column_stack([u.real, u.imag])

    def score(self, X=None, y=None):
        """Negative Euler-Lagrange residual of the fitted field."""
        check_is_fitted(self, "field_")
        return -self.residual_
