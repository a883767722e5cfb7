"""scikit-learn style front ends.

:class:`PlacementEnergy` fits the per-frequency factorizations of a
background configuration and transforms placement keys into free energies.
:class:`PowerLawFit` is a regressor for ``y = A * r**p`` in log-log space.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .checkpoint import Runner
from .experiments import fit_power_law
from .materials import MaterialMap
from .placements import Placement, PlacementEngine, evaluate_nodes
from .quadrature import build_grid, select_alpha


def check_material_map(m) -> MaterialMap:
    if not isinstance(m, MaterialMap):
        raise TypeError(f"expected a MaterialMap, got {type(m).__name__}")
    return m


def check_placements(placements) -> dict:
    if not isinstance(placements, dict) or not placements:
        raise ValueError("placements must be a non-empty dict of key -> Placement")
    for k, p in placements.items():
        if not isinstance(p, Placement):
            raise TypeError(f"placement {k!r} is not a Placement")
    return placements


class PlacementEnergy(TransformerMixin, BaseEstimator):
    """Free energy of inserting each of a family of small objects into a background.

    Parameters
    ----------
    kind : {"DG", "DA"}
        Wave operator.
    n_nodes : int
        Gauss-Legendre nodes of the frequency integral.
    alpha : float or "auto"
        Frequency scale; "auto" uses ``c / separation`` (and the smallest pole
        frequency of the placements, if lower).
    separation : float or None
        Characteristic distance for the automatic ``alpha``.
    ordering : str
        Fill-reducing ordering of the bulk block.
    c : float
        Speed of light in lattice units.
    threads : int
        Concurrent frequency nodes.
    """

    def __init__(self, kind="DG", n_nodes=20, alpha="auto", separation=None, ordering="amd", c=1.0,
                 threads=1):
        self.kind = kind
        self.n_nodes = n_nodes
        self.alpha = alpha
        self.separation = separation
        self.ordering = ordering
        self.c = c
        self.threads = threads

    def fit(self, X, y=None, placements=None):
        background = check_material_map(X)
        placements = check_placements(placements)
        if self.alpha == "auto":
            poles = [p.model.omega0 for p in placements.values() if p.model.is_dispersive]
            w0 = min(poles + [background.min_pole_frequency()])
            alpha = select_alpha(self.separation, w0 if math.isfinite(w0) else None, self.c)
        else:
            alpha = float(self.alpha)
        self.grid_ = build_grid(alpha, self.n_nodes)
        engine = PlacementEngine(background, placements, self.kind, self.ordering, self.c)
        self.node_values_, self.node_seconds_ = evaluate_nodes(engine, self.grid_, Runner(self.threads))
        self.keys_ = list(engine.keys)
        self.energies_ = dict(zip(self.keys_, np.atleast_1d(self.grid_.integrate(self.node_values_))))
        self.retained_size_ = engine.retained_size
        return self

    def transform(self, X):
        """Free energies for a sequence of placement keys."""
        check_is_fitted(self, "energies_")
        missing = [k for k in X if k not in self.energies_]
        if missing:
            raise KeyError(f"placements not fitted: {missing}")
        return np.array([self.energies_[k] for k in X])

    def interaction(self, key, reference):
        """Energy of ``key`` relative to ``reference``, integrated node by node."""
        check_is_fitted(self, "energies_")
        i, j = self.keys_.index(key), self.keys_.index(reference)
        return self.grid_.integrate(self.node_values_[:, i] - self.node_values_[:, j])


class PowerLawFit(RegressorMixin, BaseEstimator):
    """``y = amplitude * r**exponent`` fitted on ``(ln r, ln |y|)``.

    Parameters
    ----------
    r_min, r_max : float or None
        Fit window; None uses the data range.
    """

    def __init__(self, r_min=None, r_max=None):
        self.r_min = r_min
        self.r_max = r_max

    def fit(self, X, y):
        r = column_or_1d(np.asarray(X, dtype=float).reshape(len(X), -1)[:, 0] if np.ndim(X) > 1 else X)
        y = column_or_1d(y)
        lo = float(np.min(r)) if self.r_min is None else self.r_min
        hi = float(np.max(r)) if self.r_max is None else self.r_max
        res = fit_power_law(r, y, (lo, hi))
        self.exponent_ = res.exponent
        self.amplitude_ = res.amplitude
        self.stderr_ = res.stderr
        self.n_points_ = res.n_points
        return self

    def predict(self, X):
        check_is_fitted(self, "exponent_")
        r = column_or_1d(np.asarray(X, dtype=float).reshape(len(X), -1)[:, 0] if np.ndim(X) > 1 else X)
        return self.amplitude_ * r ** self.exponent_
