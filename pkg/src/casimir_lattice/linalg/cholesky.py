"""Sparse Cholesky factorization with fill-reducing ordering.

Two numeric back ends share one interface: an up-looking simplicial
factorization (small problems, and the reference for the other) and a
multifrontal supernodal one.  The symbolic analysis of a pattern is reusable
across any number of matrices with the same pattern, which is how the
frequency sweeps avoid re-ordering.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .factor import CholeskyFactor, ConditioningWarning, NotPositiveDefiniteError
from .ordering import amd, nested_dissection
from .supernodal import SupernodalFactor, SupernodalSymbolic, factor_numeric

PIVOT_WARN_RATIO = 1e-13
SUPERNODAL_MIN_SIZE = 4096

__all__ = [
    "CholeskyFactor",
    "ConditioningWarning",
    "NotPositiveDefiniteError",
    "Analysis",
    "analyze",
    "factorize",
    "logdet",
]


def _as_csc(A) -> sp.csc_matrix:
    m = getattr(A, "matrix", A)
    if not sp.issparse(m):
        m = sp.csc_matrix(np.asarray(m, dtype=float))
    m = sp.csc_matrix(m, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    m.sum_duplicates()
    m.sort_indices()
    return m


def _gather_map(m: sp.csc_matrix, perm: np.ndarray, lower: bool) -> tuple[sp.csc_matrix, np.ndarray]:
    """Triangle of ``m[perm][:, perm]`` whose data are positions in ``m.data``."""
    tagged = sp.csc_matrix((np.arange(1, m.nnz + 1, dtype=float), m.indices, m.indptr), shape=m.shape)
    p = tagged[perm][:, perm]
    tri = sp.tril(p, format="csc") if lower else sp.triu(p, format="csc")
    tri.sort_indices()
    pos = tri.data.astype(np.int64) - 1
    tri.indptr = tri.indptr.astype(np.int64)
    tri.indices = tri.indices.astype(np.int64)
    return tri, pos


@dataclass(frozen=True, eq=False)
class Analysis:
    """Ordering and symbolic factorization of one sparsity pattern."""

    n: int
    method: str
    perm: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    tri_indptr: np.ndarray
    tri_indices: np.ndarray
    gather: np.ndarray
    parent: np.ndarray | None = None
    colptr: np.ndarray | None = None
    supernodal: SupernodalSymbolic | None = None

    @property
    def nnz(self) -> int:
        """Nonzeros of the factor (explicit zeros of supernodal panels included)."""
        if self.supernodal is not None:
            return self.supernodal.nnz
        return int(self.colptr[-1])

    def matches(self, m: sp.csc_matrix) -> bool:
        return (
            m.shape[0] == self.n
            and np.array_equal(m.indptr, self.indptr)
            and np.array_equal(m.indices, self.indices)
        )


def _resolve_ordering(m, ordering, coords):
    n = m.shape[0]
    if isinstance(ordering, str):
        if ordering == "amd":
            return amd(m)
        if ordering == "natural":
            return np.arange(n, dtype=np.int64)
        if ordering == "nd":
            if coords is None:
                raise ValueError("nested dissection needs coordinates")
            return nested_dissection(m, coords)
        raise ValueError(f"unknown ordering {ordering!r}")
    perm = np.asarray(ordering, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("ordering must be a permutation of range(n)")
    return perm


def analyze(A, ordering="amd", method: str = "auto", coords=None) -> Analysis:
    """Order the pattern of ``A`` and compute the factor structure.

    ``ordering`` is ``"amd"``, ``"nd"`` (needs ``coords``), ``"natural"`` or
    an explicit permutation.  ``method`` picks the numeric back end:
    ``"simplicial"``, ``"supernodal"`` or ``"auto"`` (by size).
    """
    m = _as_csc(A)
    n = m.shape[0]
    perm = _resolve_ordering(m, ordering, coords)
    if method == "auto":
        method = "supernodal" if n >= SUPERNODAL_MIN_SIZE else "simplicial"
    if method == "simplicial":
        tri, gather = _gather_map(m, perm, lower=False)
        parent = _kernels.etree(n, tri.indptr, tri.indices)
        counts = _kernels.column_counts(n, tri.indptr, tri.indices, parent)
        colptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=colptr[1:])
        return Analysis(n, method, perm, m.indptr.copy(), m.indices.copy(),
                        tri.indptr, tri.indices, gather, parent=parent, colptr=colptr)
    if method == "supernodal":
        tri, _ = _gather_map(m, perm, lower=True)
        sym = SupernodalSymbolic.analyze(tri, perm)
        tri, gather = _gather_map(m, sym.perm, lower=True)
        return Analysis(n, method, sym.perm, m.indptr.copy(), m.indices.copy(),
                        tri.indptr, tri.indices, gather, supernodal=sym)
    raise ValueError(f"unknown factorization method {method!r}")


class SimplicialFactor(CholeskyFactor):
    def __init__(self, analysis: Analysis, Li: np.ndarray, Lx: np.ndarray):
        self.analysis = analysis
        self.perm = analysis.perm
        self.n = analysis.n
        L = sp.csc_matrix((Lx, Li, analysis.colptr), shape=(self.n, self.n))
        L.has_sorted_indices = True
        self.L = L
        self.diagonal = Lx[analysis.colptr[:-1]]
        self.logdet_value = float(_kernels.diag_logsum(self.n, analysis.colptr, Lx))
        self.min_pivot = float(np.min(self.diagonal) ** 2) if self.n else 1.0

    def _forward(self, X):
        _kernels.lsolve_dense(self.n, self.L.indptr, self.L.indices, self.L.data, X)

    def _backward(self, X):
        _kernels.ltsolve_dense(self.n, self.L.indptr, self.L.indices, self.L.data, X)


def factorize(A, ordering="amd", symbolic: Analysis | None = None, method: str = "auto",
              coords=None, context: str = "") -> CholeskyFactor:
    """Cholesky-factorize a symmetric positive definite sparse matrix.

    ``symbolic`` reuses an earlier :func:`analyze` of the same pattern.
    ``context`` is appended to diagnostics, e.g. the frequency node.

    Raises
    ------
    NotPositiveDefiniteError
        With the (original) index of the first non-positive pivot.
    """
    m = _as_csc(A)
    if symbolic is None:
        symbolic = analyze(m, ordering, method, coords)
    elif not symbolic.matches(m):
        raise ValueError("matrix pattern differs from the analysed pattern")
    n = symbolic.n
    tri_data = m.data[symbolic.gather]
    if symbolic.method == "simplicial":
        Li, Lx, fail = _kernels.cholesky_numeric(
            n, symbolic.tri_indptr, symbolic.tri_indices, tri_data, symbolic.parent, symbolic.colptr
        )
        if fail >= 0:
            raise NotPositiveDefiniteError(int(symbolic.perm[fail]), float(Lx[symbolic.colptr[fail]]), context)
        factor = SimplicialFactor(symbolic, Li, Lx)
    else:
        panels, fail = factor_numeric(symbolic.supernodal, tri_data)
        if fail >= 0:
            raise NotPositiveDefiniteError(int(symbolic.perm[fail]), float("nan"), context)
        factor = SupernodalFactor(symbolic.supernodal, panels)
    _check_pivots(factor, m, context)
    return factor


def _check_pivots(factor: CholeskyFactor, m: sp.csc_matrix, context: str) -> None:
    if factor.n == 0:
        return
    max_diag = float(m.diagonal().max())
    if factor.min_pivot < PIVOT_WARN_RATIO * max_diag:
        where = f" at {context}" if context else ""
        k = int(np.argmin(factor.diagonal))
        warnings.warn(
            f"ill-conditioned factorization{where}: pivot {factor.min_pivot:.3e} "
            f"at index {int(factor.perm[k])} (max diagonal {max_diag:.3e})",
            ConditioningWarning,
            stacklevel=3,
        )


def logdet(factor: CholeskyFactor) -> float:
    return factor.logdet()
