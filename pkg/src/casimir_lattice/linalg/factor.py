"""Common interface of the simplicial and supernodal Cholesky factors."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a pivot of the factorization is not positive."""

    def __init__(self, pivot: int, value: float = float("nan"), context: str = ""):
        self.pivot = pivot
        self.value = value
        msg = f"matrix is not positive definite: pivot at index {pivot} is {value:.3e}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)


class ConditioningWarning(RuntimeWarning):
    pass


class CholeskyFactor:
    """``L L^T = A[perm][:, perm]`` with ``L`` lower triangular.

    Subclasses provide ``L`` (CSC), ``diagonal`` and the in-place triangular
    solves ``_forward`` / ``_backward`` on already permuted right-hand sides.
    Instances are immutable once built.
    """

    perm: np.ndarray
    n: int
    logdet_value: float
    min_pivot: float

    def logdet(self) -> float:
        """``2 * sum(log(diag(L)))``, the log-determinant of the input."""
        return self.logdet_value

    def solve_lower(self, B) -> np.ndarray:
        """``L^{-1} P B`` for a dense or sparse right-hand side (vector or matrix)."""
        X, was_vec = self._rhs(B)
        X = np.ascontiguousarray(X[self.perm])
        self._forward(X)
        return X[:, 0] if was_vec else X

    def solve(self, B) -> np.ndarray:
        """``A^{-1} B``."""
        X, was_vec = self._rhs(B)
        X = np.ascontiguousarray(X[self.perm])
        self._forward(X)
        self._backward(X)
        out = np.empty_like(X)
        out[self.perm] = X
        return out[:, 0] if was_vec else out

    def reconstruct(self) -> sp.csc_matrix:
        """``P^T L L^T P``, i.e. the matrix that was factorized."""
        L = self.L
        LLt = (L @ L.T).tocsc()
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.n)
        return LLt[inv][:, inv]

    def _rhs(self, B):
        if sp.issparse(B):
            B = B.toarray()
        X = np.array(B, dtype=float)
        was_vec = X.ndim == 1
        if was_vec:
            X = X[:, None]
        if X.shape[0] != self.n:
            raise ValueError(f"right-hand side has {X.shape[0]} rows, expected {self.n}")
        return X, was_vec

    def _forward(self, X):
        raise NotImplementedError

    def _backward(self, X):
        raise NotImplementedError
