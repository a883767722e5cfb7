"""Dense reference computations for validation.

Everything here works on full dense matrices with numpy's LAPACK bindings and
shares no code with the sparse factorization.  A hard size cap keeps it out
of production runs.
"""

from __future__ import annotations

import numpy as np

from .materials import MaterialMap
from .operators import assemble

MAX_DIM = 4096
SYMMETRY_TOL = 1e-13


class OracleError(ValueError):
    pass


def as_dense(A) -> np.ndarray:
    """Validated dense symmetric matrix (sparse inputs are densified)."""
    m = getattr(A, "matrix", A)
    if hasattr(m, "toarray"):
        if m.shape[0] > MAX_DIM:
            raise OracleError(f"dimension {m.shape[0]} exceeds the dense oracle cap {MAX_DIM}")
        m = m.toarray()
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise OracleError(f"need a square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise OracleError(f"dimension {m.shape[0]} exceeds the dense oracle cap {MAX_DIM}")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise OracleError("matrix is not symmetric")
    return m


def dense_eigencheck(A) -> tuple[float, float]:
    """Smallest and largest eigenvalue."""
    w = np.linalg.eigvalsh(as_dense(A))
    return float(w[0]), float(w[-1])


def dense_logdet(A) -> float:
    """Log-determinant from a dense Cholesky factor."""
    m = as_dense(A)
    if m.shape[0] == 0:
        return 0.0
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        lo, _ = dense_eigencheck(m)
        raise OracleError(f"matrix is not positive definite (smallest eigenvalue {lo:.3e})") from None
    return float(2.0 * np.sum(np.log(np.diag(L))))


def dense_logdet_lu(A) -> float:
    """Log-determinant from an LU factorization, independent of Cholesky."""
    sign, ld = np.linalg.slogdet(as_dense(A))
    if sign <= 0:
        raise OracleError("determinant is not positive")
    return float(ld)


def dense_node_logdets(cfg: MaterialMap, grid, kind: str = "DG", c: float = 1.0) -> np.ndarray:
    return np.array([dense_logdet(assemble(kind, cfg, float(w), c)) for w in grid.omega])


def dense_free_energy_difference(cfg1: MaterialMap, cfg2: MaterialMap, grid, kind: str = "DG",
                                 c: float = 1.0) -> float:
    """Full dense log-determinants of both operators at every node."""
    if cfg1.lattice != cfg2.lattice:
        raise OracleError("configurations live on different lattices")
    n = cfg1.lattice.n_faces if kind == "DG" else cfg1.lattice.n_links
    if n > MAX_DIM:
        raise OracleError(f"dimension {n} exceeds the dense oracle cap {MAX_DIM}")
    if cfg1 == cfg2:
        return 0.0
    d = dense_node_logdets(cfg1, grid, kind, c) - dense_node_logdets(cfg2, grid, kind, c)
    return float(np.sum(grid.weights * grid.jacobian * d) / (2.0 * np.pi))
