"""Block elimination of the bulk of a wave operator.

Writing ``A = [[X, Y], [Y^T, Z]]`` with the bulk in ``X`` and a small set of
retained indices in ``Z``, ``ln det A = ln det X + ln det S`` with the Schur
complement ``S = Z - Y^T X^{-1} Y``.  When two configurations differ only in
entries inside ``Z x Z`` they share ``X`` and ``Y``, so all energy
differences live in small dense matrices.

A second level works inside ``S``: for a perturbation confined to a subset
``T`` of the retained indices, ``S`` is reduced once more onto ``T`` and the
perturbed log-determinant is evaluated on that tiny block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .cholesky import Analysis, CholeskyFactor, _as_csc, analyze, factorize
from .factor import NotPositiveDefiniteError


class ClosureError(ValueError):
    """A perturbation reaches outside the block it was declared to touch."""


@dataclass(frozen=True, eq=False)
class SchurPlan:
    """Partition of ``range(n)`` into bulk indices and retained indices.

    ``subsets`` optionally names level-3 groups; each is given in original
    numbering and must lie inside ``retained``.
    """

    n: int
    retained: np.ndarray
    subsets: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.asarray(self.retained, dtype=np.int64)
        if z.ndim != 1 or len(np.unique(z)) != len(z):
            raise ValueError("retained indices must be distinct")
        if len(z) and (z.min() < 0 or z.max() >= self.n):
            raise ValueError("retained index out of range")
        object.__setattr__(self, "retained", z)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[z] = np.arange(len(z))
        object.__setattr__(self, "_pos", pos)
        subs = {}
        for key, idx in dict(self.subsets).items():
            idx = np.asarray(idx, dtype=np.int64)
            if np.any(pos[idx] < 0):
                raise ClosureError(f"subset {key!r} is not contained in the retained block")
            subs[key] = idx
        object.__setattr__(self, "subsets", subs)

    @classmethod
    def from_subsets(cls, n: int, subsets: dict) -> "SchurPlan":
        """Retain the union of ``subsets`` (in first-seen order)."""
        seen, order = set(), []
        for idx in subsets.values():
            for i in np.asarray(idx, dtype=np.int64).tolist():
                if i not in seen:
                    seen.add(i)
                    order.append(i)
        return cls(n, np.array(order, dtype=np.int64), subsets)

    @property
    def bulk(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.retained] = False
        return np.flatnonzero(mask)

    @property
    def size(self) -> int:
        return len(self.retained)

    def local(self, idx) -> np.ndarray:
        """Positions of original indices inside the retained block."""
        p = self._pos[np.asarray(idx, dtype=np.int64)]
        if np.any(p < 0):
            raise ClosureError("index outside the retained block")
        return p

    def check_closure(self, delta) -> None:
        """Reject an entry-delta with support outside ``retained x retained``."""
        d = sp.coo_matrix(getattr(delta, "matrix", delta))
        keep = d.data != 0
        if np.any(self._pos[d.row[keep]] < 0) or np.any(self._pos[d.col[keep]] < 0):
            raise ClosureError("perturbation touches indices outside the retained block")

    def restrict(self, delta) -> np.ndarray:
        """Dense ``retained x retained`` block of an entry-delta, after checking closure."""
        self.check_closure(delta)
        d = sp.csr_matrix(getattr(delta, "matrix", delta))
        return d[self.retained][:, self.retained].toarray()


def analyze_bulk(A, plan: SchurPlan, ordering="amd", method: str = "auto", coords=None) -> Analysis:
    """Symbolic analysis of the bulk block, reusable while the pattern is fixed."""
    m = _as_csc(A)
    bulk = plan.bulk
    X = m[bulk][:, bulk]
    return analyze(X, ordering, method, None if coords is None else np.asarray(coords)[bulk])


def schur_complement(A, plan: SchurPlan, symbolic: Analysis | None = None, ordering="amd",
                     method: str = "auto", coords=None, context: str = ""):
    """Factorize the bulk block and form the dense Schur complement.

    Returns ``(factor_of_X, S)``; ``S`` is ordered like ``plan.retained``.
    The retained block is eliminated last, after the fill-reducing ordering
    of the bulk.
    """
    m = _as_csc(A)
    if m.shape[0] != plan.n:
        raise ValueError("plan size does not match the matrix")
    bulk, z = plan.bulk, plan.retained
    rows = m[bulk]
    X = rows[:, bulk]
    Y = rows[:, z]
    Zb = m[z][:, z].toarray()
    if symbolic is None:
        symbolic = analyze(X, ordering, method, None if coords is None else np.asarray(coords)[bulk])
    try:
        fx = factorize(X, symbolic=symbolic, context=context)
    except NotPositiveDefiniteError as err:
        raise NotPositiveDefiniteError(int(bulk[err.pivot]), err.value, context or "bulk block") from None
    U = fx.solve_lower(Y)
    S = Zb - U.T @ U
    S = 0.5 * (S + S.T)
    return fx, S


def dense_cholesky_logdet(M: np.ndarray) -> float:
    """Log-determinant of a small SPD matrix via LAPACK Cholesky."""
    if M.size == 0:
        return 0.0
    c, info = sla.lapack.dpotrf(np.asarray(M, dtype=float), lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefiniteError(int(info) - 1 if info > 0 else 0)
    return float(2.0 * np.sum(np.log(np.diag(c))))


def reduce_to_subset(S: np.ndarray, subset) -> np.ndarray:
    """Schur complement of ``S`` onto ``subset`` (the rest eliminated)."""
    S = np.asarray(S, dtype=float)
    t = np.asarray(subset, dtype=np.int64)
    mask = np.ones(S.shape[0], dtype=bool)
    mask[t] = False
    r = np.flatnonzero(mask)
    Stt = S[np.ix_(t, t)]
    if len(r) == 0:
        return Stt.copy()
    cf = sla.cho_factor(S[np.ix_(r, r)], lower=True)
    W = sla.cho_solve(cf, S[np.ix_(r, t)])
    out = Stt - S[np.ix_(t, r)] @ W
    return 0.5 * (out + out.T)


def perturbed_logdet_family(S, perturbations, subsets, include_constant: bool = True) -> np.ndarray:
    """Log-determinants of ``S + delta_c`` for a family of local perturbations.

    Parameters
    ----------
    S : (m, m) array
        Unperturbed effective matrix (symmetric positive definite).
    perturbations : sequence of (m, m) arrays
        Entry-deltas; delta_c must vanish outside ``subsets[c] x subsets[c]``.
    subsets : sequence of index arrays
        Positions (into ``S``) each perturbation may touch.
    include_constant : bool
        Add the common constant ``ln det S``.  Without it the values are the
        small per-configuration shifts ``ln det(S + delta) - ln det S``.

    Every value is ``ln det(S + delta_c)`` up to the same additive constant,
    so differences between configurations are exact.  Each one is evaluated
    by reducing ``S`` onto the touched subset ``T`` and using
    ``ln det(S + delta) - ln det S = ln det(S_T + delta_T) - ln det S_T``.
    """
    S = np.asarray(S, dtype=float)
    if len(perturbations) != len(subsets):
        raise ValueError("need one subset per perturbation")
    base = dense_cholesky_logdet(S) if include_constant else 0.0
    out = np.empty(len(perturbations))
    cache: dict[tuple, tuple[np.ndarray, float]] = {}
    for c, (delta, subset) in enumerate(zip(perturbations, subsets)):
        t = np.asarray(subset, dtype=np.int64)
        d = delta.toarray() if sp.issparse(delta) else np.asarray(delta, dtype=float)
        if d.shape != S.shape:
            raise ValueError("perturbation shape does not match S")
        mask = np.ones(S.shape[0], dtype=bool)
        mask[t] = False
        if np.any(d[mask, :] != 0) or np.any(d[:, mask] != 0):
            raise ClosureError(f"perturbation {c} touches entries outside its declared subset")
        key = tuple(t.tolist())
        if key not in cache:
            seff = reduce_to_subset(S, t)
            cache[key] = (seff, dense_cholesky_logdet(seff))
        seff, ld0 = cache[key]
        out[c] = base + dense_cholesky_logdet(seff + d[np.ix_(t, t)]) - ld0
    return out
