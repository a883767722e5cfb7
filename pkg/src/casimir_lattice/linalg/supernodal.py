"""Multifrontal supernodal Cholesky.

The elimination tree is postordered so every supernode is a contiguous range
of columns, then small supernodes are merged into their parents (relaxed
amalgamation) to keep dense kernels busy.  The numeric phase walks the
supernodes in order, assembling each frontal matrix from the original
entries and the children's update matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack, solve_triangular
from numba import njit

from . import _kernels
from .factor import CholeskyFactor

# (max columns, max fraction of explicit zeros) pairs for amalgamation
RELAX = ((4, 1.0), (16, 0.5), (48, 0.1))


@njit(cache=True, nogil=True)
def postorder(parent):
    n = len(parent)
    head = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    for j in range(n - 1, -1, -1):
        if parent[j] != -1:
            nxt[j] = head[parent[j]]
            head[parent[j]] = j
    post = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    k = 0
    for j in range(n):
        if parent[j] != -1:
            continue
        top = 0
        stack[0] = j
        while top >= 0:
            p = stack[top]
            i = head[p]
            if i == -1:
                top -= 1
                post[k] = p
                k += 1
            else:
                head[p] = nxt[i]
                top += 1
                stack[top] = i
    return post


@njit(cache=True, nogil=True)
def _fundamental(parent, counts):
    n = len(parent)
    nchild = np.zeros(n, dtype=np.int64)
    for j in range(n):
        if parent[j] != -1:
            nchild[parent[j]] += 1
    starts = np.empty(n + 1, dtype=np.int64)
    ns = 0
    for j in range(n):
        if j > 0 and parent[j - 1] == j and counts[j - 1] == counts[j] + 1 and nchild[j] == 1:
            continue
        starts[ns] = j
        ns += 1
    starts[ns] = n
    return starts[: ns + 1]


def _trapezoid(k, b):
    return k * b + k * (k + 1) // 2


def _amalgamate(starts, parent, counts):
    """Merge each supernode into its parent when it immediately precedes it."""
    ns = len(starts) - 1
    first = [int(x) for x in starts[:-1]]
    last = [int(x) for x in starts[1:]]
    below = [int(counts[f]) - (l - f) for f, l in zip(first, last)]
    nnz = [_trapezoid(last[s] - first[s], below[s]) for s in range(ns)]
    snode_of = np.empty(len(parent), dtype=np.int64)
    for s in range(ns):
        snode_of[first[s]:last[s]] = s
    alive = [True] * ns
    # s can only merge into p when its columns end exactly where p's begin
    for s in range(ns):
        top = parent[last[s] - 1]
        if top == -1:
            continue
        p = int(snode_of[top])
        if last[s] != first[p]:
            continue
        cols = last[p] - first[s]
        merged = _trapezoid(cols, below[p])
        zeros = merged - nnz[s] - nnz[p]
        if any(cols <= mc and zeros <= frac * merged for mc, frac in RELAX):
            first[p] = first[s]
            nnz[p] = merged
            alive[s] = False
    keep = [s for s in range(ns) if alive[s]]
    return np.array([first[s] for s in keep] + [len(parent)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SupernodalSymbolic:
    """Postordered permutation, supernode partition and assembly maps."""

    n: int
    perm: np.ndarray
    starts: np.ndarray
    rows: list  # full row index list of each supernode (columns first)
    sparent: np.ndarray
    children: list
    child_maps: list  # positions of a child's below-rows inside the parent front
    a_index: list  # indices into the permuted lower data array
    a_pos: list  # flat positions inside the (m, m) front
    nnz: int

    @classmethod
    def analyze(cls, lower: sp.csc_matrix, perm: np.ndarray) -> "SupernodalSymbolic":
        """``lower`` is the lower triangle of ``A[perm][:, perm]`` (CSC)."""
        n = lower.shape[0]
        upper = lower.T.tocsc()
        upper.sort_indices()
        up_p = upper.indptr.astype(np.int64)
        up_i = upper.indices.astype(np.int64)
        parent = _kernels.etree(n, up_p, up_i)
        post = postorder(parent)
        if not np.array_equal(post, np.arange(n)):
            perm = perm[post]
            inv = np.empty(n, dtype=np.int64)
            inv[post] = np.arange(n)
            lower = sp.tril(lower[post][:, post], format="csc")
            lower.sort_indices()
            upper = lower.T.tocsc()
            upper.sort_indices()
            up_p = upper.indptr.astype(np.int64)
            up_i = upper.indices.astype(np.int64)
            parent = _kernels.etree(n, up_p, up_i)
        counts = _kernels.column_counts(n, up_p, up_i, parent)
        starts = _amalgamate(_fundamental(parent, counts), parent, counts)
        ns = len(starts) - 1
        snode_of = np.empty(n, dtype=np.int64)
        for s in range(ns):
            snode_of[starts[s]:starts[s + 1]] = s
        sparent = np.array(
            [snode_of[parent[starts[s + 1] - 1]] if parent[starts[s + 1] - 1] != -1 else -1 for s in range(ns)],
            dtype=np.int64,
        )
        children = [[] for _ in range(ns)]
        for s in range(ns):
            if sparent[s] != -1:
                children[sparent[s]].append(s)
        lp, li = lower.indptr, lower.indices
        rows, child_maps, a_index, a_pos = [], [], [], []
        nnz = 0
        for s in range(ns):
            f, l = int(starts[s]), int(starts[s + 1])
            parts = [li[lp[f]:lp[l]]]
            parts += [rows[c][starts[c + 1] - starts[c]:] for c in children[s]]
            below = np.unique(np.concatenate(parts))
            below = below[below >= l]
            idx = np.concatenate([np.arange(f, l, dtype=np.int64), below.astype(np.int64)])
            rows.append(idx)
            child_maps.append(
                [np.searchsorted(idx, rows[c][starts[c + 1] - starts[c]:]) for c in children[s]]
            )
            k = l - f
            cols = np.repeat(np.arange(k), np.diff(lp[f:l + 1]))
            r = np.searchsorted(idx, li[lp[f]:lp[l]])
            a_index.append(np.arange(lp[f], lp[l]))
            m = len(idx)
            a_pos.append(r * m + cols)
            nnz += k * m - k * (k - 1) // 2
        return cls(n, perm, starts, rows, sparent, children, child_maps, a_index, a_pos, int(nnz))


class SupernodalFactor(CholeskyFactor):
    """Dense panels ``[L11; L21]`` per supernode."""

    def __init__(self, symbolic: SupernodalSymbolic, panels: list):
        self.symbolic = symbolic
        self.panels = panels
        self.perm = symbolic.perm
        self.n = symbolic.n
        diag = np.concatenate([np.diag(p) for p in panels]) if panels else np.zeros(0)
        self.diagonal = diag
        self.logdet_value = float(2.0 * np.sum(np.log(diag)))
        self.min_pivot = float(np.min(diag) ** 2) if len(diag) else 1.0
        self._L = None

    @property
    def L(self) -> sp.csc_matrix:
        if self._L is None:
            r, c, v = [], [], []
            sym = self.symbolic
            for s, panel in enumerate(self.panels):
                idx = sym.rows[s]
                k = panel.shape[1]
                rr, cc = np.tril_indices(len(idx), 0, k)
                r.append(idx[rr])
                c.append(sym.starts[s] + cc)
                v.append(panel[rr, cc])
            L = sp.csc_matrix(
                (np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(self.n, self.n)
            )
            L.sort_indices()
            self._L = L
        return self._L

    def _forward(self, X: np.ndarray) -> None:
        sym = self.symbolic
        for s, panel in enumerate(self.panels):
            f, l = sym.starts[s], sym.starts[s + 1]
            k = l - f
            xs = solve_triangular(panel[:k], X[f:l], lower=True, check_finite=False)
            X[f:l] = xs
            if panel.shape[0] > k:
                X[sym.rows[s][k:]] -= panel[k:] @ xs

    def _backward(self, X: np.ndarray) -> None:
        sym = self.symbolic
        for s in range(len(self.panels) - 1, -1, -1):
            panel = self.panels[s]
            f, l = sym.starts[s], sym.starts[s + 1]
            k = l - f
            rhs = X[f:l]
            if panel.shape[0] > k:
                rhs = rhs - panel[k:].T @ X[sym.rows[s][k:]]
            X[f:l] = solve_triangular(panel[:k], rhs, lower=True, trans="T", check_finite=False)


def factor_numeric(symbolic: SupernodalSymbolic, lower_data: np.ndarray):
    """Run the multifrontal numeric phase.

    Returns ``(panels, fail)`` where ``fail`` is -1 on success, otherwise the
    permuted column whose pivot was not positive.
    """
    sym = symbolic
    ns = len(sym.starts) - 1
    updates = [None] * ns
    panels = []
    for s in range(ns):
        f, l = int(sym.starts[s]), int(sym.starts[s + 1])
        k = l - f
        idx = sym.rows[s]
        m = len(idx)
        front = np.zeros((m, m))
        front.flat[sym.a_pos[s]] = lower_data[sym.a_index[s]]
        for c, rel in zip(sym.children[s], sym.child_maps[s]):
            front[np.ix_(rel, rel)] += updates[c]
            updates[c] = None
        L11, info = lapack.dpotrf(front[:k, :k], lower=1, clean=1, overwrite_a=0)
        if info != 0:
            return panels, f + (info - 1 if info > 0 else 0)
        out = np.empty((m, k))
        out[:k] = L11
        if m > k:
            L21 = solve_triangular(L11, front[k:, :k].T, lower=True, check_finite=False).T
            out[k:] = L21
            updates[s] = front[k:, k:] - L21 @ L21.T
        panels.append(out)
    return panels, -1
