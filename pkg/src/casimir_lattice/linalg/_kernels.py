"""Compiled kernels: minimum-degree ordering and simplicial Cholesky.

All routines take plain CSC arrays (``indptr``, ``indices``, ``data``) with
int64 indices.  They release the GIL so distinct factorizations can run on
separate threads.
"""

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# Approximate minimum degree on the quotient graph.
#
# Each node keeps one list in the shared workspace ``iw``.  A variable stores
# its adjacent elements (first ``elen`` entries) followed by its adjacent
# variables; an element stores the variables of its clique.  Variable lists
# never grow (eliminating p frees at least one slot in every list touched),
# so only new elements are appended at the end of the workspace.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _dl_insert(i, d, head, nxt, prv):
    nxt[i] = head[d]
    prv[i] = -1
    if head[d] != -1:
        prv[head[d]] = i
    head[d] = i


@njit(cache=True, nogil=True)
def _dl_remove(i, d, head, nxt, prv):
    if prv[i] != -1:
        nxt[prv[i]] = nxt[i]
    else:
        head[d] = nxt[i]
    if nxt[i] != -1:
        prv[nxt[i]] = prv[i]


@njit(cache=True, nogil=True)
def _compact(n, iw, pe, ln, status):
    ids = np.empty(n, dtype=np.int64)
    cnt = 0
    for i in range(n):
        if status[i] != 2:
            ids[cnt] = i
            cnt += 1
    ids = ids[:cnt]
    order = np.argsort(pe[ids])
    dst = 0
    for j in range(cnt):
        i = ids[order[j]]
        src = pe[i]
        for t in range(ln[i]):
            iw[dst + t] = iw[src + t]
        pe[i] = dst
        dst += ln[i]
    return dst


@njit(cache=True, nogil=True)
def amd_order(n, Ap, Ai):
    """Fill-reducing elimination order of a symmetric pattern.

    ``Ap``/``Ai`` hold the full (both triangles) pattern; diagonal entries are
    ignored.  Returns ``order`` with ``order[k]`` the k-th eliminated index.
    """
    nnz = Ap[n]
    iwlen = 2 * nnz + 2 * n + 64
    iw = np.empty(iwlen, dtype=np.int64)
    pe = np.empty(n, dtype=np.int64)
    ln = np.empty(n, dtype=np.int64)
    elen = np.zeros(n, dtype=np.int64)
    status = np.zeros(n, dtype=np.int8)  # 0 variable, 1 element, 2 absorbed
    pfree = 0
    for i in range(n):
        pe[i] = pfree
        for p in range(Ap[i], Ap[i + 1]):
            j = Ai[p]
            if j != i:
                iw[pfree] = j
                pfree += 1
        ln[i] = pfree - pe[i]
    degree = ln.copy()
    head = np.full(n + 1, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    prv = np.full(n, -1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        _dl_insert(i, degree[i], head, nxt, prv)
    mark = np.zeros(n, dtype=np.int64)
    wmark = np.full(n, -1, dtype=np.int64)
    wval = np.zeros(n, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    tag = 0
    mindeg = 0
    for k in range(n):
        while head[mindeg] == -1:
            mindeg += 1
        p = head[mindeg]
        _dl_remove(p, mindeg, head, nxt, prv)
        order[k] = p

        if pfree + (n - k) > iwlen:
            pfree = _compact(n, iw, pe, ln, status)

        # new element Lp = variables reachable from p
        tag += 1
        mark[p] = tag
        start = pfree
        pp = pe[p]
        ne = elen[p]
        for q in range(pp, pp + ne):
            e = iw[q]
            if status[e] != 1:
                continue
            for r in range(pe[e], pe[e] + ln[e]):
                v = iw[r]
                if status[v] == 0 and mark[v] != tag:
                    mark[v] = tag
                    iw[pfree] = v
                    pfree += 1
            status[e] = 2
        for q in range(pp + ne, pp + ln[p]):
            v = iw[q]
            if status[v] == 0 and mark[v] != tag:
                mark[v] = tag
                iw[pfree] = v
                pfree += 1
        status[p] = 1
        pe[p] = start
        ln[p] = pfree - start
        elen[p] = 0
        lp = ln[p]

        # prune the lists of every variable in Lp and attach element p
        for q in range(start, start + lp):
            i = iw[q]
            _dl_remove(i, degree[i], head, nxt, prv)
            a = pe[i]
            ei = elen[i]
            li = ln[i]
            dst = a
            for r in range(a, a + ei):
                e = iw[r]
                if status[e] == 1:
                    iw[dst] = e
                    dst += 1
            new_e = dst - a
            for r in range(a + ei, a + li):
                v = iw[r]
                if status[v] == 0 and mark[v] != tag:
                    iw[dst] = v
                    dst += 1
            if dst >= a + li:
                raise RuntimeError("minimum degree workspace invariant violated")
            if dst > a + new_e:
                iw[dst] = iw[a + new_e]
            iw[a + new_e] = p
            dst += 1
            elen[i] = new_e + 1
            ln[i] = dst - a

        # |Le \ Lp| for every element adjacent to Lp
        for q in range(start, start + lp):
            i = iw[q]
            for r in range(pe[i], pe[i] + elen[i]):
                e = iw[r]
                if e == p:
                    continue
                if wmark[e] != k:
                    wmark[e] = k
                    wval[e] = ln[e]
                wval[e] -= 1

        remaining = n - k - 1
        for q in range(start, start + lp):
            i = iw[q]
            deg = (ln[i] - elen[i]) + (lp - 1)
            for r in range(pe[i], pe[i] + elen[i]):
                e = iw[r]
                if e != p:
                    deg += wval[e]
            bound = degree[i] + lp - 1
            if bound < deg:
                deg = bound
            if remaining < deg:
                deg = remaining
            if deg < 0:
                deg = 0
            degree[i] = deg
            _dl_insert(i, deg, head, nxt, prv)
            if deg < mindeg:
                mindeg = deg
    return order


# ---------------------------------------------------------------------------
# Simplicial up-looking Cholesky on the upper triangle of a permuted matrix.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def etree(n, Cp, Ci):
    """Elimination tree from the upper-triangular pattern (column k holds rows <= k)."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True, nogil=True)
def _ereach(k, Cp, Ci, parent, stack, w):
    """Pattern of row k of L (without the diagonal) in topological order.

    Writes into ``stack[top:n]`` and returns ``top``; ``w`` is a marker array
    where ``w[i] == k`` means visited.
    """
    n = len(parent)
    top = n
    w[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = Ci[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            stack[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            length -= 1
            top -= 1
            stack[top] = stack[length]
    return top


@njit(cache=True, nogil=True)
def column_counts(n, Cp, Ci, parent):
    counts = np.ones(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(k, Cp, Ci, parent, stack, w)
        for t in range(top, n):
            counts[stack[t]] += 1
    return counts


@njit(cache=True, nogil=True)
def cholesky_numeric(n, Cp, Ci, Cx, parent, Lp):
    """Numeric factorization ``L L^T = C`` with precomputed column pointers.

    Returns ``(Li, Lx, fail)`` where ``fail`` is -1 on success or the column
    whose pivot was not positive.
    """
    nz = Lp[n]
    Li = np.empty(nz, dtype=np.int64)
    Lx = np.empty(nz, dtype=np.float64)
    c = Lp[:n].copy()
    x = np.zeros(n, dtype=np.float64)
    stack = np.empty(n, dtype=np.int64)
    w = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        top = _ereach(k, Cp, Ci, parent, stack, w)
        x[k] = 0.0
        for p in range(Cp[k], Cp[k + 1]):
            if Ci[p] <= k:
                x[Ci[p]] = Cx[p]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = stack[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > 0.0:
            Lx[Lp[k]] = d
            return Li, Lx, k
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return Li, Lx, -1


@njit(cache=True, nogil=True)
def diag_logsum(n, Lp, Lx):
    s = 0.0
    for k in range(n):
        s += np.log(Lx[Lp[k]])
    return 2.0 * s


@njit(cache=True, nogil=True)
def lsolve_dense(n, Lp, Li, Lx, X):
    """Solve ``L Y = X`` in place for a dense (n, m) right-hand side."""
    m = X.shape[1]
    for j in range(n):
        nonzero = False
        for r in range(m):
            if X[j, r] != 0.0:
                nonzero = True
                break
        if not nonzero:
            continue
        d = Lx[Lp[j]]
        for r in range(m):
            X[j, r] /= d
        for p in range(Lp[j] + 1, Lp[j + 1]):
            i = Li[p]
            l = Lx[p]
            for r in range(m):
                X[i, r] -= l * X[j, r]


@njit(cache=True, nogil=True)
def ltsolve_dense(n, Lp, Li, Lx, X):
    """Solve ``L^T Y = X`` in place for a dense (n, m) right-hand side."""
    m = X.shape[1]
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j] + 1, Lp[j + 1]):
            i = Li[p]
            l = Lx[p]
            for r in range(m):
                X[j, r] -= l * X[i, r]
        d = Lx[Lp[j]]
        for r in range(m):
            X[j, r] /= d
