"""Discrete curl pair and the two imaginary-frequency wave operators.

``D_A = eps * omega**2 / c**2 + Curl* Curl`` acts on links (vector potential);
``D_G = omega**2 / c**2 + Curl (1/eps) Curl*`` acts on faces (magnetic
potential).  Both are real symmetric positive definite for ``omega > 0``.

Sparsity patterns depend only on the lattice and are built once; assembling
at a new frequency only refreshes the value array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .lattice import Lattice
from .materials import MaterialMap

OPERATORS = ("DA", "DG")


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Sparse matrix in canonical compressed-column form plus a symmetry flag."""

    matrix: sp.csc_matrix
    symmetric: bool = False

    def __post_init__(self):
        m = sp.csc_matrix(self.matrix)
        if not m.has_canonical_format:
            m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def transpose(self) -> "SparseOperator":
        return SparseOperator(self.matrix.T.tocsc(), self.symmetric)

    def check_symmetric(self) -> bool:
        """Exact comparison against the explicit transpose."""
        m, t = self.matrix, self.matrix.T.tocsc()
        t.sort_indices()
        return (
            m.shape == t.shape
            and np.array_equal(m.indptr, t.indptr)
            and np.array_equal(m.indices, t.indices)
            and np.array_equal(m.data, t.data)
        )

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump_coo(self, path) -> None:
        """Write ``row col value`` lines (zero based), column-major order."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        with open(path, "w") as fh:
            fh.write(f"# {self.shape[0]} {self.shape[1]} {self.nnz} symmetric={int(self.symmetric)}\n")
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def load_coo(path) -> SparseOperator:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    nr, nc = int(header[0]), int(header[1])
    symmetric = header[3].endswith("1") if len(header) > 3 else False
    table = np.loadtxt(path, comments="#", ndmin=2)
    m = sp.csc_matrix(
        (table[:, 2], (table[:, 0].astype(np.int64), table[:, 1].astype(np.int64))), shape=(nr, nc)
    )
    return SparseOperator(m, symmetric)


def assemble_curl(lat: Lattice) -> SparseOperator:
    """Face-by-link circulation matrix with entries +-1."""
    links, signs = lat.face_incidence
    rows = np.repeat(np.arange(lat.n_faces), 4)
    m = sp.csc_matrix(
        (signs.ravel().astype(float), (rows, links.ravel())), shape=(lat.n_faces, lat.n_links)
    )
    return SparseOperator(m)


def assemble_curl_star(lat: Lattice) -> SparseOperator:
    return assemble_curl(lat).transpose()


def assemble_gradient(lat: Lattice) -> SparseOperator:
    """Link-by-site forward difference, used to check ``Curl grad = 0``."""
    sites = np.arange(lat.n_sites)
    rows, cols, vals = [], [], []
    for ax in range(lat.dim):
        link = lat.dim * sites + ax
        rows += [link, link]
        cols += [lat.shift(sites, ax, 1), sites]
        vals += [np.ones(lat.n_sites), -np.ones(lat.n_sites)]
    m = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(lat.n_links, lat.n_sites),
    )
    return SparseOperator(m)


class OperatorPattern:
    """Fixed sparsity pattern of one wave operator on one lattice.

    ``values = weights @ per_link + shift * diag_term`` fills the data array of
    the canonical CSC matrix, where ``per_link`` is ``1/eps`` (DG) or the
    permittivity (DA).
    """

    def __init__(self, lat: Lattice, kind: str):
        if kind not in OPERATORS:
            raise ValueError(f"unknown operator {kind!r}; expected one of {OPERATORS}")
        self.lattice = lat
        self.kind = kind
        n = lat.n_faces if kind == "DG" else lat.n_links
        self.n = n
        faces, fsigns = lat.link_incidence
        diag = np.arange(n)
        if kind == "DG":
            k = faces.shape[1]
            ii, jj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
            r = faces[:, ii.ravel()].ravel()
            c = faces[:, jj.ravel()].ravel()
            w = (fsigns[:, ii.ravel()] * fsigns[:, jj.ravel()]).ravel().astype(float)
            src = np.repeat(np.arange(lat.n_links), k * k)
        else:
            links, lsigns = lat.face_incidence
            ii, jj = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
            r = links[:, ii.ravel()].ravel()
            c = links[:, jj.ravel()].ravel()
            w = (lsigns[:, ii.ravel()] * lsigns[:, jj.ravel()]).ravel().astype(float)
            src = None
        keys = np.concatenate([c * n + r, diag * n + diag])
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        cols = uniq // n
        self.indptr = np.searchsorted(cols, np.arange(n + 1)).astype(np.int32)
        nnz = len(uniq)
        pos_terms = inverse[: len(w)]
        self.diag_pos = inverse[len(w):]
        if kind == "DG":
            self.weights = sp.csr_matrix((w, (pos_terms, src)), shape=(nnz, lat.n_links))
            self.fixed = np.zeros(nnz)
        else:
            self.weights = None
            self.fixed = np.bincount(pos_terms, weights=w, minlength=nnz)
        self.nnz = nnz

    def values(self, material_map: MaterialMap, omega: float, c: float = 1.0) -> np.ndarray:
        if material_map.lattice != self.lattice:
            raise ValueError("material map belongs to a different lattice")
        if not omega > 0:
            raise ValueError(f"frequency must be positive, got {omega}")
        eps = material_map.epsilon(omega)
        if np.any(eps <= 0):
            raise ValueError("permittivity must be positive on every link")
        k2 = (omega / c) ** 2
        data = self.fixed.copy()
        if self.kind == "DG":
            data += self.weights @ (1.0 / eps)
            data[self.diag_pos] += k2
        else:
            data[self.diag_pos] += k2 * eps
        return data

    def assemble(self, material_map: MaterialMap, omega: float, c: float = 1.0) -> SparseOperator:
        data = self.values(material_map, omega, c)
        m = sp.csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        m.has_sorted_indices = True
        return SparseOperator(m, symmetric=True)


@lru_cache(maxsize=16)
def operator_pattern(lat: Lattice, kind: str) -> OperatorPattern:
    return OperatorPattern(lat, kind)


def assemble_DA(lat: Lattice, material_map: MaterialMap, omega: float, c: float = 1.0) -> SparseOperator:
    return operator_pattern(lat, "DA").assemble(material_map, omega, c)


def assemble_DG(lat: Lattice, material_map: MaterialMap, omega: float, c: float = 1.0) -> SparseOperator:
    return operator_pattern(lat, "DG").assemble(material_map, omega, c)


def assemble(kind: str, material_map: MaterialMap, omega: float, c: float = 1.0) -> SparseOperator:
    return operator_pattern(material_map.lattice, kind).assemble(material_map, omega, c)


def operator_size(lat: Lattice, kind: str) -> int:
    return lat.n_faces if kind == "DG" else lat.n_links


def dofs_touching_links(lat: Lattice, kind: str, links) -> np.ndarray:
    """Operator rows whose entries depend on the permittivity of ``links``."""
    links = np.unique(np.asarray(links, dtype=np.int64))
    if kind == "DG":
        return np.unique(lat.link_incidence[0][links].ravel())
    return links


def dof_coordinates(lat: Lattice, kind: str) -> np.ndarray:
    """Geometric position of every operator row: link midpoints or face centres."""
    if kind == "DA":
        return lat.link_midpoints
    coords, normal = lat.decode_face(lat.enumerate_faces())
    centre = coords.astype(float)
    if lat.dim == 2:
        return centre + 0.5
    for n, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        rows = normal == n
        centre[rows, a] += 0.5
        centre[rows, b] += 0.5
    return centre


def local_delta(lat: Lattice, kind: str, links, eps_old, eps_new, omega: float, c: float = 1.0):
    """Change of the operator when the permittivity of ``links`` changes.

    Returns ``(dofs, block)``: the sorted rows touched and the dense change
    restricted to ``dofs x dofs``.  Equal to the difference of two full
    assemblies, without assembling either.
    """
    links = np.asarray(links, dtype=np.int64)
    eps_old = np.broadcast_to(np.asarray(eps_old, dtype=float), links.shape)
    eps_new = np.broadcast_to(np.asarray(eps_new, dtype=float), links.shape)
    if len(np.unique(links)) != len(links):
        raise ValueError("links must be distinct")
    dofs = dofs_touching_links(lat, kind, links)
    block = np.zeros((len(dofs), len(dofs)))
    if kind == "DA":
        pos = np.searchsorted(dofs, links)
        block[pos, pos] = (omega / c) ** 2 * (eps_new - eps_old)
        return dofs, block
    if kind != "DG":
        raise ValueError(f"unknown operator {kind!r}; expected one of {OPERATORS}")
    faces, signs = lat.link_incidence
    for link, a, b in zip(links, eps_old, eps_new):
        pos = np.searchsorted(dofs, faces[link])
        s = signs[link].astype(float)
        block[np.ix_(pos, pos)] += (1.0 / b - 1.0 / a) * np.outer(s, s)
    return dofs, block
