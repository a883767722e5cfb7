"""Periodic Yee lattices in two and three dimensions.

Electric degrees of freedom live on links, magnetic ones on faces.  Sites are
numbered with the x coordinate running fastest; links are numbered site-major
(``link = dim * site + axis``) and so are faces (``face = site`` in 2D,
``face = 3 * site + normal`` in 3D).  The lattice constant is one.

The face with lower corner ``s`` and normal ``n`` is spanned by the axes
``(a, b)`` following ``n`` cyclically.  Its circulation is

    +E_a(s) + E_b(s + a) - E_a(s + b) - E_b(s)

which fixes every sign used by the curl operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# (a, b) spanning axes for each face normal, right-handed.
_SPAN_3D = ((1, 2), (2, 0), (0, 1))
_SPAN_2D = ((0, 1),)

MIN_EXTENT = 3


@dataclass(frozen=True)
class Lattice:
    """A periodic cubic (3D) or square (2D) lattice.

    Parameters
    ----------
    extent : tuple of int
        Number of sites along each axis; its length sets the dimension.
    """

    extent: tuple[int, ...]

    def __post_init__(self):
        extent = tuple(int(e) for e in self.extent)
        if len(extent) not in (2, 3):
            raise ValueError(f"lattice dimension must be 2 or 3, got {len(extent)}")
        if min(extent) < MIN_EXTENT:
            raise ValueError(f"every extent must be >= {MIN_EXTENT}, got {extent}")
        object.__setattr__(self, "extent", extent)

    @classmethod
    def square(cls, L: int) -> "Lattice":
        return cls((L, L))

    @classmethod
    def cube(cls, L: int) -> "Lattice":
        return cls((L, L, L))

    @property
    def dim(self) -> int:
        return len(self.extent)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.extent))

    @property
    def n_links(self) -> int:
        return self.dim * self.n_sites

    @property
    def n_faces(self) -> int:
        return self.n_sites if self.dim == 2 else 3 * self.n_sites

    @property
    def face_orientations(self) -> int:
        return 1 if self.dim == 2 else 3

    # -- site arithmetic ---------------------------------------------------

    def site_index(self, coords) -> np.ndarray:
        """Flat site index of (wrapped) integer coordinates, shape (..., dim)."""
        c = np.mod(np.asarray(coords, dtype=np.int64), self.extent)
        idx = np.zeros(c.shape[:-1], dtype=np.int64)
        stride = 1
        for ax, n in enumerate(self.extent):
            idx += c[..., ax] * stride
            stride *= n
        return idx

    def site_coords(self, site) -> np.ndarray:
        s = np.asarray(site, dtype=np.int64)
        if np.any((s < 0) | (s >= self.n_sites)):
            raise IndexError("site index out of range")
        out = np.empty(s.shape + (self.dim,), dtype=np.int64)
        for ax, n in enumerate(self.extent):
            out[..., ax] = s % n
            s = s // n
        return out

    def shift(self, site, axis: int, step: int = 1) -> np.ndarray:
        c = self.site_coords(site)
        c[..., axis] += step
        return self.site_index(c)

    # -- links ---------------------------------------------------------------

    def encode_link(self, coords, axis) -> np.ndarray:
        axis = np.asarray(axis, dtype=np.int64)
        if np.any((axis < 0) | (axis >= self.dim)):
            raise IndexError("link axis out of range")
        return self.dim * self.site_index(coords) + axis

    def decode_link(self, link):
        """Return ``(coords, axis)`` for link ids."""
        link = np.asarray(link, dtype=np.int64)
        if np.any((link < 0) | (link >= self.n_links)):
            raise IndexError("link id out of range")
        return self.site_coords(link // self.dim), link % self.dim

    def enumerate_links(self) -> np.ndarray:
        return np.arange(self.n_links, dtype=np.int64)

    @cached_property
    def link_midpoints(self) -> np.ndarray:
        """Midpoint coordinates of every link, shape (n_links, dim)."""
        coords, axis = self.decode_link(self.enumerate_links())
        mid = coords.astype(float)
        mid[np.arange(self.n_links), axis] += 0.5
        return mid

    # -- faces ---------------------------------------------------------------

    def encode_face(self, coords, normal=None) -> np.ndarray:
        site = self.site_index(coords)
        if self.dim == 2:
            if normal not in (None, 0, 2):
                raise IndexError("2D faces have a single orientation")
            return site
        normal = np.asarray(normal, dtype=np.int64)
        if np.any((normal < 0) | (normal > 2)):
            raise IndexError("face normal out of range")
        return 3 * site + normal

    def decode_face(self, face):
        """Return ``(coords, normal)``; the normal is 2 (z) for every 2D face."""
        face = np.asarray(face, dtype=np.int64)
        if np.any((face < 0) | (face >= self.n_faces)):
            raise IndexError("face id out of range")
        if self.dim == 2:
            return self.site_coords(face), np.full(face.shape, 2, dtype=np.int64)
        return self.site_coords(face // 3), face % 3

    def enumerate_faces(self) -> np.ndarray:
        return np.arange(self.n_faces, dtype=np.int64)

    # -- incidence -----------------------------------------------------------

    @cached_property
    def face_incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """Links and signs bounding every face, each of shape (n_faces, 4)."""
        spans = _SPAN_2D if self.dim == 2 else _SPAN_3D
        sites = np.arange(self.n_sites, dtype=np.int64)
        coords = self.site_coords(sites)
        links = np.empty((self.n_sites, len(spans), 4), dtype=np.int64)
        for o, (a, b) in enumerate(spans):
            ca = coords.copy()
            ca[:, a] += 1
            cb = coords.copy()
            cb[:, b] += 1
            links[:, o, 0] = self.dim * sites + a
            links[:, o, 1] = self.dim * self.site_index(ca) + b
            links[:, o, 2] = self.dim * self.site_index(cb) + a
            links[:, o, 3] = self.dim * sites + b
        signs = np.broadcast_to(np.array([1, 1, -1, -1], dtype=np.int64), links.shape)
        return links.reshape(-1, 4), np.ascontiguousarray(signs.reshape(-1, 4))

    @cached_property
    def link_incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """Faces and signs touching every link, shape (n_links, 2 or 4)."""
        links, signs = self.face_incidence
        per_link = 2 if self.dim == 2 else 4
        flat_links = links.ravel()
        flat_faces = np.repeat(np.arange(self.n_faces, dtype=np.int64), 4)
        order = np.lexsort((flat_faces, flat_links))
        counts = np.bincount(flat_links, minlength=self.n_links)
        assert np.all(counts == per_link)
        faces = flat_faces[order].reshape(self.n_links, per_link)
        fsigns = signs.ravel()[order].reshape(self.n_links, per_link)
        return faces, fsigns

    def links_of_face(self, face: int) -> list[tuple[int, int]]:
        face = int(face)
        if not 0 <= face < self.n_faces:
            raise IndexError(f"face id {face} out of range")
        links, signs = self.face_incidence
        return [(int(l), int(s)) for l, s in zip(links[face], signs[face])]

    def faces_of_link(self, link: int) -> list[tuple[int, int]]:
        link = int(link)
        if not 0 <= link < self.n_links:
            raise IndexError(f"link id {link} out of range")
        faces, signs = self.link_incidence
        return [(int(f), int(s)) for f, s in zip(faces[link], signs[link])]

    def plaquette_links(self, coords) -> np.ndarray:
        """The four links bounding the z-normal plaquette with lower corner ``coords``."""
        c = np.asarray(coords, dtype=np.int64)
        if self.dim == 2:
            face = self.encode_face(c)
        else:
            face = self.encode_face(c, 2)
        return self.face_incidence[0][face].copy()
