import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from casimir_lattice.lattice import Lattice

extents2 = st.tuples(st.integers(3, 9), st.integers(3, 9))
extents3 = st.tuples(st.integers(3, 6), st.integers(3, 6), st.integers(3, 6))


def test_counts_2d_and_3d():
    lat = Lattice.square(5)
    assert (lat.dim, lat.n_sites, lat.n_links, lat.n_faces) == (2, 25, 50, 25)
    lat = Lattice.cube(4)
    assert (lat.dim, lat.n_sites, lat.n_links, lat.n_faces) == (3, 64, 192, 192)


@pytest.mark.parametrize("extent", [(2, 5), (5,), (4, 4, 4, 4), (3, 3, 2)])
def test_rejects_bad_extent(extent):
    with pytest.raises(ValueError):
        Lattice(extent)


def test_small_cube_is_allowed():
    assert Lattice.cube(3).n_links == 81


def test_site_numbering_x_fastest():
    lat = Lattice((4, 5, 6))
    assert lat.site_index([1, 0, 0]) == 1
    assert lat.site_index([0, 1, 0]) == 4
    assert lat.site_index([0, 0, 1]) == 20
    assert lat.site_index([4, 5, 6]) == 0  # periodic wrap
    assert lat.site_index([-1, 0, 0]) == 3


@given(extents2 | extents3, st.data())
def test_link_and_face_roundtrip(extent, data):
    lat = Lattice(extent)
    link = data.draw(st.integers(0, lat.n_links - 1))
    coords, axis = lat.decode_link(link)
    assert lat.encode_link(coords, axis) == link
    face = data.draw(st.integers(0, lat.n_faces - 1))
    coords, normal = lat.decode_face(face)
    assert lat.encode_face(coords, None if lat.dim == 2 else normal) == face


def test_index_errors():
    lat = Lattice.square(4)
    with pytest.raises(IndexError):
        lat.decode_link(lat.n_links)
    with pytest.raises(IndexError):
        lat.faces_of_link(-1)
    with pytest.raises(IndexError):
        lat.links_of_face(lat.n_faces)
    with pytest.raises(IndexError):
        lat.encode_link([0, 0], 2)


def test_circulation_signs_3d():
    lat = Lattice.cube(4)
    # z-normal face at the origin: +Ex(0) + Ey(x) - Ex(y) - Ey(0)
    face = lat.encode_face([0, 0, 0], 2)
    expect = [
        (int(lat.encode_link([0, 0, 0], 0)), 1),
        (int(lat.encode_link([1, 0, 0], 1)), 1),
        (int(lat.encode_link([0, 1, 0], 0)), -1),
        (int(lat.encode_link([0, 0, 0], 1)), -1),
    ]
    assert lat.links_of_face(face) == expect


@given(extents2 | extents3)
def test_incidence_is_consistent(extent):
    lat = Lattice(extent)
    faces, fsigns = lat.link_incidence
    assert faces.shape == (lat.n_links, 2 if lat.dim == 2 else 4)
    links, lsigns = lat.face_incidence
    for link in range(0, lat.n_links, max(1, lat.n_links // 17)):
        for f, s in lat.faces_of_link(link):
            assert (link, s) in lat.links_of_face(f)
    # every face boundary has two + and two - links
    assert np.all(lsigns.sum(axis=1) == 0)


def test_midpoints():
    lat = Lattice.square(4)
    mid = lat.link_midpoints
    assert np.allclose(mid[lat.encode_link([2, 3], 0)], [2.5, 3.0])
    assert np.allclose(mid[lat.encode_link([2, 3], 1)], [2.0, 3.5])


def test_plaquette_links():
    lat = Lattice.square(6)
    links = lat.plaquette_links((2, 3))
    assert sorted(links.tolist()) == sorted(l for l, _ in lat.links_of_face(lat.encode_face((2, 3))))
