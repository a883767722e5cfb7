"""The three geometries: quadrant disks, point particles and rough interfaces.

Every builder is a pure function from a scene description to a
:class:`MaterialMap`.  Links are assigned by their midpoint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice
from .materials import VACUUM, DielectricModel, MaterialMap

# Rotation angles are snapped to this resolution after reduction modulo pi, so
# that theta and theta + pi produce the same floating point angle.
ANGLE_QUANTUM = math.pi / 2**20
CLEARANCE = 2
# midpoints closer than this (in quarter turns) to a quadrant line lie on it
BOUNDARY_TOL = 1e-9

log = logging.getLogger(__name__)


def canonical_angle(theta: float) -> float:
    k = round((float(theta) % math.pi) / ANGLE_QUANTUM) % 2**20
    return k * ANGLE_QUANTUM


class SceneError(ValueError):
    pass


# --------------------------------------------------------------------- disks


@dataclass(frozen=True)
class DiskPairScene:
    """Two coaxial solid disks split into quadrants of alternating material.

    The lower disk is fixed; the upper one is rotated by ``theta`` about the
    common axis, which runs along z through the box centre.  The quadrant
    pattern has period pi, so ``theta`` is stored modulo pi.
    """

    extent: tuple[int, int, int]
    diameter: float
    thickness: int = 2
    gap: int = 2
    eps_a: DielectricModel = field(default_factory=lambda: DielectricModel.constant(5.0))
    eps_b: DielectricModel = field(default_factory=lambda: DielectricModel.constant(10.0))
    theta: float = 0.0

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extent)
        if len(ext) != 3:
            raise SceneError("disk scenes live in three dimensions")
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "theta", canonical_angle(self.theta))
        if self.diameter <= 0 or self.thickness < 1:
            raise SceneError("disk diameter and thickness must be positive")
        if self.gap < 1:
            raise SceneError(f"disks overlap: gap {self.gap} < 1")
        r = self.diameter / 2
        if r + CLEARANCE > min(ext[0], ext[1]) / 2:
            raise SceneError(f"disk of diameter {self.diameter} does not fit laterally in {ext}")
        if self.stack_height + 2 * CLEARANCE > ext[2]:
            raise SceneError(f"disk stack of height {self.stack_height} does not fit in {ext}")

    @property
    def stack_height(self) -> int:
        return 2 * self.thickness + self.gap

    @property
    def centre(self) -> tuple[float, float]:
        return self.extent[0] / 2, self.extent[1] / 2

    @property
    def slabs(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Half-open z ranges of the lower and upper disk."""
        z0 = (self.extent[2] - self.stack_height) // 2
        z1 = z0 + self.thickness + self.gap
        return (z0, z0 + self.thickness), (z1, z1 + self.thickness)

    def rotated(self, theta: float) -> "DiskPairScene":
        return DiskPairScene(self.extent, self.diameter, self.thickness, self.gap,
                             self.eps_a, self.eps_b, theta)

    def to_dict(self) -> dict:
        return {
            "extent": list(self.extent), "diameter": self.diameter, "thickness": self.thickness,
            "gap": self.gap, "eps_a": self.eps_a.to_dict(), "eps_b": self.eps_b.to_dict(),
            "theta": self.theta,
        }


def _disk_labels(scene: DiskPairScene, mid: np.ndarray, slab, theta: float) -> np.ndarray:
    """0 outside the disk, 1 for quadrant-a links, 2 for quadrant-b links, 3 on a quadrant boundary."""
    cx, cy = scene.centre
    dx, dy = mid[:, 0] - cx, mid[:, 1] - cy
    inside = (dx * dx + dy * dy <= (scene.diameter / 2) ** 2) & (mid[:, 2] >= slab[0]) & (mid[:, 2] < slab[1])
    t = (np.arctan2(dy, dx) - theta) / (math.pi / 2)
    quadrant = np.floor(t).astype(np.int64) % 2
    # a midpoint exactly on a dividing line (or on the axis) belongs to neither
    # side; giving it to one would break the mirror symmetry of the pair
    on_line = (np.abs(t - np.round(t)) < BOUNDARY_TOL) | ((dx == 0) & (dy == 0))
    return np.where(inside, np.where(on_line, 3, 1 + quadrant), 0)


def boundary_model(a: DielectricModel, b: DielectricModel) -> DielectricModel | None:
    """Mean of two models when it is again a model of the same family."""
    if a.kind == b.kind == "constant":
        return DielectricModel.constant(0.5 * (a.eps + b.eps))
    if a.kind == b.kind == "single_pole" and a.omega0 == b.omega0:
        return DielectricModel.single_pole(0.5 * (a.chi + b.chi), a.omega0)
    return None


def _stamp_disks(scene: DiskPairScene, lat: Lattice, which: tuple[int, ...]) -> MaterialMap:
    if lat.extent != scene.extent:
        raise SceneError(f"scene box {scene.extent} does not match lattice {lat.extent}")
    mid = lat.link_midpoints
    labels = np.zeros(lat.n_links, dtype=np.int64)
    thetas = (0.0, scene.theta)
    for i in which:
        lab = _disk_labels(scene, mid, scene.slabs[i], thetas[i])
        labels = np.where(lab > 0, lab, labels)
    mean = boundary_model(scene.eps_a, scene.eps_b)
    if mean is None:
        log.warning("no mean of %s and %s; boundary links go to quadrant a", scene.eps_a, scene.eps_b)
        mean = scene.eps_a
    models = (VACUUM, scene.eps_a, scene.eps_b, mean)
    if scene.eps_a == scene.eps_b:
        labels[labels > 1] = 1
    return MaterialMap(lat, labels.astype(np.int32), models)._compact()


def build_disk_pair(scene: DiskPairScene, lat: Lattice) -> MaterialMap:
    """Both disks, the upper one rotated by ``scene.theta``."""
    return _stamp_disks(scene, lat, (0, 1))


def build_single_disk(scene: DiskPairScene, lat: Lattice) -> MaterialMap:
    """Only the rotating (upper) disk, for the self-energy run."""
    return _stamp_disks(scene, lat, (1,))


# ----------------------------------------------------------------- particles


@dataclass(frozen=True)
class ParticleScene:
    """Point particles on a 2D lattice; each occupies the four links of one plaquette."""

    extent: tuple[int, int]
    positions: tuple = ()
    model: DielectricModel = field(default_factory=lambda: DielectricModel.constant(8.0))

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extent)
        if len(ext) != 2:
            raise SceneError("particle scenes live in two dimensions")
        pos = tuple(tuple(int(v) % e for v, e in zip(p, ext)) for p in self.positions)
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "positions", pos)
        lat = Lattice(ext)
        seen: set[int] = set()
        for p in pos:
            links = set(lat.plaquette_links(p).tolist())
            if links & seen:
                raise SceneError(f"particle at {p} overlaps another particle")
            seen |= links


def particle_links(lat: Lattice, position) -> np.ndarray:
    return np.sort(lat.plaquette_links(position))


def build_particles(scene: ParticleScene, lat: Lattice) -> MaterialMap:
    if lat.extent != scene.extent:
        raise SceneError(f"scene box {scene.extent} does not match lattice {lat.extent}")
    m = MaterialMap.vacuum(lat)
    for p in scene.positions:
        m = m.assign(particle_links(lat, p), scene.model)
    return m


# ------------------------------------------------------------ rough surfaces


@dataclass(frozen=True, eq=False)
class RoughSurfaceScene:
    """Solid-on-solid interface: column ``x`` is filled for ``y < heights[x]``."""

    extent: tuple[int, int]
    heights: np.ndarray
    model: DielectricModel = field(default_factory=lambda: DielectricModel.constant(8.0))
    fill: int = 0
    seed: int | None = None

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extent)
        h = np.array(self.heights, dtype=np.int64)
        if len(ext) != 2 or h.shape != (ext[0],):
            raise SceneError("need one height per column of a 2D box")
        if h.min() < 1 or h.max() > ext[1] - 1:
            raise SceneError("interface leaves the box")
        h.setflags(write=False)
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "heights", h)

    @classmethod
    def flat(cls, L: int, fill: int | None = None, model: DielectricModel | None = None):
        fill = L // 2 if fill is None else fill
        model = DielectricModel.constant(8.0) if model is None else model
        return cls((L, L), np.full(L, fill), model, fill)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(np.concatenate([[self.heights[-1]], self.heights]))

    @property
    def mean_height(self) -> float:
        return float(self.heights.mean())

    def to_dict(self) -> dict:
        return {"extent": list(self.extent), "fill": self.fill, "seed": self.seed,
                "model": self.model.to_dict(), "heights": self.heights.tolist()}


def surface_from_steps(steps, fill: int, model: DielectricModel | None = None, seed=None) -> RoughSurfaceScene:
    steps = np.asarray(steps, dtype=np.int64)
    L = len(steps)
    if not np.all(np.abs(steps) == 1):
        raise SceneError("steps must be +1 or -1")
    if steps.sum() != 0:
        raise SceneError("steps must sum to zero for periodic closure")
    model = DielectricModel.constant(8.0) if model is None else model
    return RoughSurfaceScene((L, L), fill + np.cumsum(steps), model, fill, seed)


def balanced_steps(L: int, rng: np.random.Generator) -> np.ndarray:
    if L % 2:
        raise SceneError(f"rough surfaces need an even extent, got {L}")
    return rng.permutation(np.repeat(np.array([1, -1], dtype=np.int64), L // 2))


def generate_rough_surface(L: int, seed: int, fill: int | None = None,
                           model: DielectricModel | None = None, negate: bool = False) -> RoughSurfaceScene:
    """Random-walk bridge from a shuffled sequence of L/2 up and L/2 down steps.

    ``negate`` mirrors the walk (same distribution), used for antithetic pairs.
    """
    if L % 2:
        raise SceneError(f"rough surfaces need an even extent, got {L}")
    steps = balanced_steps(L, np.random.default_rng(seed))
    if negate:
        steps = -steps
    return surface_from_steps(steps, L // 2 if fill is None else fill, model, seed)


def build_surface(scene: RoughSurfaceScene, lat: Lattice) -> MaterialMap:
    if lat.extent != scene.extent:
        raise SceneError(f"scene box {scene.extent} does not match lattice {lat.extent}")
    mid = lat.link_midpoints
    col = np.floor(mid[:, 0]).astype(np.int64) % scene.extent[0]
    below = mid[:, 1] < scene.heights[col]
    return MaterialMap.vacuum(lat).assign(np.flatnonzero(below), scene.model)


def probe_row(scene: RoughSurfaceScene, r: float, column: int | None = None) -> tuple[int, int, float]:
    """Lower-left corner of the probe plaquette at height ``r`` over the local surface.

    The height is measured from the top of the column under the plaquette
    centre to the plaquette centre, and rounded to the lattice; the actual
    height is returned as the third entry.
    """
    L, H = scene.extent
    x0 = L // 2 if column is None else int(column) % L
    h = int(scene.heights[x0])
    y0 = h + int(math.floor(r))
    actual = y0 + 0.5 - h
    return x0, y0, actual


def place_probe_particle(scene: RoughSurfaceScene, lat: Lattice, r: float, model: DielectricModel,
                         column: int | None = None, base: MaterialMap | None = None) -> MaterialMap:
    """Surface plus a probe particle at height ``r`` above the interface."""
    links = probe_links(scene, lat, r, column)
    base = build_surface(scene, lat) if base is None else base
    return base.assign(links, model)


def probe_links(scene: RoughSurfaceScene, lat: Lattice, r: float, column: int | None = None) -> np.ndarray:
    L, H = scene.extent
    if r < 2 or r > H - scene.heights.max() - 2:
        raise SceneError(f"probe height {r} outside [2, box top - 2]")
    x0, y0, _ = probe_row(scene, r, column)
    links = particle_links(lat, (x0, y0))
    mid = lat.link_midpoints[links]
    col = np.floor(mid[:, 0]).astype(np.int64) % L
    if np.any(mid[:, 1] < scene.heights[col]):
        raise SceneError(f"probe at height {r} intersects the interface material")
    return links


def geometric_ladder(r_min: float, r_max: float, ratio: float = math.sqrt(2)) -> np.ndarray:
    """``r_min * ratio**j`` up to ``r_max`` (inclusive within round-off)."""
    if not (0 < r_min <= r_max) or ratio <= 1:
        raise ValueError("need 0 < r_min <= r_max and ratio > 1")
    n = int(math.floor(math.log(r_max / r_min) / math.log(ratio) + 1e-9)) + 1
    return r_min * ratio ** np.arange(n)
