"""Measurement protocols: disk torque, particle-pair crossover, rough surfaces.

All energies are in lattice units with hbar = 1 and the lattice constant 1;
the speed of light ``c`` is a parameter (default 1).
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .checkpoint import Runner, run_nodes
from .lattice import Lattice
from .linalg import analyze, factorize
from .linalg.factor import NotPositiveDefiniteError
from .materials import DielectricModel, MaterialMap
from .operators import dof_coordinates, operator_pattern
from .placements import Placement, PlacementEngine, evaluate_nodes
from .quadrature import FrequencyGrid, build_grid, select_alpha
from .scenes import (
    DiskPairScene,
    RoughSurfaceScene,
    SceneError,
    build_disk_pair,
    build_single_disk,
    build_surface,
    canonical_angle,
    generate_rough_surface,
    geometric_ladder,
    particle_links,
    probe_links,
    probe_row,
)

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


# -------------------------------------------------------------- power laws


@dataclass(frozen=True)
class PowerLawResult:
    exponent: float
    amplitude: float
    stderr: float
    n_points: int
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "amplitude": self.amplitude, "stderr": self.stderr,
                "n_points": self.n_points, "window": list(self.window)}


def fit_power_law(r, y, window: tuple[float, float] | None = None) -> PowerLawResult:
    """Least-squares line through ``(ln r, ln |y|)`` restricted to ``window``.

    ``amplitude`` carries the common sign of ``y``; ``stderr`` is the standard
    error of the exponent from the residuals.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    if r.shape != y.shape or r.ndim != 1:
        raise ValueError("r and y must be 1D arrays of the same length")
    if window is None:
        window = (float(r.min()), float(r.max())) if len(r) else (0.0, 0.0)
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"degenerate fit window {window}")
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 3:
        raise ValueError(f"need at least 3 points in window {window}, got {int(sel.sum())}")
    rs, ys = r[sel], y[sel]
    if np.any(ys == 0) or not (np.all(ys > 0) or np.all(ys < 0)):
        raise ValueError("values change sign (or vanish) inside the fit window")
    fit = stats.linregress(np.log(rs), np.log(np.abs(ys)))
    sign = 1.0 if ys[0] > 0 else -1.0
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return PowerLawResult(float(fit.slope), sign * float(np.exp(fit.intercept)), stderr,
                          int(sel.sum()), (float(lo), float(hi)))


def default_window(r, r_min: float = 6.0, drop_last: int = 2) -> tuple[float, float]:
    """Exclude short distances and the last points (periodic images)."""
    r = np.sort(np.asarray(r, dtype=float))
    keep = r[r >= r_min]
    if drop_last:
        keep = keep[:-drop_last]
    if len(keep) < 1:
        raise ValueError("no points left in the default fit window")
    return float(keep[0]), float(keep[-1])


def local_slopes(r, y) -> np.ndarray:
    """Log-log slopes between neighbouring points."""
    r = np.asarray(r, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return np.diff(np.log(y)) / np.diff(np.log(r))


# --------------------------------------------------------------- statistics


class OnlineMoments:
    """Running mean and variance of vectors (Welford's update)."""

    def __init__(self, size: int):
        self.count = 0
        self.mean = np.zeros(size)
        self._m2 = np.zeros(size)

    def push(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != self.mean.shape:
            raise ValueError(f"expected {self.mean.shape}, got {x.shape}")
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        """Unbiased sample variance."""
        if self.count < 2:
            return np.full_like(self.mean, np.nan)
        return self._m2 / (self.count - 1)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.variance, 0.0))


# ------------------------------------------------------------ result types


def _write_csv(path, header, rows, meta: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


@dataclass
class TorqueCurve:
    """Interaction energy of the disk pair against the rotation angle.

    ``F_self`` and ``F_both`` are free energies relative to their value at
    the first angle, and ``U = F_both - F_self`` vanishes there.
    """

    angles: np.ndarray
    F_self: np.ndarray
    F_both: np.ndarray
    failed: list = field(default_factory=list)

    @property
    def U(self) -> np.ndarray:
        return self.F_both - self.F_self

    def torque(self) -> tuple[np.ndarray, np.ndarray]:
        """``-dU/dtheta`` by finite differences at the midpoints of adjacent angles."""
        a = np.asarray(self.angles)
        return 0.5 * (a[1:] + a[:-1]), -np.diff(self.U) / np.diff(a)

    def to_csv(self, path, meta=None) -> None:
        _write_csv(path, ["theta", "F_self", "F_both", "U"],
                   zip(self.angles, self.F_self, self.F_both, self.U), meta)


@dataclass
class SeparationCurve:
    """Pair energy against separation, zero at the reference separation."""

    r: np.ndarray
    U: np.ndarray
    omega0: float
    reference: float
    power: int = 5
    grid: FrequencyGrid | None = None

    @property
    def scaled(self) -> np.ndarray:
        """``-U r**power`` as plotted."""
        return -self.U * self.r ** self.power

    def fit(self, window=None) -> PowerLawResult:
        return fit_power_law(self.r, -self.U, window or default_window(self.r))

    def to_csv(self, path, meta=None) -> None:
        _write_csv(path, ["r", "U", "U_scaled"], zip(self.r, self.U, self.scaled), meta)


@dataclass
class RoughEnsembleResult:
    r: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    U_flat: np.ndarray
    count: int
    seeds: list
    failed: list = field(default_factory=list)

    @property
    def deltaU(self) -> np.ndarray:
        return self.mean - self.U_flat

    @property
    def stderr(self) -> np.ndarray:
        return self.sigma / math.sqrt(max(self.count, 1))

    def to_csv(self, path, meta=None) -> None:
        _write_csv(path, ["r", "mean", "sigma", "U_flat", "deltaU"],
                   zip(self.r, self.mean, self.sigma, self.U_flat, self.deltaU), meta)


# ------------------------------------------------------------------- torque


def _map_digest(m: MaterialMap) -> str:
    h = hashlib.sha1(m.ids.tobytes())
    h.update(repr([x.to_dict() for x in m.models]).encode())
    return h.hexdigest()[:16]


def full_logdets(m: MaterialMap, grid: FrequencyGrid, kind: str, symbolic, runner: Runner | None,
                 c: float = 1.0, label: str = "") -> tuple[np.ndarray, list[float]]:
    """``ln det D(omega_k)`` at every node with one full factorization each."""
    pattern = operator_pattern(m.lattice, kind)
    digest = _map_digest(m)

    def work(k):
        t = time.perf_counter()
        A = pattern.assemble(m, float(grid.omega[k]), c)
        f = factorize(A, symbolic=symbolic, context=f"{label} node {k}".strip())
        return {"logdet": f.logdet(), "seconds": time.perf_counter() - t}

    res = run_nodes([f"{kind}-{digest}-node{k}" for k in range(grid.n_nodes)],
                    [(lambda k=k: work(k)) for k in range(grid.n_nodes)], runner)
    return np.array([r["logdet"] for r in res]), [r["seconds"] for r in res]


def run_torque_sweep(scene: DiskPairScene, angles, grid: FrequencyGrid, kind: str = "DG",
                     ordering: str = "nd", runner: Runner | None = None, c: float = 1.0,
                     timings: dict | None = None) -> TorqueCurve:
    """Self-energy run plus pair run; interaction by subtraction.

    Angles whose maps coincide (theta and theta + pi) are factorized once.
    A failed angle is dropped and listed in ``failed``.
    """
    angles = np.asarray(angles, dtype=float)
    if len(angles) == 0:
        raise ValueError("need at least one angle")
    lat = Lattice(scene.extent)
    pattern = operator_pattern(lat, kind)
    coords = dof_coordinates(lat, kind) if ordering == "nd" else None
    A0 = pattern.assemble(MaterialMap.vacuum(lat), 1.0, c)
    symbolic = analyze(A0, ordering, coords=coords)
    log.info("torque sweep: %d unknowns, factor nnz %d", pattern.n, symbolic.nnz)
    timings = timings if timings is not None else {}
    F_self, F_both, kept, failed = [], [], [], []
    for theta in angles:
        sc = scene.rotated(theta)
        try:
            ld = []
            for name, builder in (("self", build_single_disk), ("both", build_disk_pair)):
                m = builder(sc, lat)
                vals, secs = full_logdets(m, grid, kind, symbolic, runner, c,
                                          label=f"theta={theta:.6g} {name}")
                timings[f"theta={theta!r}/{name}"] = secs
                ld.append(vals)
        except NotPositiveDefiniteError as err:
            log.error("angle %.6g failed: %s", theta, err)
            failed.append({"theta": float(theta), "error": str(err)})
            continue
        kept.append(theta)
        F_self.append(ld[0])
        F_both.append(ld[1])
    if not kept:
        raise RuntimeError("every angle of the torque sweep failed")
    F_self = np.array(F_self)
    F_both = np.array(F_both)
    # differences are taken node by node before integrating
    fs = np.array([grid.integrate(row - F_self[0]) for row in F_self])
    fb = np.array([grid.integrate(row - F_both[0]) for row in F_both])
    return TorqueCurve(np.array(kept), fs, fb, failed)


def default_angles(n: int = 8, full_turn: bool = False) -> np.ndarray:
    """``n`` equally spaced angles over [0, pi) (or [0, 2 pi))."""
    span = 2 * math.pi if full_turn else math.pi
    return np.arange(n) * (span / n)


# ---------------------------------------------------------------- crossover


def diagonal_offsets(L: int, r_min: float = 4.0, r_max: float | None = None,
                     ratio: float = SQRT2) -> np.ndarray:
    """Diagonal offsets ``k`` with ``k * sqrt(2)`` on a geometric ladder."""
    r_max = L / 5 if r_max is None else r_max
    ks = np.unique(np.maximum(np.round(geometric_ladder(r_min, r_max, ratio) / SQRT2), 2).astype(np.int64))
    return ks[ks < L // 2]


def particle_model(omega0: float | None, eps: float = 8.0) -> DielectricModel:
    """Constant ``eps`` when ``omega0`` is None or infinite, else a single pole with ``eps(0) = eps``."""
    if omega0 is None or math.isinf(omega0):
        return DielectricModel.constant(eps)
    return DielectricModel.single_pole(eps - 1.0, omega0)


def crossover_engine(L: int, model: DielectricModel, offsets, kind: str = "DG",
                     ordering: str = "amd", c: float = 1.0) -> PlacementEngine:
    """Particle 1 at the origin in the background; particle 2 at each diagonal offset."""
    lat = Lattice.square(L)
    bg = MaterialMap.vacuum(lat).assign(particle_links(lat, (0, 0)), model)
    placements = {int(k): Placement(particle_links(lat, (k, k)), model) for k in offsets}
    placements["ref"] = Placement(particle_links(lat, (L // 2, L // 2)), model)
    return PlacementEngine(bg, placements, kind, ordering, c)


def run_crossover_sweep(L: int, omega0_list, grid: FrequencyGrid | None = None, n_nodes: int = 20,
                        alpha: float | None = None, kind: str = "DG", ordering: str = "amd",
                        eps: float = 8.0, r_min: float = 4.0, r_max: float | None = None,
                        ratio: float = SQRT2, runner: Runner | None = None, c: float = 1.0,
                        timings: dict | None = None) -> dict:
    """One :class:`SeparationCurve` per pole frequency (None for a constant permittivity).

    For every frequency node a single factorization of the box, with the
    first particle fixed and every candidate position of the second kept in
    the retained block, gives the whole curve.
    """
    offsets = diagonal_offsets(L, r_min, r_max, ratio)
    r = offsets * SQRT2
    timings = timings if timings is not None else {}
    curves = {}
    for w0 in omega0_list:
        model = particle_model(w0, eps)
        g = grid
        if g is None:
            a = alpha if alpha is not None else select_alpha(
                math.sqrt(r[0] * r[-1]), model.omega0 if model.is_dispersive else None, c)
            g = build_grid(a, n_nodes)
        engine = crossover_engine(L, model, offsets, kind, ordering, c)
        table, secs = evaluate_nodes(engine, g, runner, prefix=f"cross-w0={w0!r}-a={g.alpha!r}-ng={g.n_nodes}-")
        timings[f"omega0={w0!r}"] = secs
        diff = table[:, :-1] - table[:, [-1]]
        U = g.integrate(diff)
        curves[w0] = SeparationCurve(r.copy(), np.asarray(U), math.inf if w0 is None else float(w0),
                                     float((L // 2) * SQRT2), grid=g)
    return curves


# --------------------------------------------------------------- roughness


def surface_engine(scene: RoughSurfaceScene, ladder, model: DielectricModel, kind: str = "DG",
                   ordering: str = "amd", c: float = 1.0, column: int | None = None):
    """Engine with probes at every ladder height and the reference height.

    Returns ``(engine, actual_heights, reference_height)``.
    """
    lat = Lattice(scene.extent)
    bg = build_surface(scene, lat)
    L, H = scene.extent
    x0 = L // 2 if column is None else column
    r_ref = (H - int(scene.heights[x0])) // 2
    placements, actual = {}, []
    for i, r in enumerate(ladder):
        placements[i] = Placement(probe_links(scene, lat, r, x0), model)
        actual.append(probe_row(scene, r, x0)[2])
    placements["ref"] = Placement(probe_links(scene, lat, r_ref, x0), model)
    return PlacementEngine(bg, placements, kind, ordering, c), np.array(actual), probe_row(scene, r_ref, x0)[2]


def surface_curve(scene: RoughSurfaceScene, ladder, grid: FrequencyGrid, model: DielectricModel,
                  kind: str = "DG", ordering: str = "amd", runner: Runner | None = None,
                  c: float = 1.0, prefix: str = "") -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Probe energy against height, zero at the reference height."""
    engine, actual, _ = surface_engine(scene, ladder, model, kind, ordering, c)
    table, secs = evaluate_nodes(engine, grid, runner, prefix=prefix)
    U = grid.integrate(table[:, :-1] - table[:, [-1]])
    return actual, np.asarray(U), secs


def realization_seeds(base_seed: int, count: int, antithetic: bool = True) -> list[tuple[int, bool]]:
    """``(seed, negate)`` per realization; antithetic pairs share a seed."""
    rng = np.random.default_rng(base_seed)
    if antithetic:
        pairs = rng.integers(0, 2**63 - 1, size=(count + 1) // 2)
        return [(int(pairs[i // 2]), bool(i % 2)) for i in range(count)]
    return [(int(s), False) for s in rng.integers(0, 2**63 - 1, size=count)]


def run_flat_baseline(L: int, ladder, grid: FrequencyGrid, model: DielectricModel | None = None,
                      probe: DielectricModel | None = None, kind: str = "DG", ordering: str = "amd",
                      runner: Runner | None = None, c: float = 1.0, fill: int | None = None):
    model = DielectricModel.constant(8.0) if model is None else model
    probe = model if probe is None else probe
    flat = RoughSurfaceScene.flat(L, fill, model)
    return surface_curve(flat, ladder, grid, probe, kind, ordering, runner, c, prefix="flat-")


def run_rough_ensemble(L: int, count: int, ladder, grid: FrequencyGrid, base_seed: int = 0,
                       model: DielectricModel | None = None, probe: DielectricModel | None = None,
                       kind: str = "DG", ordering: str = "amd", runner: Runner | None = None,
                       c: float = 1.0, antithetic: bool = True, fill: int | None = None,
                       on_realization=None, flat: tuple | None = None) -> RoughEnsembleResult:
    """Mean and spread of the probe energy over random surfaces, plus the flat baseline.

    ``on_realization(index, seed, negate, scene, r, U)`` is called after every
    successful realization (for persistence).  ``flat`` may pass a
    precomputed ``(r, U_flat)``.
    """
    if L % 2:
        raise SceneError(f"rough surfaces need an even extent, got {L}")
    if count < 2:
        raise ValueError("need at least two realizations")
    model = DielectricModel.constant(8.0) if model is None else model
    probe = model if probe is None else probe
    if flat is None:
        r_flat, U_flat, _ = run_flat_baseline(L, ladder, grid, model, probe, kind, ordering, runner, c, fill)
    else:
        r_flat, U_flat = flat
    acc = OnlineMoments(len(ladder))
    seeds = realization_seeds(base_seed, count, antithetic)
    used, failed = [], []
    for i, (seed, negate) in enumerate(seeds):
        try:
            scene = generate_rough_surface(L, seed, fill, model, negate=negate)
            r, U, _ = surface_curve(scene, ladder, grid, probe, kind, ordering, runner, c,
                                    prefix=f"rough-{seed}-{int(negate)}-")
        except (SceneError, NotPositiveDefiniteError) as err:
            log.warning("realization %d (seed %d) skipped: %s", i, seed, err)
            failed.append({"index": i, "seed": seed, "negate": negate, "error": str(err)})
            continue
        if not np.allclose(r, r_flat):
            raise RuntimeError("probe heights differ from the flat baseline")
        acc.push(U)
        used.append({"index": i, "seed": seed, "negate": negate})
        if on_realization is not None:
            on_realization(i, seed, negate, scene, r, U)
    return RoughEnsembleResult(np.asarray(r_flat), acc.mean, acc.std, np.asarray(U_flat), acc.count,
                               used, failed)
