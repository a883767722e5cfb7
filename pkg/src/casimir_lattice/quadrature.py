"""Frequency integration of log-determinant differences.

The integral over imaginary frequency ``omega in (0, inf)`` is mapped to
``z in (0, 1)`` with ``omega = alpha * z / (1 - z)`` and evaluated with
Gauss-Legendre nodes.  The free energy difference of two configurations is

    U = sum_k  w_k * J_k / (2 pi) * [ln det D1(omega_k) - ln det D2(omega_k)]

with ``J_k = alpha / (1 - z_k)**2``.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


def gauss_legendre(n: int, tol: float = 1e-14, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on (-1, 1) by Newton iteration on P_n."""
    if n < 1:
        raise ValueError("need at least one node")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(2, n + 1):
            p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
        if n == 1:
            p0, p1 = np.ones_like(x), x.copy()
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    else:
        raise RuntimeError("Legendre root iteration did not converge")
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    if n == 1:
        p0, p1 = np.ones_like(x), x.copy()
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Gauss-Legendre nodes on (0, 1) mapped to imaginary frequencies."""

    alpha: float
    n_nodes: int
    z: np.ndarray
    weights: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.alpha * self.z / (1.0 - self.z)

    @property
    def jacobian(self) -> np.ndarray:
        return self.alpha / (1.0 - self.z) ** 2

    @property
    def measure(self) -> np.ndarray:
        """Weight of each node in ``int d omega / (2 pi)``."""
        return self.weights * self.jacobian / (2.0 * np.pi)

    def integrate(self, values) -> float:
        """``sum_k w_k J_k f_k / 2pi`` in fixed node order."""
        v = np.asarray(values, dtype=float)
        if v.shape[0] != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} node values, got {v.shape[0]}")
        terms = self.measure * v if v.ndim == 1 else self.measure[:, None] * v
        return terms.sum(axis=0) if v.ndim > 1 else float(math.fsum(terms))

    def integrate_z(self, f) -> float:
        """``int_0^1 f(z) dz`` with the raw nodes (no frequency mapping)."""
        return float(np.sum(self.weights * f(self.z)))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n_nodes": self.n_nodes}


def build_grid(alpha: float, n_nodes: int) -> FrequencyGrid:
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be a positive finite frequency, got {alpha}")
    if int(n_nodes) != n_nodes or n_nodes < 2:
        raise ValueError(f"need at least 2 quadrature nodes, got {n_nodes}")
    x, w = gauss_legendre(int(n_nodes))
    return FrequencyGrid(float(alpha), int(n_nodes), 0.5 * (x + 1.0), 0.5 * w)


def select_alpha(separation: float | None, omega0: float | None = None, c: float = 1.0) -> float:
    """Frequency scale putting the integrand's main features near ``z = 1/2``.

    ``c / separation`` is the inverse light-travel time across the gap; a
    dispersive material with pole ``omega0`` below that scale sets it instead.
    """
    scales = []
    if separation is not None and separation > 0:
        scales.append(c / separation)
    if omega0 is not None and math.isfinite(omega0) and omega0 > 0:
        scales.append(omega0)
    if not scales:
        warnings.warn("no separation or pole frequency available; using alpha = c", RuntimeWarning, stacklevel=2)
        return float(c)
    return float(min(scales))


def combine(grid: FrequencyGrid, logdet_1, logdet_2) -> float:
    """Free energy difference from per-node log-determinants of two configurations."""
    d = np.asarray(logdet_1, dtype=float) - np.asarray(logdet_2, dtype=float)
    return grid.integrate(d)


def write_node_dump(path, grid: FrequencyGrid, differences, label: str = "logdet_diff") -> None:
    """CSV with one row per node: index, z, omega, weight, difference."""
    diffs = np.asarray(differences, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write(f"# alpha={float(grid.alpha)!r}\n# n_nodes={grid.n_nodes}\n")
        w = csv.writer(fh)
        w.writerow(["node", "z", "omega", "measure", label])
        for k in range(grid.n_nodes):
            w.writerow([k] + [repr(float(v)) for v in (grid.z[k], grid.omega[k], grid.measure[k], diffs[k])])


def free_energy_difference(cfg1, cfg2, grid: FrequencyGrid, kind: str = "DG", c: float = 1.0,
                           ordering: str = "amd", runner=None, dump=None, key: str = "fed") -> float:
    """``int d omega / 2 pi [ln det D1 - ln det D2]`` through one bulk factorization per node.

    The rows touched by links on which the two maps differ are retained; the
    rest (identical in both operators) is factorized once and both
    log-determinant differences come from the two small Schur complements.
    The computation is symmetric in its arguments, so swapping them flips
    the sign exactly.
    """
    from .checkpoint import run_nodes
    from .linalg import SchurPlan, analyze_bulk, dense_cholesky_logdet, schur_complement
    from .linalg.factor import NotPositiveDefiniteError
    from .operators import dof_coordinates, dofs_touching_links, operator_pattern

    if cfg1.lattice != cfg2.lattice:
        raise ValueError("configurations live on different lattices")
    links = cfg1.differing_links(cfg2)
    if len(links) == 0:
        return 0.0
    lat = cfg1.lattice
    pattern = operator_pattern(lat, kind)
    plan = SchurPlan(pattern.n, dofs_touching_links(lat, kind, links))
    # both operators share the bulk; factorize it from the map that sorts first
    # so the result does not depend on argument order
    first, second = (cfg1, cfg2) if _order_key(cfg1) <= _order_key(cfg2) else (cfg2, cfg1)
    sign = 1.0 if first is cfg1 else -1.0
    coords = dof_coordinates(lat, kind) if ordering == "nd" else None
    sym = analyze_bulk(pattern.assemble(first, 1.0, c), plan, ordering=ordering, coords=coords)
    z = plan.retained

    def node(k):
        omega = float(grid.omega[k])
        try:
            A = pattern.assemble(first, omega, c)
            _, S1 = schur_complement(A, plan, symbolic=sym, context=f"node {k}")
            B = pattern.assemble(second, omega, c).matrix.tocsr()[z][:, z].toarray()
            Zb = A.matrix.tocsr()[z][:, z].toarray()
            S2 = S1 + (B - Zb)
            return dense_cholesky_logdet(S1) - dense_cholesky_logdet(S2)
        except NotPositiveDefiniteError as err:
            raise NotPositiveDefiniteError(err.pivot, err.value, f"node {k}, omega={omega:.6g}") from None

    d = np.array(run_nodes([f"{key}-node{k}" for k in range(grid.n_nodes)],
                           [(lambda k=k: node(k)) for k in range(grid.n_nodes)], runner))
    diffs = sign * d
    if dump is not None:
        write_node_dump(dump, grid, diffs)
    return grid.integrate(diffs)


def _order_key(m) -> bytes:
    return m.ids.tobytes() + repr([x.to_dict() for x in m.models]).encode()
