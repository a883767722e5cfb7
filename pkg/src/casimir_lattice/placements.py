"""Free energies of many small objects inserted into one background.

The background is factorized once per frequency with every candidate
placement's rows kept out of the bulk.  Each placement is then a small
perturbation inside the retained block, and its free energy

    E(p) = int d omega / 2 pi  [ln det(D_bg + Delta_p) - ln det D_bg]

is evaluated from the Schur complement reduced onto the rows it touches.
Differences ``E(p) - E(q)`` are interaction energies.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice
from .linalg import SchurPlan, analyze_bulk, dense_cholesky_logdet, reduce_to_subset, schur_complement
from .linalg.factor import NotPositiveDefiniteError
from .materials import DielectricModel, MaterialMap
from .operators import dof_coordinates, dofs_touching_links, local_delta, operator_pattern

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Placement:
    """Links that take ``model`` when the object is inserted."""

    links: np.ndarray
    model: DielectricModel

    def __post_init__(self):
        links = np.unique(np.asarray(self.links, dtype=np.int64))
        links.setflags(write=False)
        object.__setattr__(self, "links", links)


class PlacementEngine:
    """Per-node log-determinant shifts for a fixed family of placements.

    Parameters
    ----------
    background : MaterialMap
    placements : dict
        Key to :class:`Placement`.  Keys are kept in insertion order.
    kind : "DG" or "DA"
    ordering : fill-reducing ordering of the bulk ("amd", "nd", ...)
    """

    def __init__(self, background: MaterialMap, placements: dict, kind: str = "DG",
                 ordering: str = "amd", c: float = 1.0):
        if not placements:
            raise ValueError("need at least one placement")
        self.background = background
        self.lattice: Lattice = background.lattice
        self.kind = kind
        self.c = c
        self.ordering = ordering
        self.keys = list(placements)
        self.placements = dict(placements)
        self.pattern = operator_pattern(self.lattice, kind)
        subsets = {k: dofs_touching_links(self.lattice, kind, p.links) for k, p in self.placements.items()}
        self.plan = SchurPlan.from_subsets(self.pattern.n, subsets)
        self._local = {k: self.plan.local(v) for k, v in subsets.items()}
        self._dofs = subsets
        self._symbolic = None

    @property
    def retained_size(self) -> int:
        return self.plan.size

    def symbolic(self):
        if self._symbolic is None:
            A = self.pattern.assemble(self.background, 1.0, self.c)
            coords = dof_coordinates(self.lattice, self.kind) if self.ordering == "nd" else None
            self._symbolic = analyze_bulk(A, self.plan, ordering=self.ordering, coords=coords)
        return self._symbolic

    def node_values(self, omega: float, context: str = "") -> np.ndarray:
        """``ln det(S_T + Delta_T) - ln det S_T`` for every placement, in key order."""
        A = self.pattern.assemble(self.background, omega, self.c)
        _, S = schur_complement(A, self.plan, symbolic=self.symbolic(), context=context)
        eps_bg = self.background.epsilon(omega)
        out = np.empty(len(self.keys))
        cache: dict[tuple, tuple[np.ndarray, float]] = {}
        for i, key in enumerate(self.keys):
            p = self.placements[key]
            dofs, block = local_delta(self.lattice, self.kind, p.links, eps_bg[p.links],
                                      p.model.epsilon(omega), omega, self.c)
            t = self._local[key]
            tk = tuple(t.tolist())
            if tk not in cache:
                seff = reduce_to_subset(S, t)
                cache[tk] = (seff, dense_cholesky_logdet(seff))
            seff, ld0 = cache[tk]
            try:
                out[i] = dense_cholesky_logdet(seff + block) - ld0
            except NotPositiveDefiniteError as err:
                raise NotPositiveDefiniteError(err.pivot, err.value, f"placement {key!r} {context}".strip()) from None
        return out


def evaluate_nodes(engine: PlacementEngine, grid, runner=None, prefix: str = "") -> tuple[np.ndarray, list[float]]:
    """Node-by-placement table of shifts and per-node wall times."""
    from .checkpoint import run_nodes

    def work(k):
        t = time.perf_counter()
        v = engine.node_values(float(grid.omega[k]), context=f"node {k}")
        return {"values": v.tolist(), "seconds": time.perf_counter() - t}

    engine.symbolic()
    results = run_nodes([f"{prefix}node{k}" for k in range(grid.n_nodes)], [
        (lambda k=k: work(k)) for k in range(grid.n_nodes)], runner)
    table = np.array([r["values"] for r in results], dtype=float)
    return table, [r["seconds"] for r in results]
