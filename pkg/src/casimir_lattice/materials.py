"""Dielectric response at imaginary frequency and per-link material maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import Lattice


@dataclass(frozen=True)
class DielectricModel:
    """Permittivity model evaluated at imaginary frequency.

    ``kind`` is one of ``"vacuum"``, ``"constant"`` or ``"single_pole"``.  The
    single-pole form is ``1 + chi / (1 + omega**2 / omega0**2)``; an infinite
    ``omega0`` makes it frequency independent.
    """

    kind: str = "vacuum"
    eps: float = 1.0
    chi: float = 0.0
    omega0: float = math.inf

    def __post_init__(self):
        if self.kind == "vacuum":
            object.__setattr__(self, "eps", 1.0)
        elif self.kind == "constant":
            if not self.eps > 0:
                raise ValueError(f"constant permittivity must be positive, got {self.eps}")
        elif self.kind == "single_pole":
            if not self.chi >= 0:
                raise ValueError(f"susceptibility must be >= 0, got {self.chi}")
            if not self.omega0 > 0:
                raise ValueError(f"pole frequency must be > 0, got {self.omega0}")
        else:
            raise ValueError(f"unknown dielectric model kind {self.kind!r}")

    @classmethod
    def vacuum(cls) -> "DielectricModel":
        return cls("vacuum")

    @classmethod
    def constant(cls, eps: float) -> "DielectricModel":
        return cls("constant", eps=float(eps))

    @classmethod
    def single_pole(cls, chi: float, omega0: float) -> "DielectricModel":
        return cls("single_pole", chi=float(chi), omega0=float(omega0))

    @property
    def is_dispersive(self) -> bool:
        return self.kind == "single_pole" and math.isfinite(self.omega0) and self.chi > 0

    @property
    def static_eps(self) -> float:
        return self.epsilon(0.0)

    def epsilon(self, omega):
        """Permittivity at imaginary frequency ``omega`` (scalar or array)."""
        w = np.asarray(omega, dtype=float)
        if np.any(w < 0):
            raise ValueError("frequency must be non-negative")
        if self.kind == "single_pole":
            val = 1.0 + self.chi / (1.0 + (w / self.omega0) ** 2)
        else:
            val = np.full(w.shape, self.eps)
        return float(val) if val.ndim == 0 else val

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["eps"] = self.eps
        elif self.kind == "single_pole":
            d["chi"] = self.chi
            d["omega0"] = "inf" if math.isinf(self.omega0) else self.omega0
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DielectricModel":
        kind = d.get("kind", "vacuum")
        if kind == "constant":
            return cls.constant(float(d["eps"]))
        if kind == "single_pole":
            return cls.single_pole(float(d["chi"]), float(d["omega0"]))
        return cls.vacuum()


def eval_epsilon(model: DielectricModel, omega) -> float:
    return model.epsilon(omega)


VACUUM = DielectricModel.vacuum()


@dataclass(frozen=True, eq=False)
class MaterialMap:
    """Assignment of a dielectric model to every link of a lattice.

    ``ids[link]`` indexes into ``models``; entry 0 is always vacuum.
    """

    lattice: Lattice
    ids: np.ndarray = None
    models: tuple = (VACUUM,)

    def __post_init__(self):
        ids = self.ids
        if ids is None:
            ids = np.zeros(self.lattice.n_links, dtype=np.int32)
        ids = np.array(ids, dtype=np.int32)
        if ids.shape != (self.lattice.n_links,):
            raise ValueError("material map must assign exactly one model per link")
        if len(self.models) == 0 or self.models[0] != VACUUM:
            raise ValueError("model table must start with vacuum")
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.models)):
            raise ValueError("model id out of range")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "models", tuple(self.models))

    @classmethod
    def vacuum(cls, lattice: Lattice) -> "MaterialMap":
        return cls(lattice)

    def __eq__(self, other):
        if not isinstance(other, MaterialMap):
            return NotImplemented
        return self.lattice == other.lattice and np.array_equal(
            self.link_models(), other.link_models()
        )

    def link_models(self) -> np.ndarray:
        """Object array with the model of every link (for comparisons)."""
        table = np.empty(len(self.models), dtype=object)
        table[:] = self.models
        return table[self.ids]

    def model_id(self, model: DielectricModel) -> tuple["MaterialMap", int]:
        if model in self.models:
            return self, self.models.index(model)
        return MaterialMap(self.lattice, self.ids, self.models + (model,)), len(self.models)

    def epsilon(self, omega: float) -> np.ndarray:
        """Per-link permittivity at one frequency; each model is evaluated once."""
        values = np.array([m.epsilon(omega) for m in self.models], dtype=float)
        return values[self.ids]

    def assign(self, links, model: DielectricModel) -> "MaterialMap":
        """New map with ``links`` set to ``model``."""
        base, mid = self.model_id(model)
        ids = base.ids.copy()
        ids[np.asarray(links, dtype=np.int64)] = mid
        return MaterialMap(self.lattice, ids, base.models)._compact()

    def stamp(self, region: Callable[[np.ndarray], np.ndarray], model: DielectricModel):
        """Assign ``model`` to links whose midpoint satisfies ``region``.

        ``region`` receives midpoints of shape (n_links, dim) and returns a
        boolean mask.
        """
        mask = np.asarray(region(self.lattice.link_midpoints), dtype=bool)
        if mask.shape != (self.lattice.n_links,):
            raise ValueError("region predicate must return one flag per link")
        return self.assign(np.flatnonzero(mask), model)

    def differing_links(self, other: "MaterialMap") -> np.ndarray:
        """Links whose model differs between two maps on the same lattice."""
        if self.lattice != other.lattice:
            raise ValueError("material maps live on different lattices")
        return np.flatnonzero(self.link_models() != other.link_models())

    def has_dispersion(self) -> bool:
        used = set(np.unique(self.ids).tolist())
        return any(self.models[i].is_dispersive for i in used)

    def min_pole_frequency(self) -> float:
        used = np.unique(self.ids)
        poles = [self.models[i].omega0 for i in used if self.models[i].is_dispersive]
        return min(poles) if poles else math.inf

    def _compact(self) -> "MaterialMap":
        used = np.unique(self.ids)
        if len(used) == len(self.models):
            return self
        keep = [0] + [int(i) for i in used if i != 0]
        remap = np.zeros(len(self.models), dtype=np.int32)
        remap[keep] = np.arange(len(keep), dtype=np.int32)
        return MaterialMap(self.lattice, remap[self.ids], tuple(self.models[i] for i in keep))

    def to_dict(self) -> dict:
        return {
            "extent": list(self.lattice.extent),
            "models": [m.to_dict() for m in self.models],
            "counts": np.bincount(self.ids, minlength=len(self.models)).tolist(),
        }


def stamp_region(material_map: MaterialMap, region, model: DielectricModel) -> MaterialMap:
    return material_map.stamp(region, model)
