"""Run configuration files.

The format is INI (``key = value`` lines grouped in ``[section]`` blocks,
``#`` or ``;`` comments).  Lists are comma separated.  ``alpha = auto``
selects the frequency scale automatically; ``omega0`` may contain ``inf``
for a frequency independent particle.  Unknown sections or keys are errors,
so typos do not pass silently.

Example::

    [run]
    experiment = crossover2d
    seed = 1

    [lattice]
    extent = 256, 256

    [quadrature]
    n_nodes = 20
    alpha = auto

    [materials]
    eps = 8
    omega0 = inf, 0.003, 0.03
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

EXPERIMENTS = ("torque3d", "crossover2d", "rough2d", "flat2d")


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(";", ",").split(",") if x.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("auto", "none", "") else float(s)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


# field name -> (section, parser); the order here is the order written out
_SCHEMA = {
    "experiment": ("run", str),
    "seed": ("run", int),
    "threads": ("run", int),
    "out": ("run", str),
    "extent": ("lattice", _ints),
    "n_nodes": ("quadrature", int),
    "alpha": ("quadrature", _opt_float),
    "c": ("quadrature", float),
    "operator": ("quadrature", str),
    "ordering": ("quadrature", str),
    "eps": ("materials", float),
    "omega0": ("materials", _floats),
    "eps_a": ("materials", float),
    "eps_b": ("materials", float),
    "diameter": ("geometry", float),
    "thickness": ("geometry", int),
    "gap": ("geometry", int),
    "angles": ("geometry", _floats),
    "r_min": ("geometry", float),
    "r_max": ("geometry", _opt_float),
    "ratio": ("geometry", float),
    "fit_min": ("fit", _opt_float),
    "fit_max": ("fit", _opt_float),
    "realizations": ("ensemble", int),
    "fill": ("ensemble", _opt_float),
    "antithetic": ("ensemble", _bool),
}
REQUIRED = ("experiment", "extent", "n_nodes")


@dataclass
class RunConfig:
    """Every parameter of one run.  ``None`` means "derive automatically".

    ``eps`` is the static permittivity of particles and surfaces; a finite
    ``omega0`` turns it into a single pole with susceptibility ``eps - 1``.
    """

    experiment: str
    extent: tuple[int, ...]
    n_nodes: int
    seed: int = 0
    threads: int = 1
    out: str = "out"
    alpha: float | None = None
    c: float = 1.0
    operator: str = "DG"
    ordering: str = "auto"
    eps: float = 8.0
    omega0: tuple[float, ...] = (math.inf,)
    eps_a: float = 5.0
    eps_b: float = 10.0
    diameter: float = 16.0
    thickness: int = 2
    gap: int = 2
    angles: tuple[float, ...] = ()
    r_min: float = 4.0
    r_max: float | None = None
    ratio: float = math.sqrt(2.0)
    fit_min: float | None = None
    fit_max: float | None = None
    realizations: int = 100
    fill: float | None = None
    antithetic: bool = True
    resume: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.extent = tuple(int(e) for e in self.extent)
        self.omega0 = tuple(float(w) for w in self.omega0)
        self.angles = tuple(float(a) for a in self.angles)
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        dim = 3 if self.experiment == "torque3d" else 2
        if len(self.extent) != dim:
            raise ConfigError(f"{self.experiment} needs a {dim}D extent, got {self.extent}")
        if min(self.extent) < 3:
            raise ConfigError("every extent must be >= 3")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for name in ("c", "eps", "eps_a", "eps_b", "diameter", "r_min", "ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError("alpha must be positive (or auto)")
        if any(not w > 0 for w in self.omega0):
            raise ConfigError("omega0 values must be positive (inf allowed)")
        if self.operator not in ("DG", "DA"):
            raise ConfigError(f"operator must be DG or DA, got {self.operator!r}")
        if self.ordering not in ("auto", "amd", "nd", "natural"):
            raise ConfigError(f"unknown ordering {self.ordering!r}")
        if self.realizations < 2:
            raise ConfigError("realizations must be >= 2")
        if self.experiment in ("rough2d", "flat2d") and self.extent[0] % 2:
            raise ConfigError("rough surfaces need an even extent")

    @property
    def resolved_ordering(self) -> str:
        if self.ordering != "auto":
            return self.ordering
        return "nd" if len(self.extent) == 3 else "amd"

    # ------------------------------------------------------------ (de)serialization

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for name, (section, _) in _SCHEMA.items():
            if not parser.has_section(section):
                parser.add_section(section)
            parser.set(section, name, _fmt(getattr(self, name)))
        import io

        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_ini())

    @classmethod
    def from_ini(cls, text: str, source: str = "<string>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=source)
        except configparser.Error as err:
            raise ConfigError(f"{source}: {err}") from None
        known_sections = {s for s, _ in _SCHEMA.values()}
        for section in parser.sections():
            if section not in known_sections:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key in parser[section]:
                if key not in _SCHEMA or _SCHEMA[key][0] != section:
                    raise ConfigError(f"{source}: unknown key '{key}' in section [{section}]")
        values = {}
        for name, (section, parse) in _SCHEMA.items():
            if parser.has_option(section, name):
                raw = parser.get(section, name)
                try:
                    values[name] = parse(raw)
                except ValueError as err:
                    raise ConfigError(f"{source}: bad value for '{name}' in [{section}]: {err}") from None
        for name in REQUIRED:
            if name not in values:
                raise ConfigError(f"{source}: missing required key '{name}' in section [{_SCHEMA[name][0]}]")
        return cls(**values)

    @classmethod
    def read(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        return cls.from_ini(p.read_text(), str(p))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("resume")
        return {k: (list(v) if isinstance(v, tuple) else ("inf" if isinstance(v, float) and math.isinf(v) else v))
                for k, v in d.items()}

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def desk_config(experiment: str) -> RunConfig:
    """Scaled-down defaults that run on a workstation."""
    if experiment == "torque3d":
        return RunConfig("torque3d", (25, 25, 25), 8, diameter=16.0)
    if experiment == "crossover2d":
        return RunConfig("crossover2d", (256, 256), 20, omega0=(10.0, 0.3, 0.1, 0.03, 0.01, 0.003))
    if experiment in ("rough2d", "flat2d"):
        return RunConfig(experiment, (256, 256), 20, realizations=100)
    raise ConfigError(f"unknown experiment {experiment!r}")


def large_config(experiment: str) -> RunConfig:
    """Parameters of the original large runs (far beyond workstation scale)."""
    if experiment == "torque3d":
        return RunConfig("torque3d", (55, 55, 55), 8, diameter=36.0)
    if experiment == "crossover2d":
        return RunConfig("crossover2d", (2000, 2000), 20, omega0=(10.0, 0.3, 0.1, 0.03, 0.01, 0.003))
    if experiment in ("rough2d", "flat2d"):
        return RunConfig(experiment, (1000, 1000), 20, realizations=1000)
    raise ConfigError(f"unknown experiment {experiment!r}")
