"""Run configuration and the JSON instance format (map, potential, observable)."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dynamics import MarkovMap1D
from .errors import InvalidPotentialError, MapDefinitionError, ThermoformError
from .potential import Potential
from .symbolic import DEPTH_CAP


class ConfigError(ThermoformError, ValueError):
    pass


@dataclass
class RunConfig:
    map: dict
    potential: dict = field(default_factory=lambda: {"kind": "affine", "params": [0.0, 0.0]})
    observable: dict = field(default_factory=lambda: {"kind": "sin", "mode": 1})
    depth: int = 10
    depth_cap: int = DEPTH_CAP
    gamma: float = 0.9
    c: float | None = None
    c0_method: str = "count"
    count_n: int = 200
    gamma0: float | None = None
    L: float | None = None
    theta0: float | None = None
    grid_per_atom: int = 64
    z_samples: int = 128
    seed: int = 0
    threads: int | None = None
    rtol: float = 1e-12
    density_tol: float = 1e-10
    N: int = 10
    cutoff: int = 10
    clt_n: int = 10_000
    clt_samples: int = 10_000
    rho: float = 0.2
    ldp_n: list = field(default_factory=lambda: [50, 100, 200, 400, 800])
    eps_list: list = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    noise_nodes: int = 16
    scan_density: int = 6
    cone_steps: int = 6
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("rtol", "density_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 1 <= self.depth <= self.depth_cap:
            raise ConfigError(f"depth {self.depth} outside [1, {self.depth_cap}]")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "map" not in d:
            raise ConfigError("config needs a 'map' section")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def effective_threads(self):
        return self.threads or os.cpu_count() or 1

    def build_map(self):
        return build_map(self.map)

    def build_potential(self, fmap=None):
        return build_potential(self.potential, fmap or self.build_map())

    def build_observable(self, fmap=None):
        return build_observable(self.observable, fmap or self.build_map())


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data)


def build_map(spec):
    try:
        return MarkovMap1D.from_dict(spec)
    except (KeyError, TypeError, MapDefinitionError) as exc:
        raise ConfigError(f"malformed map section: {exc}") from exc


def build_potential(spec, fmap):
    try:
        kind = spec["kind"]
        params = spec["params"]
        alpha = float(spec.get("alpha", 1.0))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed potential section: {exc}") from exc
    try:
        values = tuple(_parse_number(v) for v in params)
        if kind == "constant_per_atom":
            return Potential(kind, values, alpha, tuple(spec.get("breaks", fmap.breaks)))
        return Potential(kind, values, alpha)
    except (ValueError, TypeError, InvalidPotentialError) as exc:
        raise ConfigError(f"malformed potential section: {exc}") from exc


def _parse_number(v):
    """Numbers, or the strings "log(<x>)" for convenience in hand-written configs."""
    if isinstance(v, str):
        s = v.strip()
        if s.startswith("log(") and s.endswith(")"):
            return math.log(float(s[4:-1]))
        return float(s)
    return float(v)


def build_observable(spec, fmap):
    """Observables used by the statistics subcommands."""
    kind = spec.get("kind")
    scale = float(spec.get("scale", 1.0))
    shift = float(spec.get("shift", 0.0))
    if kind == "sin":
        m = int(spec.get("mode", 1))
        base = lambda x: np.sin(2 * np.pi * m * np.asarray(x))  # noqa: E731
    elif kind == "cos":
        m = int(spec.get("mode", 1))
        base = lambda x: np.cos(2 * np.pi * m * np.asarray(x))  # noqa: E731
    elif kind == "indicator":
        a = int(spec.get("atom", 0))
        lo, hi = fmap.breaks[a], fmap.breaks[a + 1]
        base = lambda x: ((np.asarray(x) >= lo) & (np.asarray(x) < hi)).astype(float)  # noqa: E731
    elif kind == "coboundary":
        a = int(spec.get("atom", 0))
        lo, hi = fmap.breaks[a], fmap.breaks[a + 1]

        def ind(x):
            x = np.asarray(x)
            return ((x >= lo) & (x < hi)).astype(float)

        base = lambda x: ind(fmap(np.asarray(x))) - ind(x)  # noqa: E731
    elif kind == "constant":
        c = float(spec.get("value", 1.0))
        base = lambda x: np.full(np.shape(x), c)  # noqa: E731
    else:
        raise ConfigError(f"unknown observable kind {kind!r}")
    return lambda x: scale * base(x) + shift
