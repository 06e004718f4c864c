"""Run configuration: defaults, validation, and flat ``key=value`` files."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .projection import RASTER_MODES, SIGN_RULES, Plane

CONFIG_ENV = "ORTHONET_CONFIG"
VIEW_NAMES = ("front", "top", "side")


class ConfigError(ValueError):
    pass


def parse_view_binding(text: str) -> dict[str, Plane]:
    """Parse ``front=YoZ,top=XoY,side=XoZ`` into a view-name to plane map."""
    binding = {}
    for part in text.split(","):
        name, sep, plane = part.partition("=")
        name, plane = name.strip(), plane.strip()
        if not sep or name not in VIEW_NAMES or name in binding:
            raise ConfigError(f"bad view binding entry {part!r}")
        try:
            binding[name] = Plane(plane)
        except ValueError:
            raise ConfigError(f"unknown plane {plane!r} in view binding") from None
    if set(binding) != set(VIEW_NAMES) or len(set(binding.values())) != 3:
        raise ConfigError("view binding must map front, top and side to distinct planes")
    return binding


@dataclass(frozen=True)
class Config:
    resolution: int = 150
    pooling: str = "avg"
    embedder: str = "raw"
    pool_side: int = 15
    distance: str = "chi2"
    tau: float = 0.67
    breakpoint: int = 100
    window_multiplier: int = 3
    window_min: int = 10
    initial_teach: int = 1
    shuffle_categories: bool = False
    seed: int = 0
    mesh_samples: int = 10000
    raster: str = "density"
    sign_rule: str = "axes"
    sign_grid: int = 16
    degenerate: str = "error"
    views: str = "front=YoZ,top=XoY,side=XoZ"

    def __post_init__(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(25 <= self.resolution <= 225, "resolution must be in [25, 225]")
        need(self.pooling in ("max", "avg"), "pooling must be max or avg")
        need(self.embedder == "raw" or (self.embedder.startswith("external:")
                                        and len(self.embedder) > len("external:")),
             "embedder must be raw or external:PATH")
        need(1 <= self.pool_side <= self.resolution, "pool_side must be in [1, resolution]")
        need(self.distance in ("chi2", "js"), "distance must be chi2 or js")
        need(0.0 < self.tau < 1.0, "tau must be in (0, 1)")
        need(self.breakpoint >= 1, "breakpoint must be >= 1")
        need(self.window_multiplier >= 1, "window_multiplier must be >= 1")
        need(self.window_min >= 1, "window_min must be >= 1")
        need(self.initial_teach >= 1, "initial_teach must be >= 1")
        need(self.seed >= 0, "seed must be >= 0")
        need(self.mesh_samples >= 3, "mesh_samples must be >= 3")
        need(self.raster in RASTER_MODES, f"raster must be one of {RASTER_MODES}")
        need(self.sign_rule in SIGN_RULES, f"sign_rule must be one of {SIGN_RULES}")
        need(2 <= self.sign_grid <= 225, "sign_grid must be in [2, 225]")
        need(self.degenerate in ("error", "tiebreak"), "degenerate must be error or tiebreak")
        parse_view_binding(self.views)

    @property
    def view_binding(self) -> dict[str, Plane]:
        return parse_view_binding(self.views)

    @property
    def external_path(self) -> str | None:
        return self.embedder.partition(":")[2] if self.embedder.startswith("external:") else None

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "Config | None" = None) -> "Config":
        """Build from string values, coercing by field type; unknown keys are rejected."""
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, types[key], raw)
        return dataclasses.replace(base or cls(), **changes)

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.items())

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def header(self) -> str:
        """One-line echo used in report headers."""
        return " ".join(f"{k}={_fmt(v)}" for k, v in self.items())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(key: str, typ: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Defaults, then $ORTHONET_CONFIG, then ``path``, then ``overrides``."""
    cfg = Config()
    env = os.environ.get(CONFIG_ENV)
    for source in (env, path):
        if source:
            cfg = Config.from_mapping(read_config_file(source), cfg)
    if overrides:
        cfg = Config.from_mapping({k: v for k, v in overrides.items() if v is not None}, cfg)
    return cfg
