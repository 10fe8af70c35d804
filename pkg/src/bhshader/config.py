"""Scene configuration: line-oriented ``key = value`` text.

Blank lines and ``#`` comments are ignored. Unknown keys, malformed lines
and out-of-range values raise :class:`ConfigError`. Angles are in degrees.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    # geometry
    flat: bool = False  # no black hole: straight rays, no Doppler shift
    tables: str = ""  # geodesic table file; empty means precompute in memory
    epsilon: float = 1e-5
    deflection_size: int = 512
    radius_width: int = 64
    radius_height: int = 32
    color_table: str = ""  # color table file; empty means precompute in memory
    # stars
    catalog: str = ""  # star catalog file; empty means procedural
    catalog_seed: int = 1
    catalog_count: int = 100000
    catalog_slope: float = 2.5
    starmap_size: int = 512
    star_brightness: float = 1.0
    galaxy: bool = True
    galaxy_brightness: float = 0.02
    galaxy_seed: int = 0
    # disc
    disc: bool = True
    disc_inner: float = 3.0  # radii, in horizon units
    disc_outer: float = 12.0
    disc_temperature: float = 6500.0
    disc_seed: int = 0
    disc_particles: int = 64
    disc_falloff: float = 1.0
    disc_brightness: float = 1.0
    # camera
    camera: str = "static"  # static | orbit
    camera_r: float = 20.0
    camera_theta: float = 84.0
    camera_phi: float = 0.0
    orbit_r0: float = 6.0
    orbit_delta0: float = 90.0
    orbit_v0: float = 0.45
    orbit_chi: float = 10.0
    orbit_dtau: float = 0.5
    orbit_substeps: int = 10
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    focal_length: float = 1.0
    # image
    width: int = 640
    height: int = 360
    exposure: float = 1.0
    bloom: bool = True
    hdr: bool = True
    frame_start: int = 0
    frame_end: int = 1  # exclusive
    frame_dt: float = 1.0  # coordinate time between frames of a static camera
    output: str = "frame.png"

    def validate(self, base_dir: Path | None = None) -> "SceneConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.width >= 8 and self.height >= 8, "image must be at least 8x8")
        need(self.camera in ("static", "orbit"), "camera must be 'static' or 'orbit'")
        need(self.camera_r > 1.0, "camera_r must be outside the horizon (> 1)")
        need(0.0 <= self.camera_theta <= 180.0, "camera_theta must be in [0, 180]")
        need(self.orbit_r0 > 1.0, "orbit_r0 must be > 1")
        need(0.0 < self.orbit_delta0 < 180.0, "orbit_delta0 must be in (0, 180)")
        need(0.0 <= self.orbit_v0 < 1.0, "orbit_v0 must be in [0, 1)")
        need(self.orbit_dtau > 0 and self.orbit_substeps >= 1, "orbit step must be positive")
        need(3.0 <= self.disc_inner < self.disc_outer, "disc needs 3 <= disc_inner < disc_outer")
        need(self.disc_temperature > 0, "disc_temperature must be positive")
        need(self.focal_length > 0, "focal_length must be positive")
        need(self.epsilon > 0, "epsilon must be positive")
        n = self.starmap_size
        need(n >= 1 and n & (n - 1) == 0, "starmap_size must be a power of two")
        need(self.catalog_count >= 0 and self.catalog_slope > 1, "bad catalog parameters")
        need(self.frame_end > self.frame_start, "frame range is empty")
        need(self.exposure > 0, "exposure must be positive")
        for name in ("tables", "color_table", "catalog"):
            value = getattr(self, name)
            if value and not resolve(value, base_dir).exists():
                raise ConfigError(f"{name}: file {value!r} does not exist")
        return self


def resolve(path: str, base_dir: Path | None) -> Path:
    p = Path(path).expanduser()
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name: str, kind, text: str):
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None


_TYPES = {f.name: {"bool": bool, "int": int, "float": float, "str": str}[f.type]
          for f in fields(SceneConfig)}


def parse_config(text: str, base: SceneConfig | None = None,
                 base_dir: Path | None = None) -> SceneConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, _TYPES[key], value)
    return dataclasses.replace(base or SceneConfig(), **values).validate(base_dir)


def load_config(path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    config = parse_config(text, base_dir=path.parent)
    # Input files are relative to the config file.
    return dataclasses.replace(config, **{
        name: str(resolve(getattr(config, name), path.parent))
        for name in ("tables", "color_table", "catalog") if getattr(config, name)})


def override(config: SceneConfig, pairs: dict, base_dir: Path | None = None) -> SceneConfig:
    """Apply already-typed or textual overrides (e.g. from CLI flags)."""
    values = {}
    for key, value in pairs.items():
        if value is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, _TYPES[key], value) if isinstance(value, str) else value
    return dataclasses.replace(config, **values).validate(base_dir)


def format_config(config: SceneConfig) -> str:
    lines = []
    for f in fields(SceneConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
