"""Simulator configuration and its key=value file format.

Lane-change knobs mirror the SUMO sublane parameters they replace:

    a_lat_max          lcAccelLat
    v_lat_standing     lcMaxSpeedLatStanding
    v_lat_factor       lcMaxSpeedLatFactor   (v_lat_max(v) = standing + factor * v)
    impatience_time_s  lcTimeToImpatience    (gap thresholds shrink to 50 % over this time)
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 2024
    n_cases: int = 10
    case_duration_s: float = 4.0
    dt: float = 0.1
    warmup_s: float = 60.0
    # closed-loop density band, vehicles present on the road at once
    density_min: int = 18
    density_max: int = 22
    inflow_per_lane: float = 0.3
    speed_limit: float = 25.0
    work_zone_speed_limit: float = 20.0
    speed_ramp_m: float = 150.0
    truck_fraction: float = 0.1
    driver_jitter: float = 0.05
    # IDM
    idm_T: float = 1.2
    idm_a: float = 1.5
    idm_b: float = 2.0
    idm_s0: float = 2.0
    idm_delta: float = 4.0
    max_decel: float = 9.0
    # lateral motion and merging
    a_lat_max: float = 1.0
    v_lat_standing: float = 0.2
    v_lat_factor: float = 0.06
    lateral_tau_s: float = 0.5
    merge_start_s: float = 50.0
    merge_lead_gap_s: float = 1.0
    merge_lag_gap_s: float = 1.0
    merge_safe_decel: float = 3.0
    impatience_time_s: float = 10.0
    stop_margin_m: float = 2.0

    def __post_init__(self):
        positive = [f.name for f in fields(self) if f.name not in ("seed", "truck_fraction", "driver_jitter")]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.truck_fraction <= 1:
            raise ConfigError(f"truck_fraction must lie in [0, 1], got {self.truck_fraction}")
        if self.driver_jitter < 0:
            raise ConfigError("driver_jitter must be non-negative")
        if self.density_min > self.density_max:
            raise ConfigError("density_min must not exceed density_max")
        if abs(round(self.case_duration_s / self.dt) * self.dt - self.case_duration_s) > 1e-9:
            raise ConfigError("case_duration_s must be a whole number of steps")

    @property
    def n_frames(self) -> int:
        return int(round(self.case_duration_s / self.dt))

    def v_lat_max(self, v: float) -> float:
        return self.v_lat_standing + self.v_lat_factor * v

    def with_overrides(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


_TYPES = {f.name: f.type for f in fields(SimConfig)}


def parse_config_text(text: str, source: str = "<config>") -> SimConfig:
    """Parse ``key=value`` lines; ``#`` starts a comment; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = int(value) if _TYPES[key] in (int, "int") else float(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} expects a number, got {value!r}") from None
    return SimConfig(**values)


def load_config(path) -> SimConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), str(path))


def default_config_path() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "default_sim.cfg"
