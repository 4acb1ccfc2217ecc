"""Engine configuration and the tiny key=value config-file format.

A config file is plain lines of ``key = value`` with ``#`` comments, e.g.:

    # morphkit.conf
    timestep = 0.0166666
    touch_tolerance = 0.02
    snap_threshold = 0.5
    seed = 42

Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaError


@dataclass(frozen=True)
class EngineConfig:
    timestep: float = 1.0 / 60.0
    touch_tolerance: float = 0.02
    snap_threshold: float = 0.5
    seed: int = 0


def parse_config(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "seed":
            out[key] = int(value)
        elif key in ("timestep", "touch_tolerance", "snap_threshold"):
            out[key] = float(value)
        else:
            raise SchemaError(f"line {lineno}: unknown config key {key!r}")
    return out


def load_config(text: str, **overrides) -> EngineConfig:
    values = parse_config(text)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return EngineConfig(**values)
