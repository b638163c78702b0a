"""Experiment configuration: one versioned defaults table, a plain-text
key = value file format with dotted keys for module parameter overrides, and
a content hash that pins every resolved value into the report.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import ConfigError
from .iriscode import GaborParams
from .lstm import TrainParams
from .segmentation import SegmentationParams
from .synth import SynthParams

MODES = ("offline", "online")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 1
    n_subjects: int = 20
    modes: tuple[str, ...] = MODES
    n_splits: int = 10
    hd_frames: int = 10
    hd_threshold: float = 0.37
    max_shift: int = 8
    radial_res: int = 64
    angular_res: int = 512
    intensity_match: bool = False
    output_dir: str = "runs/experiment"
    keep_frames: bool = True
    synth: SynthParams = field(default_factory=SynthParams)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    gabor: GaborParams = field(default_factory=GaborParams)
    training: TrainParams = field(default_factory=TrainParams)

    @property
    def victim_id(self) -> int:
        # One dedicated victim identity outside the evaluated subject pool.
        return self.n_subjects


def validate(config: ExperimentConfig) -> ExperimentConfig:
    if config.n_splits < 1:
        raise ConfigError(f"n_splits must be >= 1, got {config.n_splits}")
    if config.n_subjects < 5:
        raise ConfigError(f"n_subjects must be >= 5 for subject splits, got {config.n_subjects}")
    if not config.modes or any(m not in MODES for m in config.modes):
        raise ConfigError(f"modes must be a non-empty subset of {MODES}, got {config.modes}")
    if config.hd_frames < 1:
        raise ConfigError("hd_frames must be >= 1")
    return config


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
    return raw


def _apply(config: ExperimentConfig, key: str, raw: str) -> ExperimentConfig:
    parts = key.split(".")
    if len(parts) == 1:
        names = {f.name: f for f in fields(config)}
        if key not in names or is_dataclass(getattr(config, key)):
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = _coerce(raw, getattr(config, key))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        return dataclasses.replace(config, **{key: value})
    if len(parts) == 2:
        group, name = parts
        sub = getattr(config, group, None)
        if sub is None or not is_dataclass(sub):
            raise ConfigError(f"unknown config group {group!r}")
        if name not in {f.name for f in fields(sub)}:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = _coerce(raw, getattr(sub, name))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        return dataclasses.replace(config, **{group: dataclasses.replace(sub, **{name: value})})
    raise ConfigError(f"malformed config key {key!r}")


def parse_assignments(pairs: list[str],
                      base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key=value`` strings (CLI overrides) on top of a base config."""
    config = base if base is not None else ExperimentConfig()
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        config = _apply(config, key.strip(), raw.strip())
    return config


def load_config(path: str | Path,
                base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a plain-text config file (``key = value`` lines, ``#`` comments)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    config = base if base is not None else ExperimentConfig()
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{p}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        config = _apply(config, key.strip(), raw.strip())
    return config


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def to_lines(config: ExperimentConfig) -> list[str]:
    """Every resolved value, one sorted ``key = value`` line each."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if is_dataclass(value):
            for sub in fields(value):
                lines.append(f"{f.name}.{sub.name} = {_format(getattr(value, sub.name))}")
        else:
            lines.append(f"{f.name} = {_format(value)}")
    return sorted(lines)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text("\n".join(to_lines(config)) + "\n")


def config_hash(config: ExperimentConfig) -> str:
    text = "\n".join(to_lines(config))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
