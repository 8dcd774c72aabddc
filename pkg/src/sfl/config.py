"""Run configuration: INI files with sections, flag overrides and a stable hash.

Precedence is flags > file > defaults. Every section maps onto one of the
module config dataclasses, so each hyperparameter is reachable from a file
or from ``--set section.key=value`` on the command line.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .agent import AgentConfig
from .landmarks import GraphConfig
from .similarity import SFSConfig
from .successor import SFConfig

OUTPUT_ROOT_ENV = "SFL_OUTPUT_ROOT"
PROFILES_DIR = Path(__file__).parent / "profiles"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunSection:
    map: str = "fourroom"
    seed: int = 0
    steps: int = 200_000
    encoder: str = "onehot"  # onehot | learned
    random_spawn: bool = False
    time_limit: int = 0  # 0: the map's default episode limit
    trials: int = 100
    output_dir: str = ""


@dataclass
class EncoderSection:
    hidden: tuple[int, ...] = (128,)
    out_dim: int = 64
    alpha: float = 10.0
    margin: float = 2.0
    k_pos: int = 2
    u_neg: int = 10
    l_neg: int = 15
    lr: float = 5e-4
    batch_size: int = 128
    pretrain_steps: int = 2_000
    pretrain_transitions: int = 20_000


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    sf: SFConfig = field(default_factory=SFConfig)
    sfs: SFSConfig = field(default_factory=SFSConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def to_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in fields(self)}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_ini(self) -> str:
        lines = []
        for sec, values in self.to_dict().items():
            lines.append(f"[{sec}]")
            for k, v in values.items():
                lines.append(f"{k} = {_format(v)}")
            lines.append("")
        return "\n".join(lines)

    def replace(self, section: str, **kw) -> "RunConfig":
        """Copy with fields of one section changed (validated)."""
        out = from_dict(self.to_dict())
        for k, v in kw.items():
            set_value(out, f"{section}.{k}", v if isinstance(v, str) else _format(v))
        return out


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def _field_type(obj, name: str):
    for f in fields(obj):
        if f.name == name:
            return f
    return None


def _coerce(raw: str, default: Any, key: str, allow_str: bool = False):
    """Parse ``raw`` into the type of the field's default value."""
    text = raw.strip()
    if allow_str and not isinstance(default, str):
        # number-or-keyword fields such as edge_threshold = 1 | median
        try:
            return float(text)
        except ValueError:
            return text
    try:
        if text.lower() == "none":
            return None
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.split(",") if x.strip())
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if default is None:
            # optional numeric knobs (temporal_tau, k_nearest)
            return int(text) if text.lstrip("-").isdigit() else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def set_value(cfg: RunConfig, dotted: str, raw: str) -> None:
    if "." not in dotted:
        raise ConfigError(dotted, "expected section.key")
    sec_name, key = dotted.split(".", 1)
    section = getattr(cfg, sec_name, None)
    if section is None or not dataclasses.is_dataclass(section):
        raise ConfigError(dotted, f"unknown section {sec_name!r}")
    f = _field_type(section, key)
    if f is None:
        raise ConfigError(dotted, f"unknown key {key!r} in section [{sec_name}]")
    current = getattr(type(section)(), key)
    value = _coerce(raw, current, dotted, allow_str="str" in str(f.type))
    kw = dataclasses.asdict(section)
    kw[key] = value
    try:
        new = type(section)(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(dotted, str(exc)) from None
    setattr(cfg, sec_name, new)


def from_dict(d: dict) -> RunConfig:
    cfg = RunConfig()
    for sec, values in d.items():
        for k, v in values.items():
            set_value(cfg, f"{sec}.{k}", _format(v))
    return cfg


def load(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the INI file (if any), then ``overrides``."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        read = parser.read(path)
        if not read:
            raise ConfigError("config", f"cannot read {path}")
        for sec in parser.sections():
            for k, v in parser.items(sec):
                set_value(cfg, f"{sec}.{k}", v)
    for k, v in (overrides or {}).items():
        set_value(cfg, k, v)
    validate(cfg)
    return cfg


def profile_path(name: str) -> Path:
    p = PROFILES_DIR / f"{name}.ini"
    if not p.exists():
        raise ConfigError("profile", f"no profile named {name!r}")
    return p


def validate(cfg: RunConfig) -> None:
    if cfg.run.encoder not in ("onehot", "learned"):
        raise ConfigError("run.encoder", "must be 'onehot' or 'learned'")
    if cfg.run.steps < 0:
        raise ConfigError("run.steps", "must be >= 0")
    if cfg.run.trials < 1:
        raise ConfigError("run.trials", "must be >= 1")
    if not 0.0 <= cfg.sf.gamma < 1.0:
        raise ConfigError("sf.gamma", "must lie in [0, 1)")
    thr = cfg.graph.edge_threshold
    if isinstance(thr, str) and thr != "median":
        raise ConfigError("graph.edge_threshold", "a number or 'median'")
    if cfg.graph.landmark_cap < 1:
        raise ConfigError("graph.landmark_cap", "must be >= 1")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
