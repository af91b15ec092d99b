"""Run configuration: typed dataclass sections read from and written to INI text.

A config file looks like::

    [run]
    method = ita
    seeds = 0, 1, 2, 3, 4

    [ctf]
    rank = 16
    beta = 0.4

Unknown sections or keys are rejected.  Every field can also be overridden
with a dotted ``section.key=value`` string (the CLI exposes these as
``--section-key`` flags).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

from .baseline_aug import BaselineAugConfig
from .classifier import MlpConfig
from .ctf import CtfConfig
from .errors import DomainError
from .ita import ItaConfig

__all__ = ["RunConfig", "METHODS", "load_config", "parse_config", "config_to_text", "apply_overrides",
           "config_hash", "section_fields", "dataclass_to_pairs", "dataclass_from_pairs"]

METHODS = ("ita", "jitter", "permutation", "timewarp", "mixup", "none")


@dataclass(frozen=True)
class RunSection:
    method: str = "ita"
    normalize: bool = True
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    ordinal: bool = False
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise DomainError("at least one seed is required")
        if self.jobs < 1:
            raise DomainError("jobs must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    ita: ItaConfig = field(default_factory=ItaConfig)
    baseline: BaselineAugConfig = field(default_factory=BaselineAugConfig)
    ctf: CtfConfig = field(default_factory=CtfConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)

    def for_seed(self, seed) -> "RunConfig":
        """Copy with every component seeded by ``seed``."""
        seed = int(seed)
        return dataclasses.replace(
            self,
            ita=dataclasses.replace(self.ita, seed=seed),
            baseline=dataclasses.replace(self.baseline, seed=seed),
            ctf=dataclasses.replace(self.ctf, seed=seed),
            mlp=dataclasses.replace(self.mlp, seed=seed),
        )


SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig))


def section_fields(section_type):
    hints = typing.get_type_hints(section_type)
    return [(f.name, hints[f.name], f.default if f.default is not dataclasses.MISSING else f.default_factory())
            for f in dataclasses.fields(section_type)]


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_value(text, hint, where):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin is typing.Union and type(None) in args:
            if text.lower() in ("", "none", "null"):
                return None
            inner = next(a for a in args if a is not type(None))
            return _parse_value(text, inner, where)
        if origin in (tuple, Tuple):
            item = args[0] if args else str
            return tuple(_parse_value(p, item, where) for p in text.split(",") if p.strip())
        if hint is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        return text
    except ValueError:
        raise DomainError(f"{where}: cannot parse {text!r} as {getattr(hint, '__name__', hint)}") from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def dataclass_to_pairs(obj) -> Dict[str, str]:
    return {f.name: _format_value(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def dataclass_from_pairs(section_type, pairs: Mapping[str, str], where="config", base=None):
    known = {name: hint for name, hint, _ in section_fields(section_type)}
    unknown = sorted(set(pairs) - set(known))
    if unknown:
        raise DomainError(f"{where}: unknown keys {unknown}")
    values = {k: _parse_value(v, known[k], f"{where}.{k}") for k, v in pairs.items()}
    if base is not None:
        return dataclasses.replace(base, **values)
    return section_type(**values)


def _section_types():
    hints = typing.get_type_hints(RunConfig)
    return {name: hints[name] for name in SECTIONS}


def parse_config(text, where="config") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=where)
    except configparser.Error as exc:
        raise DomainError(f"{where}: {exc}") from None
    types = _section_types()
    unknown = sorted(set(parser.sections()) - set(types))
    if unknown:
        raise DomainError(f"{where}: unknown sections {unknown}")
    sections = {}
    for name, section_type in types.items():
        pairs = dict(parser[name]) if parser.has_section(name) else {}
        sections[name] = dataclass_from_pairs(section_type, pairs, f"{where}[{name}]")
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in dataclass_to_pairs(getattr(cfg, name)).items())
        lines.append("")
    return "\n".join(lines)


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, str]) -> RunConfig:
    """Apply ``{"section.key": "value"}`` overrides."""
    grouped: Dict[str, Dict[str, str]] = {}
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise DomainError(f"override {dotted!r} must look like section.key with section in {SECTIONS}")
        grouped.setdefault(section, {})[key] = value
    types = _section_types()
    updated = {
        section: dataclass_from_pairs(types[section], pairs, f"override[{section}]", base=getattr(cfg, section))
        for section, pairs in grouped.items()
    }
    return dataclasses.replace(cfg, **updated)


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()
