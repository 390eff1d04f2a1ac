"""Experiment configuration: a sectioned ``key = value`` text file.

Example::

    [experiment]
    policy = SAGE-Hybrid, Lion-Hybrid
    seeds = 0, 1, 2
    steps = 2000

    [schedule]
    lr = 1e-4, 1e-3

Unknown sections or keys and badly typed values are rejected with the key
name and line number. :func:`dumps` writes the canonical form: every key,
fixed order, normalised values.
"""

from __future__ import annotations

import configparser
import itertools
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .errors import ConfigurationError, SageError
from .optimizers import Policy
from .training import TrainConfig

SECTIONS = ("experiment", "model", "schedule", "optimizer")

# key -> (section, kind)
KEYS: dict[str, tuple[str, str]] = {
    "policy": ("experiment", "policies"),
    "seeds": ("experiment", "ints"),
    "steps": ("experiment", "int"),
    "snapshot_every": ("experiment", "int"),
    "out": ("experiment", "str"),
    "vocab": ("model", "int"),
    "dim": ("model", "int"),
    "batch": ("model", "int"),
    "zipf_exponent": ("model", "float"),
    "mixer": ("model", "bool"),
    "bias": ("model", "bool"),
    "eval_size": ("model", "int"),
    "lr": ("schedule", "floats"),
    "warmup_fraction": ("schedule", "float"),
    "eta_min": ("schedule", "float"),
    "beta1": ("optimizer", "float"),
    "beta2": ("optimizer", "float"),
    "weight_decay": ("optimizer", "float"),
    "epsilon": ("optimizer", "float"),
    "alpha": ("optimizer", "float"),
    "sink_iterations": ("optimizer", "int"),
    "sink_epsilon": ("optimizer", "float"),
    "instant": ("optimizer", "str"),
    "sage_1d": ("optimizer", "str"),
}

_DEFAULT_CELL = TrainConfig()


@dataclass(frozen=True)
class ExperimentConfig:
    policy: tuple[str, ...] = ("SAGE-Hybrid",)
    seeds: tuple[int, ...] = (0,)
    lr: tuple[float, ...] = (1e-3,)
    out: str = ""
    cell: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.policy or not self.seeds or not self.lr:
            raise ConfigurationError("policy, seeds and lr must each list at least one value")
        self.cells()  # validates every combination up front

    def cells(self) -> list[TrainConfig]:
        return [
            replace(self.cell, policy=p, lr=lr, seed=s)
            for p, lr, s in itertools.product(self.policy, self.lr, self.seeds)
        ]

    def get(self, key: str) -> Any:
        if key in ("policy", "seeds", "lr", "out"):
            return getattr(self, key)
        return getattr(self.cell, key)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        top = {k: v for k, v in kw.items() if k in ("policy", "seeds", "lr", "out")}
        rest = {k: v for k, v in kw.items() if k not in top}
        return replace(self, cell=replace(self.cell, **rest), **top)


def _line_of(text: str, section: str | None, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            if k == key:
                return no
    return None


def _err(text: str, msg: str, section: str | None, key: str | None = None) -> ConfigurationError:
    line = _line_of(text, section, key)
    where = f"line {line}: " if line else ""
    return ConfigurationError(f"{where}{msg}")


def _split(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _convert(kind: str, raw: str):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw.strip()
    if kind == "bool":
        v = raw.strip().lower()
        if v in ("true", "yes", "on", "1"):
            return True
        if v in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "ints":
        return tuple(int(p) for p in _split(raw))
    if kind == "floats":
        return tuple(float(p) for p in _split(raw))
    if kind == "policies":
        policies = tuple(Policy.parse(p) for p in _split(raw))
        if Policy.APOLLO in policies:
            raise ValueError("APOLLO is not supported")
        return tuple(p.value for p in policies)
    raise AssertionError(kind)


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        msg = " ".join(str(exc).split())
        raise ConfigurationError(f"malformed config: {msg}") from None
    if parser.defaults():
        raise ConfigurationError("keys outside a section are not allowed")
    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise _err(text, f"unknown section [{section}] (expected one of {', '.join(SECTIONS)})", section)
        for key, raw in parser.items(section):
            if key not in KEYS:
                raise _err(text, f"unknown key {key!r} in [{section}]", section, key)
            want, kind = KEYS[key]
            if want != section:
                raise _err(text, f"key {key!r} belongs in [{want}], not [{section}]", section, key)
            try:
                values[key] = _convert(kind, raw)
            except (ValueError, SageError) as exc:
                raise _err(text, f"bad value for {key!r}: {exc}", section, key) from None
    cell_keys = {f.name for f in fields(TrainConfig)}
    top = {k: values.pop(k) for k in ("policy", "seeds", "lr", "out") if k in values}
    try:
        cell = replace(_DEFAULT_CELL, **{k: v for k, v in values.items() if k in cell_keys})
        return ExperimentConfig(cell=cell, **top)
    except ConfigurationError as exc:
        key = next((k for k in KEYS if re.search(rf"\b{k}\b", str(exc))), None)
        if key is not None:
            raise _err(text, str(exc), KEYS[key][0], key) from None
        raise


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _format(kind: str, value) -> str:
    if kind in ("ints", "floats", "policies"):
        return ", ".join(_format(kind[:-1] if kind != "policies" else "str", v) for v in value)
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def dumps(cfg: ExperimentConfig) -> str:
    out = []
    for section in SECTIONS:
        out.append(f"[{section}]")
        for key, (sec, kind) in KEYS.items():
            if sec == section:
                out.append(f"{key} = {_format(kind, cfg.get(key))}".rstrip())
        out.append("")
    return "\n".join(out)
