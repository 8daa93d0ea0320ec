"""INI run configuration (``configparser``), with CLI overrides.

Sections: ``[run]`` (variants, seeds, out), ``[hyper]``, ``[train]``,
``[task]`` and, for ``grid``, ``[grid]``.
"""

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import Hyper, Variant
from .train import TrainConfig

TABLE5_AXES = {
    "epsilon": (1.0, 0.1, 0.01),
    "gamma": (1.0, 0.1),
    "beta": (2.0, 1.0, 0.5, 0.1, -0.5, -1.0),
    "hidden_dim": (10, 20, 30),
    "layers": (1, 5, 10, 20),
}
_INT_FIELDS = {"layers", "hidden_dim", "max_epochs", "patience", "batch_size", "seed"}


@dataclass
class RunConfig:
    command: str
    variants: tuple
    seeds: tuple
    hyper: Hyper
    train: TrainConfig
    task: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    output_dir: str = "runs/out"
    source: str = ""
    raw: dict = field(default_factory=dict)

    def echo(self):
        return {
            "command": self.command,
            "variants": [str(v) for v in self.variants],
            "seeds": list(self.seeds),
            "hyper": {f.name: getattr(self.hyper, f.name) for f in fields(self.hyper)},
            "train": {f.name: getattr(self.train, f.name) for f in fields(self.train)},
            "task": self.task,
            "grid": self.grid,
            "output_dir": str(self.output_dir),
            "source": self.source,
        }


class _Locator:
    """Maps ``(section, key)`` to a line number for diagnostics."""

    def __init__(self, text):
        self.lines = {}
        section = None
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            m = re.match(r"\[(.+)\]$", line)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = no
            elif section and "=" in line and not line.startswith(("#", ";")):
                self.lines[(section, line.split("=", 1)[0].strip())] = no

    def where(self, section, key=None):
        no = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"[{section}]" + (f" {key}" if key else "")
        return f"line {no}: {loc}" if no else loc


def parse_list(text, conv=str):
    items = [s.strip() for s in str(text).split(",")]
    return tuple(conv(s) for s in items if s)


def _num(section, key, value, loc):
    try:
        return int(value) if key in _INT_FIELDS else float(value)
    except ValueError:
        raise ConfigError(f"{loc.where(section, key)}: expected a number, got {value!r}") from None


def _build(cls, section, data, loc, allowed):
    kwargs = {}
    for key, value in data.items():
        if key not in allowed:
            raise ConfigError(f"{loc.where(section, key)}: unknown field")
        if key in ("activation", "phi_operator", "inner_activation", "metric"):
            kwargs[key] = value
        else:
            kwargs[key] = _num(section, key, value, loc)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{loc.where(section)}: {err}") from None


def load_config(path=None, command="", text=None, overrides=None):
    """Parse a config file (or ``text``) and apply ``overrides``.

    ``overrides`` may carry ``seeds`` (list), ``out`` (path) and ``scale``.
    """
    if text is None:
        if path is None:
            raise ConfigError("no config given")
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from None
    loc = _Locator(text)
    known = {"run", "hyper", "train", "task", "grid"}
    for s in cp.sections():
        if s not in known:
            raise ConfigError(f"{loc.where(s)}: unknown section")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    overrides = overrides or {}

    try:
        variants = tuple(Variant(v) for v in parse_list(run.get("variants", "swan")))
    except ValueError as err:
        raise ConfigError(f"{loc.where('run', 'variants')}: {err}") from None
    if not variants:
        raise ConfigError(f"{loc.where('run', 'variants')}: empty variant list")

    seeds_text = overrides.get("seeds", run.get("seeds", "0"))
    try:
        seeds = tuple(int(s) for s in (seeds_text if isinstance(seeds_text, (list, tuple)) else parse_list(seeds_text)))
    except ValueError:
        raise ConfigError(f"{loc.where('run', 'seeds')}: seeds must be integers") from None
    if not seeds:
        raise ConfigError(f"{loc.where('run', 'seeds')}: seed list is empty")

    hyper = _build(Hyper, "hyper", dict(cp["hyper"]) if cp.has_section("hyper") else {}, loc,
                   {f.name for f in fields(Hyper)})
    train = _build(TrainConfig, "train", dict(cp["train"]) if cp.has_section("train") else {}, loc,
                   {f.name for f in fields(TrainConfig)})
    task = dict(cp["task"]) if cp.has_section("task") else {}
    if overrides.get("scale") is not None:
        task["scale"] = str(overrides["scale"])
    grid = {}
    if cp.has_section("grid"):
        for key, value in cp["grid"].items():
            if key == "max_configs":
                grid[key] = _num("grid", "layers", value, loc)
                continue
            if key not in TABLE5_AXES:
                raise ConfigError(f"{loc.where('grid', key)}: not a grid axis (use {sorted(TABLE5_AXES)})")
            vals = tuple(_num("grid", key, v, loc) for v in parse_list(value))
            bad = [v for v in vals if v not in TABLE5_AXES[key]]
            if bad or not vals:
                raise ConfigError(f"{loc.where('grid', key)}: values {bad or 'none'} outside {TABLE5_AXES[key]}")
            grid[key] = vals
    out = overrides.get("out") or run.get("out") or f"runs/{command or 'out'}"
    return RunConfig(command, variants, seeds, hyper, train, task, grid, str(out), str(path or ""),
                     {s: dict(cp[s]) for s in cp.sections()})


def task_get(cfg, key, default, conv=str):
    if key not in cfg.task:
        return default
    try:
        return conv(cfg.task[key])
    except ValueError:
        raise ConfigError(f"[task] {key}: cannot parse {cfg.task[key]!r}") from None


def with_train(cfg, **changes):
    return replace(cfg, train=replace(cfg.train, **changes))
