"""Scenario configuration files.

One YAML document per scenario: a ``scenario`` section mirroring the
harness Scenario, an ``output`` section (directory and emission
toggles), and an optional ``benchmark`` section consumed by the
benchmark command.  Unknown keys are rejected at every level, values
are SI, and diagnostics carry the source line where the offending key
or value was written.  ``serialize_config`` emits a canonical document
that parses back to an equal configuration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import List

import yaml

from .global_mpcc import GlobalWeights
from .local_mpcc import LocalWeights
from .harness import BACKENDS, CONTROLLERS, Scenario
from .plant import Limits


class ConfigError(ValueError):
    """Invalid configuration; message includes file name and line."""


@dataclass
class OutputConfig:
    """Where and what a run writes."""

    directory: str = "runs/out"
    trace: bool = True
    metrics: bool = True


@dataclass
class BenchmarkConfig:
    """Solver-timing matrix for the benchmark command."""

    N_list: List[int] = field(default_factory=lambda: [35, 70])
    controllers: List[str] = field(default_factory=lambda: ["global", "local"])
    backends: List[str] = field(default_factory=lambda: ["structured", "condensed"])
    repetitions: int = 30


@dataclass
class RunConfig:
    """Parsed configuration file."""

    scenario: Scenario
    output: OutputConfig
    benchmark: BenchmarkConfig


# ----------------------------------------------------------------------
# YAML with per-key source lines

def _walk(node, name: str):
    """yaml node -> (python value, {key path: line}) with duplicate check."""
    if isinstance(node, yaml.MappingNode):
        out, lines = {}, {}
        for key_node, value_node in node.value:
            key = str(key_node.value)
            if key in out:
                raise ConfigError(f"{name}:{key_node.start_mark.line + 1}: "
                                  f"duplicate key '{key}'")
            value, sub = _walk(value_node, name)
            out[key] = value
            lines[key] = key_node.start_mark.line + 1
            for path, line in sub.items():
                lines[f"{key}.{path}"] = line
        return out, lines
    if isinstance(node, yaml.SequenceNode):
        seq = []
        lines = {}
        for i, item in enumerate(node.value):
            value, sub = _walk(item, name)
            seq.append(value)
            for path, line in sub.items():
                lines[f"{i}.{path}"] = line
        return seq, lines
    return yaml.SafeLoader("").construct_object(node, deep=True), {}


def _compose(text: str, name: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{name}:{mark.line + 1}" if mark else name
        raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from exc
    if node is None:
        return {}, {}
    value, lines = _walk(node, name)
    if not isinstance(value, dict):
        raise ConfigError(f"{name}:1: top level must be a mapping")
    return value, lines


class _Section:
    """One mapping level: typed field extraction with line diagnostics."""

    def __init__(self, name: str, path: str, data: dict, lines: dict):
        if not isinstance(data, dict):
            line = lines.get(path)
            at = f":{line}" if line else ""
            raise ConfigError(f"{name}{at}: '{path}' must be a mapping")
        self.name = name
        self.path = path
        self.data = dict(data)
        self.lines = lines

    def _where(self, key: str) -> str:
        full = f"{self.path}.{key}" if self.path else key
        line = self.lines.get(full)
        return f"{self.name}:{line}" if line else self.name

    def fail(self, key: str, problem: str):
        raise ConfigError(f"{self._where(key)}: {problem}")

    def take(self, key: str, kind, default):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is float and isinstance(value, str):
            # YAML 1.1 reads exponents without a sign ("1.0e8") as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if kind is not None and not isinstance(value, kind):
            self.fail(key, f"'{key}' must be {getattr(kind, '__name__', kind)}")
        if isinstance(value, bool) and kind in (int, float):
            self.fail(key, f"'{key}' must be {kind.__name__}")
        return value

    def sub(self, key: str):
        data = self.data.pop(key, {})
        path = f"{self.path}.{key}" if self.path else key
        return _Section(self.name, path, data, self.lines)

    def finish(self):
        for key in self.data:
            self.fail(key, f"unknown key '{key}'")


def parse_config(text: str, name: str = "<config>") -> RunConfig:
    """Parse one YAML document into a RunConfig."""
    data, lines = _compose(text, name)
    root = _Section(name, "", data, lines)

    sc = root.sub("scenario")
    controller = sc.take("controller", str, "global")
    if controller not in CONTROLLERS:
        sc.fail("controller", f"controller must be one of {CONTROLLERS}")
    backend = sc.take("backend", str, "structured")
    if backend not in BACKENDS:
        sc.fail("backend", f"backend must be one of {BACKENDS}")

    weights_cls = GlobalWeights if controller == "global" else LocalWeights
    wsec = sc.sub("weights")
    try:
        weights = _build_weights(wsec, weights_cls)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: weights: {exc}") from exc

    lsec = sc.sub("limits")
    limits_kwargs = {f.name: lsec.take(f.name, float, getattr(Limits, f.name))
                     for f in fields(Limits)}
    lsec.finish()
    try:
        limits = Limits(**limits_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: limits: {exc}") from exc

    kwargs = dict(
        geometry=sc.take("geometry", str, "sigma_smooth"),
        controller=controller,
        N=sc.take("N", int, 35),
        T=sc.take("T", float, 1e-3),
        weights=weights,
        limits=limits,
        backend=backend,
        trust_halfwidth=sc.take("trust_halfwidth", float, None),
        max_steps=sc.take("max_steps", int, 12000),
        seed=sc.take("seed", int, 0),
    )
    sc.finish()
    try:
        scenario = Scenario(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{name}: scenario: {exc}") from exc

    osec = root.sub("output")
    output = OutputConfig(
        directory=osec.take("directory", str, OutputConfig.directory),
        trace=osec.take("trace", bool, OutputConfig.trace),
        metrics=osec.take("metrics", bool, OutputConfig.metrics),
    )
    osec.finish()

    bsec = root.sub("benchmark")
    default = BenchmarkConfig()
    bench = BenchmarkConfig(
        N_list=_int_list(bsec, "N_list", default.N_list),
        controllers=_str_list(bsec, "controllers", default.controllers,
                              CONTROLLERS),
        backends=_str_list(bsec, "backends", default.backends, BACKENDS),
        repetitions=bsec.take("repetitions", int, default.repetitions),
    )
    bsec.finish()
    for n in bench.N_list:
        if n < 2:
            bsec.fail("N_list", "N_list entries must be at least 2")

    root.finish()
    return RunConfig(scenario=scenario, output=output, benchmark=bench)


def _build_weights(section: _Section, cls):
    kwargs = {}
    for f in fields(cls):
        value = section.take(f.name, float, None)
        if value is not None:
            kwargs[f.name] = value
    section.finish()
    return cls(**kwargs)


def _int_list(section: _Section, key: str, default):
    value = section.take(key, list, list(default))
    for item in value:
        if not isinstance(item, int) or isinstance(item, bool):
            section.fail(key, f"'{key}' must be a list of integers")
    return [int(v) for v in value]


def _str_list(section: _Section, key: str, default, allowed):
    value = section.take(key, list, list(default))
    for item in value:
        if item not in allowed:
            section.fail(key, f"'{key}' entries must be from {allowed}")
    return list(value)


def load_config(path) -> RunConfig:
    """Read and parse a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config(text, name=str(path))


def serialize_config(cfg: RunConfig) -> str:
    """Canonical YAML for a RunConfig; parse(serialize(c)) == c."""
    scenario = cfg.scenario
    sc = {
        "geometry": scenario.geometry,
        "controller": scenario.controller,
        "N": scenario.N,
        "T": scenario.T,
        "weights": asdict(scenario.weights),
        "limits": asdict(scenario.limits),
        "backend": scenario.backend,
        "max_steps": scenario.max_steps,
        "seed": scenario.seed,
    }
    if scenario.trust_halfwidth is not None:
        sc["trust_halfwidth"] = scenario.trust_halfwidth
    doc = {
        "scenario": sc,
        "output": asdict(cfg.output),
        "benchmark": asdict(cfg.benchmark),
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
