"""YAML experiment configs with line-aware validation errors.

A config is one YAML mapping, optionally with nested sections, plus
``--set dotted.key=value`` overrides from the command line. Every
validation failure names the file and line (or the override) that set the
offending key.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import DomainError
from .predictors import AddBeta, AlphaNML, Mixture, Predictor, dirichlet_quadrature
from .source import BatchSetup, ParamGrid, Prior

DEFAULT_DELTA = 0.1
DEFAULT_QUAD_SIZE = 64
DEFAULT_STEP = 0.01

# Keys that control how a run executes, not what it computes.
EXECUTION_KEYS = ("workers", "output", "audit_output")


class ConfigError(ValueError):
    pass


def _line_map(node, prefix: str = "", out: dict | None = None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _line_map(value_node, path, out)
    return out


@dataclass
class Config:
    data: dict[str, Any]
    source: str = "<defaults>"
    lines: dict[str, int] = field(default_factory=dict)
    overridden: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path | None, overrides: list[str] | None = None) -> "Config":
        data: dict[str, Any] = {}
        lines: dict[str, int] = {}
        source = "<defaults>"
        if path is not None:
            source = str(path)
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"{source}: cannot read config: {exc.strerror}") from None
            try:
                node = yaml.compose(text)
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                mark = getattr(exc, "problem_mark", None)
                where = f"{source}:{mark.line + 1}" if mark else source
                raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{source}:1: top level must be a mapping")
            lines = _line_map(node)
        cfg = cls(data, source, lines)
        for item in overrides or []:
            cfg.apply_override(item)
        return cfg

    def apply_override(self, item: str) -> None:
        if "=" not in item:
            raise ConfigError(f"--set {item}: expected key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"--set {item}: value is not valid YAML") from None
        node = self.data
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.get(p)
            if not isinstance(nxt, dict):
                nxt = {}
                node[p] = nxt
            node = nxt
        node[parts[-1]] = value
        self.overridden[key] = item

    def where(self, key: str) -> str:
        probe = key
        while probe:
            if probe in self.overridden:
                return f"--set {self.overridden[probe]}"
            if probe in self.lines:
                return f"{self.source}:{self.lines[probe]}"
            probe = probe.rpartition(".")[0]
        return self.source

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.where(key)}: {key}: {message}")

    def has(self, key: str) -> bool:
        node: Any = self.data
        for p in key.split("."):
            if not isinstance(node, dict) or p not in node:
                return False
            node = node[p]
        return True

    def raw(self, key: str, default: Any = None) -> Any:
        node: Any = self.data
        for p in key.split("."):
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    # typed getters -----------------------------------------------------

    def get_int(self, key: str, default: int | None = None, minimum: int | None = None) -> int:
        value = self.raw(key, default)
        if value is None:
            raise self.error(key, "is required")
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(key, f"must be an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(key, f"must be >= {minimum}, got {value}")
        return value

    def get_float(self, key: str, default: float | None = None) -> float:
        value = self.raw(key, default)
        if value is None:
            raise self.error(key, "is required")
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", ".inf"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            try:
                return float(value)
            except (TypeError, ValueError):
                raise self.error(key, f"must be a number, got {value!r}") from None
        return float(value)

    def get_choice(self, key: str, choices: tuple[str, ...], default: str | None = None) -> str:
        value = self.raw(key, default)
        if value not in choices:
            raise self.error(key, f"must be one of {', '.join(choices)}, got {value!r}")
        return value

    def get_float_list(self, key: str, default: list | None = None) -> list[float]:
        value = self.raw(key, default)
        if not isinstance(value, list) or not value:
            raise self.error(key, f"must be a nonempty list, got {value!r}")
        out = []
        for v in value:
            if isinstance(v, str) and v.strip().lower() in ("inf", ".inf"):
                out.append(math.inf)
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                out.append(float(v))
            else:
                raise self.error(key, f"entries must be numbers, got {v!r}")
        return out

    def get_int_list(self, key: str, default: list | None = None) -> list[int]:
        value = self.raw(key, default)
        if not isinstance(value, list) or not value or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise self.error(key, f"must be a nonempty list of integers, got {value!r}")
        return list(value)

    # common sections ---------------------------------------------------

    def delta(self) -> float:
        d = self.get_float("delta", DEFAULT_DELTA)
        if not 0 < d < 0.5:
            raise self.error("delta", f"must satisfy 0 < delta < 1/2, got {d}")
        return d

    def gamma(self) -> float:
        g = self.get_float("setup.ell_rule.gamma")
        if not g > 0:
            raise self.error("setup.ell_rule.gamma", f"must be > 0, got {g}")
        return g

    def setup(self) -> BatchSetup:
        m = self.get_int("setup.alphabet_size", 2, minimum=2)
        n = self.get_int("setup.n", minimum=0)
        if self.has("setup.ell_rule"):
            ell = ell_from_rule(n, self.gamma())
        else:
            ell = self.get_int("setup.ell", minimum=1)
        return BatchSetup(n, ell, m)

    def grid(self, key: str = "grid") -> ParamGrid:
        spec = self.raw(key)
        try:
            if spec is None:
                d = self.delta()
                return sweep_grid(d, 1.0 - d, DEFAULT_STEP)
            if isinstance(spec, list):
                return grid_from_points(spec)
            if not isinstance(spec, dict):
                raise self.error(key, "must be a list of points or a mapping")
            if "points" in spec:
                return grid_from_points(spec["points"])
            d = self.delta() if not ("lo" in spec and "hi" in spec) else None
            lo = self.get_float(f"{key}.lo", d)
            hi = self.get_float(f"{key}.hi", None if d is None else 1.0 - d)
            if not 0 <= lo <= hi <= 1:
                raise self.error(key, f"needs 0 <= lo <= hi <= 1, got lo={lo}, hi={hi}")
            if "size" in spec:
                return ParamGrid.uniform_binary(self.get_int(f"{key}.size", minimum=1), lo, hi)
            step = self.get_float(f"{key}.step", DEFAULT_STEP)
            if not step > 0:
                raise self.error(f"{key}.step", "must be positive")
            return sweep_grid(lo, hi, step)
        except DomainError as exc:
            raise self.error(key, str(exc)) from None

    def prior(self, grid: ParamGrid, key: str = "predictor.prior") -> Prior:
        kind = self.get_choice(f"{key}.type", ("uniform", "dirichlet", "explicit", "point"), "uniform")
        try:
            if kind == "uniform":
                return Prior.uniform(grid)
            if kind == "dirichlet":
                return dirichlet_quadrature(
                    self.get_float(f"{key}.beta", 1.0),
                    self.get_int(f"{key}.size", DEFAULT_QUAD_SIZE, minimum=8),
                )
            if kind == "point":
                idx = self.get_int(f"{key}.index", 0, minimum=0)
                if idx >= grid.size:
                    raise self.error(f"{key}.index", f"out of range for a grid of {grid.size} points")
                return Prior.point(grid, idx)
            own = grid_from_points(self.raw(f"{key}.points")) if self.has(f"{key}.points") else grid
            return Prior.from_weights(own, self.get_float_list(f"{key}.weights"))
        except DomainError as exc:
            raise self.error(key, str(exc)) from None

    def predictor(self, setup: BatchSetup, grid: ParamGrid) -> Predictor:
        kind = self.get_choice("predictor.type", ("add_beta", "mixture", "alpha_nml"), "add_beta")
        try:
            if kind == "add_beta":
                return AddBeta(self.get_float("predictor.beta", 0.5), setup)
            prior = self.prior(grid)
            if kind == "mixture":
                return Mixture(prior, setup)
            return AlphaNML(prior, self.get_float("predictor.alpha", 2.0), setup)
        except DomainError as exc:
            raise self.error("predictor", str(exc)) from None

    def resolved(self) -> dict[str, Any]:
        """Config as it will be echoed into output headers."""
        out = copy.deepcopy(self.data)
        for k in EXECUTION_KEYS:
            out.pop(k, None)
        return out


def ell_from_rule(n: int, gamma: float) -> int:
    return max(1, int(round(n ** gamma)))


def sweep_grid(lo: float, hi: float, step: float) -> ParamGrid:
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    values = np.round(lo + step * np.arange(count), 12)
    return ParamGrid.binary(values)


def grid_from_points(points) -> ParamGrid:
    if not isinstance(points, list) or not points:
        raise DomainError("grid points must be a nonempty list")
    if all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in points):
        return ParamGrid.binary([float(p) for p in points])
    return ParamGrid(np.array(points, dtype=float))
