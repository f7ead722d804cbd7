"""Experiment configuration files.

A config names a catalog problem and optionally overrides any of its
defaults. Configs round-trip through JSON losslessly and accept dotted-key
command-line overrides such as fine.h=1e-6 or poincare.kernel.q=3.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError

SCHEMA_VERSION = 1

_FINE_KEYS = {"method", "h", "rtol", "atol"}
_ALIGNMENT_KEYS = {"h_phase", "rhs_selector", "initial_eta", "tol_factor",
                   "max_window", "max_refinements", "scan_substeps"}
_POINCARE_SCALARS = {"eta", "estimator", "macro"}
_KERNEL_KEYS = {"q", "p"}


@dataclass
class ExperimentConfig:
    problem: str
    epsilon: float = None
    T: float = None
    H: float = None
    K: int = None
    mode: str = None
    forward_variant: str = None
    stop_tolerance: float = None
    workers: int = None
    resonance_windows: list = None
    fine: dict = field(default_factory=dict)
    poincare: dict = field(default_factory=dict)
    alignment: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.problem or not isinstance(self.problem, str):
            raise ConfigurationError("config needs a problem name")
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigurationError(
                "unsupported schema_version %r (this build reads %d)"
                % (self.schema_version, SCHEMA_VERSION))
        _check_keys("fine", self.fine, _FINE_KEYS)
        _check_keys("alignment", self.alignment, _ALIGNMENT_KEYS)
        for key, val in self.poincare.items():
            if key in _POINCARE_SCALARS:
                continue
            if key == "micro":
                _check_keys("poincare.micro", val, _FINE_KEYS)
            elif key == "kernel":
                _check_keys("poincare.kernel", val, _KERNEL_KEYS)
            else:
                raise ConfigurationError(
                    "unknown config key poincare.%s" % key)


def _check_keys(group, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigurationError("%s must be a mapping" % group)
    for key in mapping:
        if key not in allowed:
            raise ConfigurationError("unknown config key %s.%s" % (group, key))


def to_json(cfg):
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)


def from_json(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError("config is not valid JSON: %s" % exc)
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in raw:
        if key not in names:
            raise ConfigurationError("unknown config key %r" % key)
    return ExperimentConfig(**raw)


def from_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(fh.read())


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg, overrides):
    """New config with key=value pairs applied; keys may be dotted."""
    out = dataclasses.asdict(cfg)
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(
                "override %r is not of the form key=value" % item)
        key, _, text = item.partition("=")
        value = _parse_value(text)
        parts = key.split(".")
        if parts[0] not in names:
            raise ConfigurationError("unknown config key %r" % parts[0])
        if len(parts) == 1:
            out[parts[0]] = value
        else:
            if parts[0] not in ("fine", "poincare", "alignment"):
                raise ConfigurationError(
                    "config key %r does not take nested values" % parts[0])
            node = out
            for part in parts[:-1]:
                nxt = node.get(part)
                if nxt is None:
                    nxt = {}
                    node[part] = nxt
                if not isinstance(nxt, dict):
                    raise ConfigurationError(
                        "config key %r does not take nested values" % key)
                node = nxt
            node[parts[-1]] = value
    return from_json(json.dumps(out))
