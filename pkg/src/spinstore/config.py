"""Experiment configuration: a sectioned key = value text format.

Example::

    [geometry]
    kind = chain
    n = 4
    field = 0 0 1

    [protocol]
    scheme = pulse_sequence
    tau = 0.01

    [sweep]
    parameter = tau
    values = 0.005, 0.01, 0.02, 0.05

    [output]
    dir = out
    formats = csv, json
    seed = 7

``#`` starts a comment.  Site lists are written ``x y z; x y z; ...``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConfigError
from .protocols import PULSE_MODELS, SCHEMES

__all__ = ["ExperimentConfig", "parse_config", "format_config", "load_config", "APPLICATIONS", "ALL_SCHEMES"]

APPLICATIONS = ("frozen_subsystem", "transfer_and_store", "impurity_switch")
ALL_SCHEMES = SCHEMES + APPLICATIONS
GEOMETRY_KINDS = ("chain", "lattice", "sites")
FORMATS = ("csv", "json")


def _float(cond=None, what=""):
    def conv(text):
        try:
            v = float(text)
        except ValueError:
            raise ValueError(f"expected a number, got {text!r}") from None
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("value must be finite")
        if cond is not None and not cond(v):
            raise ValueError(f"value {v!r} must be {what}")
        return v

    return conv


def _int(minimum):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise ValueError(f"expected an integer, got {text!r}") from None
        if v < minimum:
            raise ValueError(f"value {v} must be >= {minimum}")
        return v

    return conv


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return conv


def _vector(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError(f"expected three components, got {text!r}")
    return [_float()(p) for p in parts]


def _positions(text):
    rows = [r for r in text.split(";") if r.strip()]
    if not rows:
        raise ValueError("expected at least one site")
    return [_vector(r) for r in rows]


def _float_list(cond=None, what=""):
    item = _float(cond, what)

    def conv(text):
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        return [item(p) for p in parts]

    return conv


def _str_list(options):
    def conv(text):
        parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
        for p in parts:
            if p not in options:
                raise ValueError(f"unknown entry {p!r}; expected {', '.join(options)}")
        return parts

    return conv


POSITIVE = _float(lambda v: v > 0, "positive")
NONNEG = _float(lambda v: v >= 0, "nonnegative")

GEOMETRY_KEYS: dict[str, Callable[[str], Any]] = {
    "kind": _choice(GEOMETRY_KINDS),
    "n": _int(1),
    "rows": _int(1),
    "cols": _int(1),
    "spacing": POSITIVE,
    "positions": _positions,
    "gammas": _float_list(lambda v: v > 0, "positive"),
    "field": _vector,
    "g": POSITIVE,
}
GEOMETRY_DEFAULTS = {"spacing": 1.0, "field": [0.0, 0.0, 1.0], "g": 1.0}
GEOMETRY_REQUIRED = {"chain": ("n",), "lattice": ("rows", "cols"), "sites": ("positions",)}
GEOMETRY_ALLOWED = {
    "chain": {"kind", "n", "spacing", "gammas", "field", "g"},
    "lattice": {"kind", "rows", "cols", "spacing", "field", "g"},
    "sites": {"kind", "positions", "gammas", "field", "g"},
}

PROTOCOL_KEYS: dict[str, Callable[[str], Any]] = {
    "scheme": _choice(ALL_SCHEMES),
    "tau": POSITIVE,
    "cycles": _int(0),
    "pulse_model": _choice(PULSE_MODELS),
    "storage": _choice(SCHEMES),
    "size_a": _int(1),
    "t0": NONNEG,
    "resume_time": NONNEG,
    "sender": _int(1),
    "line": _int(0),
    "receiver": _int(1),
    "lam": POSITIVE,
    "omega": NONNEG,
    "window": POSITIVE,
    "gamma3": POSITIVE,
    "n_a": _int(1),
    "n_b": _int(1),
}
_STORAGE_KEYS = {"storage", "tau", "cycles", "pulse_model"}
PROTOCOL_ALLOWED = {
    "chain_reversal": {"scheme", "tau", "cycles"},
    "planar_three_orientation": {"scheme", "tau", "cycles"},
    "pulse_sequence": {"scheme", "tau", "cycles", "pulse_model"},
    "frozen_subsystem": {"scheme", "size_a", "t0", "resume_time"} | _STORAGE_KEYS,
    "transfer_and_store": {"scheme", "sender", "line", "receiver", "lam", "t0"} | _STORAGE_KEYS,
    "impurity_switch": {"scheme", "omega", "window", "gamma3", "n_a", "n_b"},
}
PROTOCOL_REQUIRED = {
    "chain_reversal": ("tau",),
    "planar_three_orientation": ("tau",),
    "pulse_sequence": ("tau",),
    "frozen_subsystem": ("tau", "size_a"),
    "transfer_and_store": ("tau",),
    "impurity_switch": ("omega", "window"),
}
PROTOCOL_DEFAULTS = {
    "chain_reversal": {"cycles": 1},
    "planar_three_orientation": {"cycles": 1},
    "pulse_sequence": {"cycles": 1, "pulse_model": "ideal_toggling"},
    "frozen_subsystem": {"storage": "chain_reversal", "cycles": 1, "pulse_model": "ideal_toggling",
                         "t0": 1.0, "resume_time": 0.0},
    "transfer_and_store": {"storage": "chain_reversal", "cycles": 0, "pulse_model": "ideal_toggling",
                           "sender": 1, "line": 3, "receiver": 1, "lam": 1.0},
    "impurity_switch": {"gamma3": 4.0, "n_a": 1, "n_b": 1},
}
SWEEPABLE = {"tau", "cycles", "t0", "resume_time", "lam", "omega", "window", "gamma3"}

OUTPUT_KEYS: dict[str, Callable[[str], Any]] = {
    "dir": str,
    "formats": _str_list(FORMATS),
    "seed": _int(0),
}
OUTPUT_DEFAULTS = {"dir": ".", "formats": ["csv", "json"], "seed": 0}

SECTIONS = ("geometry", "protocol", "sweep", "output")


@dataclass
class ExperimentConfig:
    protocol: dict
    geometry: dict | None = None
    sweep: dict | None = None
    output: dict = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))

    @property
    def scheme(self) -> str:
        return self.protocol["scheme"]

    @property
    def sweep_values(self) -> list:
        return [] if self.sweep is None else list(self.sweep["values"])

    def as_dict(self) -> dict:
        out = {"protocol": dict(self.protocol), "output": dict(self.output)}
        if self.geometry is not None:
            out["geometry"] = dict(self.geometry)
        if self.sweep is not None:
            out["sweep"] = dict(self.sweep)
        return out


def _line_index(text):
    """Map (section, key) -> 1-based line number, and section -> header line."""
    where = {}
    section = None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    keyline = re.compile(r"^\s*([^=#\s][^=]*?)\s*=")
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault(section, lineno)
            continue
        m = keyline.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


def _convert(section, items, schema, where):
    out = {}
    for key, raw in items.items():
        if key not in schema:
            raise ConfigError(f"unknown key in [{section}]", key, where.get((section, key)))
        try:
            out[key] = schema[key](raw.strip())
        except ValueError as exc:
            raise ConfigError(f"invalid value for {key}: {exc}", key, where.get((section, key))) from None
    return out


def _restrict(section, values, allowed, what, where):
    for key in values:
        if key not in allowed:
            raise ConfigError(f"key not used by {what} in [{section}]", key, where.get((section, key)))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration; errors name the key and line."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#",),
        strict=True, default_section="__defaults__",
    )
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("configuration must start with a [section] header", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message.splitlines()[0], getattr(exc, "option", None), exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    where = _line_index(text)

    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]", line=where.get(name))
    if not parser.has_section("protocol"):
        raise ConfigError("missing required [protocol] section")
    raw_protocol = dict(parser.items("protocol"))
    if "scheme" not in raw_protocol:
        raise ConfigError("protocol needs a scheme", "scheme", where.get("protocol"))
    protocol = _convert("protocol", raw_protocol, PROTOCOL_KEYS, where)
    scheme = protocol["scheme"]
    _restrict("protocol", protocol, PROTOCOL_ALLOWED[scheme], scheme, where)
    for key in PROTOCOL_REQUIRED[scheme]:
        if key not in protocol:
            raise ConfigError(f"{scheme} requires this key", key, where.get("protocol"))
    protocol = {**PROTOCOL_DEFAULTS[scheme], **protocol}
    if scheme == "transfer_and_store" and protocol["sender"] != protocol["receiver"]:
        raise ConfigError("sender and receiver sizes must match", "receiver", where.get(("protocol", "receiver")))

    geometry = None
    needs_geometry = scheme not in ("transfer_and_store", "impurity_switch")
    if parser.has_section("geometry"):
        if not needs_geometry:
            raise ConfigError(f"{scheme} builds its own chain; remove the [geometry] section",
                              line=where.get("geometry"))
        raw = dict(parser.items("geometry"))
        if "kind" not in raw:
            raise ConfigError("geometry needs a kind", "kind", where.get("geometry"))
        geometry = _convert("geometry", raw, GEOMETRY_KEYS, where)
        kind = geometry["kind"]
        _restrict("geometry", geometry, GEOMETRY_ALLOWED[kind], f"kind = {kind}", where)
        for key in GEOMETRY_REQUIRED[kind]:
            if key not in geometry:
                raise ConfigError(f"geometry kind {kind} requires this key", key, where.get("geometry"))
        geometry = {**GEOMETRY_DEFAULTS, **geometry}
        count = {"chain": lambda g: g["n"], "lattice": lambda g: g["rows"] * g["cols"],
                 "sites": lambda g: len(g["positions"])}[kind](geometry)
        if "gammas" in geometry and len(geometry["gammas"]) != count:
            raise ConfigError(f"expected {count} gammas", "gammas", where.get(("geometry", "gammas")))
        if not any(geometry["field"]):
            raise ConfigError("field direction must be nonzero", "field", where.get(("geometry", "field")))
    elif needs_geometry:
        raise ConfigError(f"{scheme} requires a [geometry] section")

    sweep = None
    if parser.has_section("sweep"):
        raw = dict(parser.items("sweep"))
        for key in raw:
            if key not in ("parameter", "values"):
                raise ConfigError("unknown key in [sweep]", key, where.get(("sweep", key)))
        if "parameter" not in raw or "values" not in raw:
            raise ConfigError("sweep needs parameter and values", line=where.get("sweep"))
        param = raw["parameter"].strip()
        if param not in protocol or param not in SWEEPABLE:
            raise ConfigError(f"sweep parameter must be a numeric key of the {scheme} protocol block",
                              "parameter", where.get(("sweep", "parameter")))
        conv = PROTOCOL_KEYS[param]
        values = []
        for part in (p for p in re.split(r"[,\s]+", raw["values"].strip()) if p):
            try:
                values.append(conv(part))
            except ValueError as exc:
                raise ConfigError(f"invalid {param} value in sweep: {exc}", "values",
                                  where.get(("sweep", "values"))) from None
        sweep = {"parameter": param, "values": values}

    output = dict(OUTPUT_DEFAULTS)
    if parser.has_section("output"):
        output.update(_convert("output", dict(parser.items("output")), OUTPUT_KEYS, where))
    return ExperimentConfig(protocol=protocol, geometry=geometry, sweep=sweep, output=output)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _render(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and isinstance(value[0], list):
            return "; ".join(" ".join(_render(x) for x in row) for row in value)
        return ", ".join(_render(x) for x in value)
    return str(value)


def format_config(config: ExperimentConfig) -> str:
    """Render a config so that ``parse_config(format_config(c))`` reproduces it."""
    blocks = []
    data = config.as_dict()
    for section in SECTIONS:
        if section not in data:
            continue
        lines = [f"[{section}]"]
        for key, value in data[section].items():
            if section == "geometry" and key == "field":
                value = " ".join(_render(x) for x in value)
            lines.append(f"{key} = {_render(value)}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
