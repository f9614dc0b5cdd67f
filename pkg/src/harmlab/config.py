"""Run configuration: INI-style sections of ``key = value`` lines.

Layout::

    [run]
    seed = 0
    jobs = 2

    [case flat2]
    manifold = FlatGrid
    m = 2
    halfwidth = 20
    h = 0.5
    map = linear
    map.A = 1 1; 0 1
    rho = 2, 2, 3
    t = 1, 2, 3
    checks = li_identity, max_principle

    [manifest]
    negative_controls = saddle.bochner

Ladders are geometric sequences written ``start, factor, count``.  Keys
starting with ``map.`` or ``field.`` are free-form generator parameters.
The reader records the line of every key so a bad value is reported as
``path:line: message``; :func:`emit` and :func:`parse` round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """A malformed configuration, anchored to a line of the source text."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        self.message = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# key -> type tag; "ladder" is (start, factor, count), "list" a comma list,
# "pairs" a comma list of a:b time pairs
CASE_KEYS = {
    "manifold": "str", "m": "int", "halfwidth": "float", "h": "float", "profile": "str", "s_max": "float",
    "n_s": "int", "n_theta": "int", "a": "float", "k_flat": "int", "negative_control": "bool",
    "factor.manifold": "str", "factor.profile": "str", "factor.s_max": "float", "factor.n_s": "int",
    "factor.n_theta": "int", "factor.a": "float",
    "map": "str", "field": "str", "sup": "float",
    "rho": "ladder", "t": "ladder", "checks": "list", "tolerance": "float", "refine": "list",
    "heat.q": "float", "t_pairs": "pairs",
    "segment.rho": "float", "segment.samples": "int", "poincare.rho": "ladder",
    "wp.t": "float", "wp.j": "list", "harnack.t1": "float", "harnack.t2": "float",
    "tail.t": "float", "tail.R": "list", "kernel.eps": "float", "sigma.k": "int",
    "rigidity.t_max": "float", "semigroup.t_a": "float", "semigroup.t_b": "float",
    "gaussian.t": "ladder", "volume.rho": "ladder", "subharmonic.reach": "float",
}
FREE_PREFIXES = ("map.", "field.")
RUN_KEYS = {"seed": "int", "strict": "bool", "jobs": "int", "out": "str"}
MANIFOLDS = ("FlatGrid", "RadialProfile", "WarpedGrid2D", "Cone2D", "Product")


@dataclass(frozen=True)
class Ladder:
    start: float
    factor: float
    count: int

    def values(self) -> list:
        return [float(self.start * self.factor**k) for k in range(self.count)]


@dataclass
class CaseConfig:
    """One manifold/map pairing and the checks to run on it."""

    name: str
    options: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def get(self, key: str, default=None):
        return self.options.get(key, default)

    def ladder(self, key: str, default=None):
        v = self.options.get(key)
        return v.values() if v is not None else default

    def params(self, prefix: str) -> dict:
        """Free-form ``prefix.*`` parameters with the prefix stripped."""
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.options.items() if k.startswith(prefix + ".")}

    @property
    def checks(self) -> list:
        return list(self.options.get("checks", ()))


@dataclass
class RunConfig:
    seed: int = 0
    strict: bool = False
    jobs: int = 1
    out: str = "out"
    cases: list = field(default_factory=list)
    manifest: tuple | None = None
    source: str = field(default="<config>", compare=False)

    def case(self, name: str) -> CaseConfig:
        for c in self.cases:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Value conversion


def _convert(tag: str, text: str):
    if tag == "str":
        if not text:
            raise ValueError("empty value")
        return text
    if tag == "int":
        return int(text)
    if tag == "float":
        v = float(text)
        if not np.isfinite(v):
            raise ValueError("value must be finite")
        return v
    if tag == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if tag == "list":
        return tuple(p.strip() for p in text.split(",") if p.strip())
    if tag == "ladder":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("a ladder is 'start, factor, count'")
        lad = Ladder(float(parts[0]), float(parts[1]), int(parts[2]))
        if lad.start <= 0 or lad.factor <= 1 or lad.count < 1:
            raise ValueError("a ladder needs start > 0, factor > 1 and count >= 1")
        return lad
    if tag == "pairs":
        out = []
        for p in text.split(","):
            a, b = p.split(":")
            out.append((float(a), float(b)))
        return tuple(out)
    raise ValueError(f"unknown type tag {tag!r}")


def _format(tag: str, value) -> str:
    if tag in ("str",):
        return value
    if tag == "int":
        return str(int(value))
    if tag == "float":
        return repr(float(value))
    if tag == "bool":
        return "true" if value else "false"
    if tag == "list":
        return ", ".join(value)
    if tag == "ladder":
        return f"{value.start!r}, {value.factor!r}, {value.count}"
    if tag == "pairs":
        return ", ".join(f"{a!r}:{b!r}" for a, b in value)
    raise ValueError(tag)


def _case_tag(key: str) -> str | None:
    if key in CASE_KEYS:
        return CASE_KEYS[key]
    if key.startswith(FREE_PREFIXES) and len(key.split(".", 1)[1]) > 0:
        return "str"
    return None


# ---------------------------------------------------------------------------
# Reader


def _sections(text: str, source: str):
    """Yield (header, header_line, [(key, value, line)]) in file order."""
    current = None
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", no, source)
            current = (line[1:-1].strip(), no, [])
            out.append(current)
            continue
        if current is None:
            raise ConfigError("key outside any section", no, source)
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", no, source)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError("empty key", no, source)
        current[2].append((key, value.strip(), no))
    return out


def parse(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text; every error names the offending line."""
    cfg = RunConfig(source=source)
    seen_run = False
    names = set()
    for header, hline, items in _sections(text, source):
        keys = {}
        for key, _, no in items:
            if key in keys:
                raise ConfigError(f"duplicate key {key!r} (first on line {keys[key]})", no, source)
            keys[key] = no
        if header == "run":
            if seen_run:
                raise ConfigError("duplicate [run] section", hline, source)
            seen_run = True
            for key, value, no in items:
                if key not in RUN_KEYS:
                    raise ConfigError(f"unknown key {key!r} in [run]", no, source)
                try:
                    setattr(cfg, key, _convert(RUN_KEYS[key], value))
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}", no, source) from None
            if cfg.jobs < 1:
                raise ConfigError("jobs must be >= 1", keys["jobs"], source)
        elif header == "manifest":
            if cfg.manifest is not None:
                raise ConfigError("duplicate [manifest] section", hline, source)
            cfg.manifest = ()
            for key, value, no in items:
                if key != "negative_controls":
                    raise ConfigError(f"unknown key {key!r} in [manifest]", no, source)
                entries = _convert("list", value)
                for e in entries:
                    if e.count(".") != 1:
                        raise ConfigError(f"manifest entries are 'case.check', got {e!r}", no, source)
                cfg.manifest = tuple(sorted(set(entries)))
        elif header.startswith("case "):
            name = header[5:].strip()
            if not name or any(ch in name for ch in " ./\\"):
                raise ConfigError(f"invalid case name {name!r}", hline, source)
            if name in names:
                raise ConfigError(f"duplicate case {name!r}", hline, source)
            names.add(name)
            case = CaseConfig(name=name)
            for key, value, no in items:
                tag = _case_tag(key)
                if tag is None:
                    raise ConfigError(f"unknown key {key!r} in [case {name}]", no, source)
                try:
                    case.options[key] = _convert(tag, value)
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}", no, source) from None
                case.lines[key] = no
            _validate_case(case, hline, source)
            cfg.cases.append(case)
        else:
            raise ConfigError(f"unknown section [{header}]", hline, source)
    if not cfg.cases:
        raise ConfigError("no [case ...] sections", None, source)
    if cfg.manifest is not None:
        for entry in cfg.manifest:
            cname, check = entry.split(".")
            if cname not in names or check not in cfg.case(cname).checks:
                raise ConfigError(f"manifest entry {entry!r} names no configured check", None, source)
    return cfg


def _validate_case(case: CaseConfig, hline: int, source: str) -> None:
    from .suite import CHECKS

    o = case.options
    if "manifold" not in o:
        raise ConfigError(f"[case {case.name}] needs a manifold", hline, source)
    if o["manifold"] not in MANIFOLDS:
        raise ConfigError(f"unknown manifold {o['manifold']!r}", case.lines["manifold"], source)
    if "checks" not in o or not o["checks"]:
        raise ConfigError(f"[case {case.name}] needs a checks list", hline, source)
    for c in o["checks"]:
        if c not in CHECKS:
            raise ConfigError(f"unknown check {c!r}", case.lines["checks"], source)
    for key in ("h", "halfwidth", "s_max", "tolerance"):
        if key in o and o[key] <= 0:
            raise ConfigError(f"{key} must be positive", case.lines[key], source)


def load(path) -> RunConfig:
    path = Path(path)
    return parse(path.read_text(), source=str(path))


def emit(cfg: RunConfig) -> str:
    """Canonical text for ``cfg``; ``parse(emit(cfg)) == cfg``."""
    lines = ["[run]"]
    for key, tag in RUN_KEYS.items():
        lines.append(f"{key} = {_format(tag, getattr(cfg, key))}")
    for case in cfg.cases:
        lines += ["", f"[case {case.name}]"]
        for key, value in case.options.items():
            lines.append(f"{key} = {_format(_case_tag(key), value)}")
    if cfg.manifest is not None:
        lines += ["", "[manifest]", f"negative_controls = {', '.join(cfg.manifest)}"]
    return "\n".join(lines) + "\n"
