"""Check reports, verdict rules and trend fits shared by every check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PASS = "PASS"
FAIL = "FAIL"
NEGATIVE_CONTROL_PASS = "NEGATIVE-CONTROL-PASS"
UNTRUSTED = "UNTRUSTED"
EXPLORATORY = "EXPLORATORY"
VERDICTS = (PASS, FAIL, NEGATIVE_CONTROL_PASS, UNTRUSTED, EXPLORATORY)


def decide(ok: bool, trusted: bool = True, control: bool = False) -> str:
    """Map a raw outcome to a verdict.

    Untrusted scales win over everything.  For a declared negative control
    the check is expected to detect the violated hypothesis: a raw failure
    is the desired outcome and a raw pass means the violation went unseen.
    """
    if not trusted:
        return UNTRUSTED
    if control:
        return FAIL if ok else NEGATIVE_CONTROL_PASS
    return PASS if ok else FAIL


def within(value: float, target: float, rel: float, floor: float = 0.0) -> bool:
    """|value - target| < rel |target| + floor.  Ties at the boundary fail."""
    if not (np.isfinite(value) and np.isfinite(target)):
        return False
    return abs(value - target) < rel * abs(target) + floor


def monotone(values, direction: str = "up", slack: float = 0.0, floor: float = 0.0) -> bool:
    """Monotone trend with relative ``slack`` per step (plus an absolute floor)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return True
    prev, nxt = v[:-1], v[1:]
    tol = slack * np.abs(prev) + floor
    if direction == "up":
        return bool(np.all(nxt >= prev - tol))
    if direction == "down":
        return bool(np.all(nxt <= prev + tol))
    raise ValueError(direction)


def extrapolate(values) -> tuple[float, str]:
    """Limit of a sequence sampled on a geometric ladder.

    Aitken's delta-squared on the last three terms when the successive
    differences contract geometrically (ratio in (0, 0.95)); otherwise the
    last value.  For an error ~ C q^k the Aitken value is exact.
    """
    v = [float(x) for x in values]
    if len(v) < 3:
        return v[-1], "last"
    x0, x1, x2 = v[-3:]
    d1, d2 = x1 - x0, x2 - x1
    if d1 == 0.0 or d2 == 0.0:
        return x2, "last"
    ratio = d2 / d1
    if not 0.0 < ratio < 0.95:
        return x2, "last"
    return x2 + d2 * ratio / (1.0 - ratio), "aitken"


def convergence_order(errors, h) -> float:
    """Observed order from errors on successive refinements (last pair)."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if e[-1] == 0.0:
        return math.inf
    if e[-2] == 0.0:
        return 0.0
    return float(np.log(e[-2] / e[-1]) / np.log(h[-2] / h[-1]))


@dataclass
class CheckReport:
    id: str
    spec_hash: str
    scales: list
    measured: list
    target: object
    tolerance: float
    verdict: str
    fit: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    control: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "spec_hash": self.spec_hash,
            "scales": list(self.scales),
            "measured": list(self.measured),
            "target": self.target,
            "tolerance": self.tolerance,
            "fit": self.fit,
            "verdict": self.verdict,
            "constants": self.constants,
            "series": self.series,
            "details": self.details,
            "control": self.control,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def dumps(obj, indent: int = 0) -> str:
    """Deterministic JSON with 17 significant digits for every float."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def floats(x) -> list:
    return [float(v) for v in np.ravel(x)]
