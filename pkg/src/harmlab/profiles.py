"""Warping profiles f(s) for surfaces of revolution ds^2 + f(s)^2 dtheta^2.

Every profile supplies f and its first two derivatives analytically, plus an
antiderivative used for exact cell volumes.  Profiles with ``tip = True``
vanish at s = 0 (the pole of a surface of revolution); the others are
positive everywhere and are sampled on a two-sided interval [-S, S].
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class Profile:
    """Base class.  Subclasses implement ``f``, ``df``, ``d2f`` and ``F``."""

    name: str = "profile"
    tip: bool = True
    tip_slope: float = 1.0

    @property
    def two_sided(self) -> bool:
        return not self.tip

    @property
    def smooth_tip(self) -> bool:
        return self.tip and abs(self.tip_slope - 1.0) < 1e-12

    def f(self, s):
        raise NotImplementedError

    def df(self, s):
        raise NotImplementedError

    def d2f(self, s):
        raise NotImplementedError

    def F(self, s):
        """Antiderivative of f with F(0) = 0."""
        raise NotImplementedError

    def gauss_curvature(self, s):
        """K = -f''/f evaluated at s (s > 0 for tip profiles)."""
        s = np.asarray(s, dtype=float)
        return -self.d2f(s) / self.f(s)

    def key(self) -> str:
        return self.name


@dataclass(frozen=True)
class FlatProfile(Profile):
    """f(s) = s: the Euclidean plane in polar coordinates."""

    name: str = "flat"

    def f(self, s):
        return np.asarray(s, dtype=float) * 1.0

    def df(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def d2f(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def F(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * s * s


@dataclass(frozen=True)
class ConeProfile(Profile):
    """f(s) = a s with 0 < a <= 1: a flat cone of total angle 2 pi a."""

    name: str = "cone"
    a: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.a <= 1.0:
            raise ValueError(f"cone angle factor must lie in (0, 1], got {self.a}")
        object.__setattr__(self, "tip_slope", float(self.a))

    def f(self, s):
        return self.a * np.asarray(s, dtype=float)

    def df(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.a)

    def d2f(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def F(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * self.a * s * s

    def key(self) -> str:
        return f"cone(a={self.a!r})"


@dataclass(frozen=True)
class CappedCylinderProfile(Profile):
    """Hemisphere of radius 1 glued to a unit cylinder: f = sin s, then 1.

    The profile is C^{1,1}; the Gauss curvature jumps from 1 to 0 at s = pi/2.
    """

    name: str = "capped_cylinder"

    def f(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < HALF_PI, np.sin(np.minimum(s, HALF_PI)), 1.0)

    def df(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < HALF_PI, np.cos(np.minimum(s, HALF_PI)), 0.0)

    def d2f(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < HALF_PI, -np.sin(np.minimum(s, HALF_PI)), 0.0)

    def F(self, s):
        s = np.asarray(s, dtype=float)
        cap = 1.0 - np.cos(np.minimum(s, HALF_PI))
        return np.where(s < HALF_PI, cap, 1.0 + (s - HALF_PI))

    def gauss_curvature(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s < HALF_PI, 1.0, 0.0)


@dataclass(frozen=True)
class CylinderProfile(Profile):
    """f = 1 on s in [-S, S]: the flat cylinder S^1 x R."""

    name: str = "cylinder"
    tip: bool = False
    tip_slope: float = 0.0

    def f(self, s):
        return np.ones_like(np.asarray(s, dtype=float))

    def df(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def d2f(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def F(self, s):
        return np.asarray(s, dtype=float) * 1.0


@dataclass(frozen=True)
class SaddleProfile(Profile):
    """f = cosh s: a catenoid-like neck with K = -1 (negative control)."""

    name: str = "saddle"
    tip: bool = False
    tip_slope: float = 0.0

    def f(self, s):
        return np.cosh(np.asarray(s, dtype=float))

    def df(self, s):
        return np.sinh(np.asarray(s, dtype=float))

    def d2f(self, s):
        return np.cosh(np.asarray(s, dtype=float))

    def F(self, s):
        return np.sinh(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class TabulatedProfile(Profile):
    """Profile interpolated by a cubic spline through samples (s_k, f_k)."""

    name: str = "tabulated"
    s_samples: tuple = field(default=(), repr=False)
    f_samples: tuple = field(default=(), repr=False)

    def __post_init__(self):
        s = np.asarray(self.s_samples, dtype=float)
        fv = np.asarray(self.f_samples, dtype=float)
        if s.ndim != 1 or s.size < 4 or s.shape != fv.shape:
            raise ValueError("tabulated profile needs at least 4 matching (s, f) samples")
        if np.any(np.diff(s) <= 0):
            raise ValueError("tabulated profile abscissae must be strictly increasing")
        spline = CubicSpline(s, fv)
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "_anti", spline.antiderivative())
        tip = abs(fv[0]) < 1e-12 and abs(s[0]) < 1e-12
        object.__setattr__(self, "tip", bool(tip))
        object.__setattr__(self, "tip_slope", float(spline(0.0, 1)) if tip else 0.0)

    def f(self, s):
        return self._spline(np.asarray(s, dtype=float))

    def df(self, s):
        return self._spline(np.asarray(s, dtype=float), 1)

    def d2f(self, s):
        return self._spline(np.asarray(s, dtype=float), 2)

    def F(self, s):
        return self._anti(np.asarray(s, dtype=float)) - self._anti(0.0)

    def key(self) -> str:
        data = np.concatenate([self.s_samples, self.f_samples]).astype(float)
        return f"tabulated({hashlib.sha256(data.tobytes()).hexdigest()[:12]})"


def load_profile(path) -> TabulatedProfile:
    """Read a two-column ASCII file of (s, f(s)) samples."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (s, f), got {data.shape[1]}")
    return TabulatedProfile(s_samples=tuple(data[:, 0]), f_samples=tuple(data[:, 1]))


def make_profile(name: str, **params) -> Profile:
    """Look up a catalog profile by name."""
    if name == "flat":
        return FlatProfile()
    if name == "cone":
        return ConeProfile(a=float(params.get("a", 1.0)))
    if name == "capped_cylinder":
        return CappedCylinderProfile()
    if name == "cylinder":
        return CylinderProfile()
    if name == "saddle":
        return SaddleProfile()
    if name == "tabulated":
        return load_profile(params["path"])
    raise ValueError(f"unknown profile {name!r}")
