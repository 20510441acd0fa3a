"""Level-set descriptions of moving domains.

Convention: ``value(x, t) < 0`` inside the physical domain. ``x`` is an
``(n, d)`` array and ``t`` a scalar or an ``(n,)`` array. Every field also
provides ``dt`` (the partial time derivative), which the built-ins evaluate
analytically; generic callables fall back to a central difference.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


def _points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def _times(t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.broadcast_to(t, (n,)) if t.ndim == 0 else t.reshape(n)


class LevelSetField:
    """Base class; subclasses implement ``value`` and optionally ``dt``."""

    def value(self, x, t) -> np.ndarray:
        raise NotImplementedError

    def dt(self, x, t, eps: float = 1e-6) -> np.ndarray:
        x = _points(x)
        t = _times(t, len(x))
        return (self.value(x, t + eps) - self.value(x, t - eps)) / (2 * eps)

    def __call__(self, x, t) -> np.ndarray:
        return self.value(x, t)

    def __neg__(self) -> "LevelSetField":
        return Negated(self)


class FunctionLevelSet(LevelSetField):
    def __init__(self, fun: Callable, dfun_dt: Optional[Callable] = None):
        self.fun = fun
        self.dfun_dt = dfun_dt

    def value(self, x, t):
        x = _points(x)
        return np.asarray(self.fun(x, _times(t, len(x))), dtype=float)

    def dt(self, x, t, eps=1e-6):
        if self.dfun_dt is None:
            return super().dt(x, t, eps)
        x = _points(x)
        return np.asarray(self.dfun_dt(x, _times(t, len(x))), dtype=float)


class Negated(LevelSetField):
    def __init__(self, inner: LevelSetField):
        self.inner = inner

    def value(self, x, t):
        return -self.inner.value(x, t)

    def dt(self, x, t, eps=1e-6):
        return -self.inner.dt(x, t, eps)


class _Moving(LevelSetField):
    """Rigid translation ``phi(x, t) = phi0(x - c0 - v t)``."""

    def __init__(self, center0: Sequence[float], velocity: Sequence[float]):
        self.center0 = np.asarray(center0, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)

    def center(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.center0 + t[..., None] * self.velocity

    def _shape(self, y):
        raise NotImplementedError

    def _shape_grad(self, y):
        raise NotImplementedError

    def value(self, x, t):
        x = _points(x)
        return self._shape(x - self.center(_times(t, len(x))))

    def dt(self, x, t, eps=1e-6):
        x = _points(x)
        y = x - self.center(_times(t, len(x)))
        return -self._shape_grad(y) @ self.velocity


class Ball(_Moving):
    """Signed distance to a (moving) ball; negative inside the ball."""

    def __init__(self, center0, radius: float, velocity=None):
        center0 = np.asarray(center0, dtype=float)
        super().__init__(center0, np.zeros_like(center0) if velocity is None else velocity)
        self.radius = float(radius)

    def _shape(self, y):
        return np.linalg.norm(y, axis=1) - self.radius

    def _shape_grad(self, y):
        r = np.linalg.norm(y, axis=1)
        return y / np.where(r > 0, r, 1.0)[:, None]


class Box(_Moving):
    """Max-norm level set of an axis-aligned box; negative inside the box."""

    def __init__(self, center0, half_widths, velocity=None):
        center0 = np.asarray(center0, dtype=float)
        super().__init__(center0, np.zeros_like(center0) if velocity is None else velocity)
        self.half_widths = np.asarray(half_widths, dtype=float)

    def _shape(self, y):
        return np.max(np.abs(y) - self.half_widths, axis=1)

    def _shape_grad(self, y):
        k = np.argmax(np.abs(y) - self.half_widths, axis=1)
        g = np.zeros_like(y)
        g[np.arange(len(y)), k] = np.sign(y[np.arange(len(y)), k])
        return g


class HalfSpace(LevelSetField):
    """``phi = n.x - offset - speed * t``."""

    def __init__(self, normal, offset: float, speed: float = 0.0):
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)
        self.speed = float(speed)

    def value(self, x, t):
        x = _points(x)
        return x @ self.normal - self.offset - self.speed * _times(t, len(x))

    def dt(self, x, t, eps=1e-6):
        x = _points(x)
        return np.full(len(x), -self.speed)


class Union(LevelSetField):
    """Union of domains: pointwise minimum of the level sets."""

    def __init__(self, *fields: LevelSetField):
        self.fields = fields

    def _stack(self, x, t):
        return np.stack([f.value(x, t) for f in self.fields])

    def value(self, x, t):
        return self._stack(x, t).min(axis=0)

    def dt(self, x, t, eps=1e-6):
        k = self._stack(x, t).argmin(axis=0)
        d = np.stack([f.dt(x, t, eps) for f in self.fields])
        return d[k, np.arange(d.shape[1])]


class Intersection(Union):
    """Intersection of domains: pointwise maximum of the level sets."""

    def value(self, x, t):
        return self._stack(x, t).max(axis=0)

    def dt(self, x, t, eps=1e-6):
        k = self._stack(x, t).argmax(axis=0)
        d = np.stack([f.dt(x, t, eps) for f in self.fields])
        return d[k, np.arange(d.shape[1])]


def half_plane(normal=(1.0, 0.0), offset=0.5, speed=0.0) -> LevelSetField:
    return HalfSpace(normal, offset, speed)


def moving_disk_complement(center0=(1.5, 0.5), velocity=(-0.5, 0.0), radius=0.2,
                           shift: float = 0.0) -> LevelSetField:
    """Box with a circular hole whose centre moves as ``center0 + velocity t``.

    ``shift`` displaces the centre along -x (the perturbation of the
    condition-number sweep).
    """
    c = np.asarray(center0, dtype=float).copy()
    c[0] -= shift
    return Negated(Ball(c, radius, velocity))


def moving_square_complement(center0=(1.5, 0.5), velocity=(0.5, 0.0),
                             half_width=0.2) -> LevelSetField:
    """Box with a square hole of side ``2 * half_width`` moving rigidly."""
    c = np.asarray(center0, dtype=float)
    return Negated(Box(c, np.full(len(c), half_width), velocity))


def two_disks(radius=0.5, offset=0.75) -> LevelSetField:
    """Two unit-speed disks travelling towards each other along the y axis."""
    lower = Ball((0.0, -offset), radius, velocity=(0.0, 1.0))
    upper = Ball((0.0, offset), radius, velocity=(0.0, -1.0))
    return Union(lower, upper)
