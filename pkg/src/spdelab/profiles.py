"""Named initial data, built from call-syntax descriptors such as ``bump(amp=2, width=0.2)``."""

from __future__ import annotations

import numpy as np

from .grid import Grid, GridFunction, norm


class ProfileError(ValueError):
    pass


def _bump_shape(x, center, width):
    z = (x - center) / width
    out = np.zeros_like(x)
    inside = np.abs(z) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


def bump(grid: Grid, amp=1.0, center=None, width=0.3):
    """Smooth compactly supported bump of height ``amp`` (needs support inside the domain)."""
    c = 0.5 * grid.length if center is None else center * grid.length
    w = width * grid.length
    if c - w < 0 or c + w > grid.length or w <= 0:
        raise ProfileError("bump support must lie inside the domain")
    return amp * _bump_shape(grid.x, c, w)


def two_bump(grid: Grid, amp1=1.0, c1=0.3, amp2=-1.0, c2=0.7, width=0.2):
    return bump(grid, amp1, c1, width) + bump(grid, amp2, c2, width)


def step(grid: Grid, amp=1.0, left=0.25, right=0.75):
    x = grid.x / grid.length
    return np.where((x >= left) & (x <= right), float(amp), 0.0)


def sine(grid: Grid, amp=1.0, mode=1):
    return amp * np.sin(int(mode) * np.pi * grid.x / grid.length)


def constant(grid: Grid, value=1.0):
    return np.full(grid.n_interior, float(value))


def zero(grid: Grid):
    return np.zeros(grid.n_interior)


def random_h1(grid: Grid, amp=1.0, modes=16, seed=0):
    """Random smooth field with ``||u||_H = amp``."""
    rng = np.random.default_rng(seed)
    k = np.arange(1, int(modes) + 1)
    coef = rng.standard_normal(len(k)) / k**2
    v = coef @ np.sin(k[:, None] * np.pi * grid.x[None, :] / grid.length)
    return amp * v / norm(v, "H", grid=grid)


PROFILES = {"bump": bump, "two_bump": two_bump, "step": step, "sine": sine,
            "constant": constant, "zero": zero, "random_h1": random_h1}


def build_profile(grid: Grid, descriptor: str) -> GridFunction:
    from .config import ConfigError, parse_call
    name, args, kwargs = parse_call(descriptor)
    if name not in PROFILES:
        raise ConfigError(f"unknown initial profile {name!r}; choose from {sorted(PROFILES)}")
    try:
        values = PROFILES[name](grid, *args, **kwargs)
    except (TypeError, ProfileError) as exc:
        raise ConfigError(f"initial profile {descriptor!r}: {exc}") from None
    return GridFunction(grid, np.asarray(values, dtype=float))


def scale_to(u: GridFunction, which: str, target: float, p: float = 2.0) -> GridFunction:
    """Rescale ``u`` so that its ``which``-norm equals ``target``."""
    current = float(norm(u, which, p=p))
    if current == 0:
        if target == 0:
            return u
        raise ProfileError("cannot rescale a zero profile to a non-zero norm")
    return u * (target / current)
