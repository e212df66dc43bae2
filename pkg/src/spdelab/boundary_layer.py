"""Boundary-layer cutoffs ``zeta_delta`` solving ``-delta^2 zeta'' + zeta = 1``, zero on the boundary.

Two tridiagonal discretisations are offered. ``"standard"`` replaces ``zeta''``
by the 3-point difference. ``"compact"`` (default) uses the fourth-order
Numerov weighting ``(z_{j-1} + 10 z_j + z_{j+1})/12`` on the zeroth-order
term; its error stays below ``h^2`` uniformly for ``delta >= 0.05`` whereas
the standard stencil's error constant grows like ``1/delta^2``. Both give an
M-matrix once ``delta^2/h^2 >= 1/12``, so ``0 <= zeta <= 1`` and
``Lap_h zeta <= 0`` hold nodally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .grid import Grid, GridFunction, laplacian_apply, pad_boundary


@dataclass(frozen=True)
class BoundaryLayer:
    delta: float
    zeta: GridFunction
    residual: float
    stencil: str = "compact"


def _system(grid: Grid, delta: float, stencil: str):
    n = grid.n_interior
    k = delta**2 / grid.h**2
    if stencil == "compact":
        off, mid = -k + 1.0 / 12.0, 2.0 * k + 10.0 / 12.0
    elif stencil == "standard":
        off, mid = -k, 2.0 * k + 1.0
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    lower = np.full((1, n), off)
    upper = np.full((1, n), off)
    diag = np.full((1, n), mid)
    return lower, diag, upper


def solve_zeta(grid: Grid, delta: float, stencil: str = "compact") -> BoundaryLayer:
    if delta <= 0:
        raise ValueError("delta must be positive")
    lower, diag, upper = _system(grid, delta, stencil)
    rhs = np.ones((1, grid.n_interior))
    z = _kernels.thomas_batch(lower, diag, upper, rhs)[0]
    zp = pad_boundary(z)
    applied = lower[0] * zp[:-2] + diag[0] * z + upper[0] * zp[2:]
    residual = float(np.max(np.abs(applied - 1.0)))
    return BoundaryLayer(delta, GridFunction(grid, z), residual, stencil)


def closed_form(x, delta: float, length: float = 1.0):
    """Exact solution on ``(0, L)``."""
    c = 0.5 * length
    return 1.0 - np.cosh((np.asarray(x) - c) / delta) / np.cosh(c / delta)


def layer_properties(layer: BoundaryLayer, slack: float = 1e-12) -> dict:
    z = layer.zeta.values
    lap = laplacian_apply(layer.zeta.grid, z)
    return {"min": float(z.min()), "max": float(z.max()), "max_laplacian": float(lap.max()),
            "bounded": bool(z.min() >= -slack and z.max() <= 1 + slack),
            "superharmonic": bool(np.all(lap * layer.zeta.grid.h**2 <= slack))}


def flux_integral(grid: Grid, phi: Callable, layer: BoundaryLayer) -> float:
    """``int phi * zeta' dx`` with ``zeta'`` on faces and ``phi`` at face midpoints."""
    faces = grid.h * (np.arange(grid.n_interior + 1) + 0.5)
    dz = np.diff(pad_boundary(layer.zeta.values))
    return float(np.sum(phi(faces) * dz))


def flux_limit_check(grid: Grid, phi: Callable, deltas, stencil: str = "compact") -> dict:
    """Flux integrals over a delta sequence and their extrapolated limit.

    In 1-D the limit is ``phi(0) - phi(L)``. The limit estimate fits
    ``a + b*delta`` through the two smallest deltas (the exact integral is
    affine in ``delta`` up to exponentially small terms for smooth ``phi``).
    """
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    values = np.array([flux_integral(grid, phi, solve_zeta(grid, d, stencil)) for d in deltas])
    target = float(phi(np.array([0.0]))[0] - phi(np.array([grid.length]))[0])
    if len(deltas) >= 2:
        d1, d2 = deltas[-2], deltas[-1]
        v1, v2 = values[-2], values[-1]
        limit = float(v2 - d2 * (v1 - v2) / (d1 - d2))
    else:
        limit = float(values[-1])
    scale = max(abs(target), 1.0)
    return {"deltas": deltas.tolist(), "values": values.tolist(), "target": target,
            "extrapolated": limit, "relative_error": abs(limit - target) / scale,
            "raw_relative_error": abs(values[-1] - target) / scale}
