"""Uniform 1-D Dirichlet grid, discrete operators and norms.

Fields are stored on interior nodes only; the two boundary nodes are implicit
zeros. Every inner product carries the spacing weight ``h`` so discrete norms
converge to their continuum counterparts under refinement.

Most functions accept either a :class:`GridFunction` or a raw ndarray whose
last axis runs over interior nodes, so batches of paths ``(B, n)`` can be
handled without wrapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.fft


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    length: float
    n_interior: int

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0:
            raise GridError(f"domain length must be positive, got {self.length}")
        if int(self.n_interior) != self.n_interior or self.n_interior < 3:
            raise GridError(f"need at least 3 interior nodes, got {self.n_interior}")

    @property
    def h(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_interior + 1)

    @property
    def x_full(self) -> np.ndarray:
        """Node coordinates including both boundary nodes."""
        return self.h * np.arange(self.n_interior + 2)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_interior))

    def sample(self, f) -> "GridFunction":
        """Evaluate a vectorised callable at the interior nodes."""
        return GridFunction(self, np.asarray(f(self.x), dtype=float) * np.ones(self.n_interior))


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_interior,):
            raise GridError(
                f"values have shape {v.shape}, grid expects ({self.grid.n_interior},)")
        if not np.all(np.isfinite(v)):
            raise GridError("grid function has non-finite entries")
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def padded(self) -> np.ndarray:
        return pad_boundary(self.values)

    def __add__(self, other):
        return self.with_values(self.values + _values(other, self.grid))

    def __sub__(self, other):
        return self.with_values(self.values - _values(other, self.grid))

    def __mul__(self, scalar: float):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


FieldLike = Union[GridFunction, np.ndarray]


def _values(f: FieldLike, grid: Grid | None = None) -> np.ndarray:
    if isinstance(f, GridFunction):
        if grid is not None and f.grid != grid:
            raise GridError("grid functions live on different grids")
        return f.values
    v = np.asarray(f, dtype=float)
    if grid is not None and v.shape[-1] != grid.n_interior:
        raise GridError(f"last axis {v.shape[-1]} does not match grid ({grid.n_interior})")
    return v


def _spacing(f: FieldLike, grid: Grid | None) -> float:
    if grid is None:
        if not isinstance(f, GridFunction):
            raise GridError("raw arrays need an explicit grid")
        grid = f.grid
    return grid.h


def build_grid(length: float, n_interior: int) -> Grid:
    return Grid(float(length), int(n_interior))


def pad_boundary(v: np.ndarray) -> np.ndarray:
    """Append the Dirichlet zeros on both ends of the last axis."""
    pad = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
    return np.pad(v, pad)


def face_gradient(v: np.ndarray, h: float) -> np.ndarray:
    """Forward differences across all ``n + 1`` faces, boundary gaps included."""
    return np.diff(pad_boundary(v), axis=-1) / h


def inner(f: FieldLike, g: FieldLike, grid: Grid | None = None) -> np.ndarray | float:
    h = _spacing(f, grid)
    return h * np.sum(_values(f) * _values(g), axis=-1)


def laplacian_apply(grid: Grid, f: FieldLike) -> FieldLike:
    """Second-difference stencil with ghost zeros at both ends."""
    v = _values(f, grid)
    p = pad_boundary(v)
    out = (p[..., :-2] - 2.0 * p[..., 1:-1] + p[..., 2:]) / grid.h**2
    return GridFunction(grid, out) if isinstance(f, GridFunction) else out


def laplacian_matrix(grid: Grid) -> np.ndarray:
    """Dense stencil matrix; only meant for oracles and small grids."""
    n = grid.n_interior
    m = -2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    return m / grid.h**2


def eigenvalues(grid: Grid, k: int | None = None) -> np.ndarray:
    """Ascending eigenvalues of the negative discrete Dirichlet Laplacian."""
    n = grid.n_interior if k is None else k
    i = np.arange(1, n + 1)
    return (4.0 / grid.h**2) * np.sin(i * np.pi * grid.h / (2.0 * grid.length)) ** 2


def eigenvectors(grid: Grid, k: int | None = None) -> np.ndarray:
    """Rows are H-orthonormal eigenvectors sampled at interior nodes."""
    n = grid.n_interior if k is None else k
    i = np.arange(1, n + 1)[:, None]
    return np.sqrt(2.0 / grid.length) * np.sin(i * np.pi * grid.x[None, :] / grid.length)


def eigenpairs(grid: Grid, k: int) -> list[tuple[float, GridFunction]]:
    if k < 1 or k > grid.n_interior:
        raise GridError(f"requested {k} eigenpairs on a grid with {grid.n_interior} nodes")
    alphas = eigenvalues(grid, k)
    vecs = eigenvectors(grid, k)
    return [(float(a), GridFunction(grid, e)) for a, e in zip(alphas, vecs)]


def spectral_coefficients(grid: Grid, f: FieldLike) -> np.ndarray:
    """Coefficients ``<f, e_i>_H`` for all ``n`` modes (fast sine transform)."""
    v = _values(f, grid)
    return 0.5 * grid.h * np.sqrt(2.0 / grid.length) * scipy.fft.dst(v, type=1, axis=-1)


def norm(f: FieldLike, which: str = "H", *, p: float = 2.0, delta: float = 1.0,
         grid: Grid | None = None):
    """Discrete norms used throughout the estimates.

    ``which`` is one of ``"L1"``, ``"Lp"`` (with ``p``), ``"H"`` (the L2 norm),
    ``"H1"`` (gradient norm over all faces) or ``"Hminus"`` (spectral H^{-delta}).
    Batched arrays reduce over the last axis.
    """
    if grid is None:
        grid = f.grid if isinstance(f, GridFunction) else None
    h = _spacing(f, grid)
    v = _values(f)
    key = which.upper()
    if key == "L1":
        return h * np.sum(np.abs(v), axis=-1)
    if key == "LP":
        if p < 1:
            raise GridError(f"Lp norm needs p >= 1, got {p}")
        return (h * np.sum(np.abs(v) ** p, axis=-1)) ** (1.0 / p)
    if key in ("H", "L2"):
        return np.sqrt(h * np.sum(v * v, axis=-1))
    if key == "H1":
        g = face_gradient(v, h)
        return np.sqrt(h * np.sum(g * g, axis=-1))
    if key == "HMINUS":
        if delta <= 0:
            raise GridError(f"H^-delta needs delta > 0, got {delta}")
        c = spectral_coefficients(grid, v)
        a = eigenvalues(grid)
        return np.sqrt(np.sum(a ** (-delta) * c * c, axis=-1))
    raise GridError(f"unknown norm {which!r}")


def positive_part_gap(f: FieldLike, g: FieldLike, grid: Grid | None = None):
    """``||(f - g)^+||_{L1}``."""
    h = _spacing(f, grid)
    return h * np.sum(np.maximum(_values(f) - _values(g), 0.0), axis=-1)
