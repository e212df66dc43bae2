"""Time integration of ``du = d/dx(b(u) du/dx) dt + sigma(u) dw`` on a Dirichlet grid.

Everything is batched: a state is an array ``(B, n)`` of paths that advance in
lock-step. Rows are independent, so splitting a batch across threads gives the
same numbers as running it in one piece.

Default scheme (linearised implicit, coefficient frozen at the old state)::

    (I - dt * L_{a(u^n)}) u^{n+1} = u^n + sum_i sigma_i(u^n) dbeta_i^n

where ``L_a`` is the conservative stencil with face coefficients built from
``a = b`` (or its regularisation) at nodal values, boundary nodes included.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .diffusion import DiffusionSpec, coefficient_function, primitive_b
from .grid import Grid, GridFunction, _values, face_gradient, pad_boundary
from .noise import CHUNK, NoisePath, NoiseSpec, noise_field


class StepperError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    scheme: str = "implicit"
    regularization: str = "none"
    epsilon: Optional[float] = None
    tau: Optional[float] = None
    clip_threshold: Optional[float] = 1e6
    record_every: int = 1
    face_mean: str = "arithmetic"

    def __post_init__(self):
        if not self.dt > 0:
            raise StepperError("time step must be positive")
        if self.T < 0:
            raise StepperError("horizon must be non-negative")
        if self.scheme not in ("implicit", "explicit"):
            raise StepperError(f"unknown scheme {self.scheme!r}")
        if self.regularization not in ("none", "yosida", "viscous"):
            raise StepperError(f"unknown regularization {self.regularization!r}")
        if self.regularization == "yosida" and not (self.epsilon and self.epsilon > 0):
            raise StepperError("yosida regularization needs epsilon > 0")
        if self.regularization == "viscous" and not (self.tau and self.tau > 0):
            raise StepperError("viscous regularization needs tau > 0")
        if self.face_mean not in ("arithmetic", "harmonic"):
            raise StepperError(f"unknown face mean {self.face_mean!r}")
        if self.record_every < 1:
            raise StepperError("record_every must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Trajectory:
    """Snapshots and per-step diagnostics for a batch of paths.

    ``snapshots`` has shape ``(B, R, n)`` with ``R = 1 + steps // record_every``;
    each entry of ``diagnostics`` has shape ``(B, steps + 1)``. ``diverged_at``
    holds the first failing step per path, or ``-1``.
    """

    grid: Grid
    dt: float
    record_every: int
    start_step: int
    snapshots: np.ndarray
    diagnostics: dict
    diverged_at: np.ndarray
    path_ids: np.ndarray
    weak_residual: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.snapshots.shape[0]

    @property
    def steps(self) -> int:
        return next(iter(self.diagnostics.values())).shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.snapshots.shape[1]) * self.record_every
        return (self.start_step + k) * self.dt

    @property
    def step_times(self) -> np.ndarray:
        return (self.start_step + np.arange(self.steps + 1)) * self.dt

    @property
    def completed(self) -> np.ndarray:
        return self.diverged_at < 0

    def status(self, i: int = 0) -> str:
        k = int(self.diverged_at[i])
        return "Completed" if k < 0 else f"Diverged({k})"

    def snapshot(self, r: int, i: int = 0) -> GridFunction:
        return GridFunction(self.grid, self.snapshots[i, r])

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[:, -1]


# -- discrete operators ------------------------------------------------------


def face_coefficients(a_pad: np.ndarray, mean: str = "arithmetic") -> np.ndarray:
    """Face values from nodal values including boundary nodes, ``(B, n+2) -> (B, n+1)``."""
    left, right = a_pad[..., :-1], a_pad[..., 1:]
    if mean == "arithmetic":
        return 0.5 * (left + right)
    with np.errstate(divide="ignore", invalid="ignore"):
        hm = 2.0 * left * right / (left + right)
    return np.where(left + right > 0, hm, 0.0)


def apply_operator(faces: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """Conservative ``d/dx(a du/dx)`` given face coefficients."""
    flux = faces * face_gradient(u, h)
    return np.diff(flux, axis=-1) / h


def implicit_solve(faces: np.ndarray, rhs: np.ndarray, dt: float, h: float) -> np.ndarray:
    k = dt / h**2
    lower = np.ascontiguousarray(faces[:, :-1]) * -k
    upper = np.ascontiguousarray(faces[:, 1:]) * -k
    diag = 1.0 - (lower + upper)
    return _kernels.thomas_batch(lower, diag, upper, np.ascontiguousarray(rhs))


def dissipation(faces: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """``sum_faces h * a * |grad u|^2``: the discrete ``int b(u)|u_x|^2``."""
    g = face_gradient(u, h)
    return h * np.sum(faces * g * g, axis=-1)


# -- engine ------------------------------------------------------------------


@dataclass
class _Setup:
    grid: Grid
    cfg: SolverConfig
    coeff: Callable
    model_coeff: Callable
    noise: NoiseSpec
    path: NoisePath
    monitors: dict
    hooks: list
    weak_phi: Optional[np.ndarray]
    primitive: Optional[Callable]


DEFAULT_MONITORS = ("l1", "h", "h1", "dissipation")


def _default_monitors(u: np.ndarray, faces: np.ndarray, h: float) -> dict:
    g2 = face_gradient(u, h) ** 2
    return {"l1": h * np.sum(np.abs(u), axis=-1),
            "h": np.sqrt(h * np.sum(u * u, axis=-1)),
            "h1": np.sqrt(h * np.sum(g2, axis=-1)),
            "dissipation": h * np.sum(faces * g2, axis=-1)}


def _run_rows(setup: _Setup, u0: np.ndarray, ids: np.ndarray, start_step: int):
    grid, cfg = setup.grid, setup.cfg
    h, dt = grid.h, cfg.dt
    steps = cfg.steps
    B, n = u0.shape
    n_rec = 1 + steps // cfg.record_every
    snaps = np.zeros((B, n_rec, n))
    names = list(DEFAULT_MONITORS) + list(setup.monitors)
    diag = {k: np.full((B, steps + 1), np.nan) for k in names}
    diverged = np.full(B, -1, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    a_zero = float(np.asarray(setup.coeff(np.zeros(1)))[0])
    explicit = cfg.scheme == "explicit"
    weak = np.zeros(B) if setup.weak_phi is not None else None
    if weak is not None:
        phi = setup.weak_phi
        dphi = face_gradient(phi, h)
        weak -= h * np.sum(u0 * phi, axis=-1)

    def faces_of(u):
        a = setup.coeff(u)
        a_pad = np.empty((u.shape[0], n + 2))
        a_pad[:, 0] = a_zero
        a_pad[:, -1] = a_zero
        a_pad[:, 1:-1] = a
        return face_coefficients(a_pad, cfg.face_mean)

    def record(k, u, faces):
        vals = _default_monitors(u, faces, h)
        for name, f in setup.monitors.items():
            vals[name] = f(u)
        for name in names:
            diag[name][:, k] = np.where(alive, vals[name], np.nan)

    u = np.array(u0, dtype=float)
    faces = faces_of(u)
    snaps[:, 0] = u
    record(0, u, faces)

    uniq, inverse = np.unique(ids, return_inverse=True)
    first = start_step
    last = start_step + steps
    chunk_lo = first
    while chunk_lo < last:
        chunk_hi = min(last, (chunk_lo // CHUNK + 1) * CHUNK)
        dB = setup.path.block(chunk_lo, chunk_hi, uniq)
        for s in range(chunk_hi - chunk_lo):
            k = chunk_lo + s - start_step
            inc = noise_field(setup.noise, dB[inverse, s], u)
            if explicit:
                if dt * np.max(faces) / h**2 > 0.5:
                    bad = alive & (dt * np.max(faces, axis=1) / h**2 > 0.5)
                    diverged[bad & (diverged < 0)] = k + 1
                new = u + dt * apply_operator(faces, u, h) + inc
            else:
                new = implicit_solve(faces, u + inc, dt, h)
            if weak is not None:
                bp = pad_boundary(setup.primitive(new))
                weak += dt * np.sum(np.diff(bp, axis=-1) * dphi, axis=-1)
                weak -= h * np.sum(phi * inc, axis=-1)
            bad = ~np.all(np.isfinite(new), axis=1)
            if cfg.clip_threshold is not None:
                with np.errstate(invalid="ignore"):
                    bad |= np.max(np.abs(new), axis=1) > cfg.clip_threshold
            newly = alive & (bad | (diverged >= 0))
            if np.any(newly):
                diverged[newly & (diverged < 0)] = k + 1
                alive &= ~newly
            new[~alive] = 0.0
            u = new
            faces = faces_of(u)
            record(k + 1, u, faces)
            for hook in setup.hooks:
                hook(k + 1, u, alive)
            if (k + 1) % cfg.record_every == 0:
                snaps[:, (k + 1) // cfg.record_every] = np.where(alive[:, None], u, np.nan)
        chunk_lo = chunk_hi
    if weak is not None:
        weak += h * np.sum(u * phi, axis=-1)
        weak[~alive] = np.nan
    return snaps, diag, diverged, weak


def _as_batch(u0, grid: Grid) -> tuple[np.ndarray, bool]:
    if isinstance(u0, GridFunction):
        return u0.values[None, :].copy(), True
    v = np.asarray(u0, dtype=float)
    if v.ndim == 1:
        return _values(v, grid)[None, :].copy(), True
    return _values(v, grid).copy(), False


def integrate(u0, cfg: SolverConfig, diffusion: DiffusionSpec, noise: NoiseSpec,
              path: NoisePath, *, path_ids=None, monitors: dict | None = None,
              hooks=(), threads: int = 1, start_step: int = 0,
              weak_test: bool = False) -> Trajectory:
    """Advance one or many initial states; row ``r`` is driven by ``path_ids[r]``.

    ``monitors`` maps names to ``f(u_batch) -> (B,)`` and is evaluated every
    step. ``hooks`` are called as ``hook(step, u_batch, alive)`` after every step
    and must only read their arguments (used for online kinetic accumulation;
    with ``threads > 1`` hooks see sub-batches and need a per-thread factory,
    so they are rejected). ``weak_test`` accumulates the weak-form residual
    against the first continuum eigenfunction.
    """
    grid = noise.grid
    U0, _ = _as_batch(u0, grid)
    ids = path.path_ids if path_ids is None else np.atleast_1d(np.asarray(path_ids, dtype=np.int64))
    if len(ids) != U0.shape[0]:
        raise StepperError(f"{U0.shape[0]} initial states but {len(ids)} noise paths")
    if path.n_modes != noise.n_modes or not math.isclose(path.dt, cfg.dt):
        raise StepperError("noise path does not match the noise spec / time step")
    if start_step + cfg.steps > path.steps:
        raise StepperError("noise path shorter than the requested horizon")
    coeff = coefficient_function(diffusion, cfg.regularization, epsilon=cfg.epsilon, tau=cfg.tau,
                                 cache_range=max(50.0, 4 * float(np.max(np.abs(U0), initial=1.0))))
    if cfg.scheme == "explicit":
        r = np.linspace(-2 * np.max(np.abs(U0), initial=1.0), 2 * np.max(np.abs(U0), initial=1.0), 2001)
        if cfg.dt * float(np.max(coeff(r))) / grid.h**2 > 0.5:
            raise StepperError("explicit scheme violates the CFL guard dt*max(b)/h^2 <= 1/2")
    phi = None
    prim = None
    if weak_test:
        phi = np.sqrt(2.0 / grid.length) * np.sin(np.pi * grid.x / grid.length)
        if cfg.regularization == "viscous":
            prim = lambda v: primitive_b(diffusion, v) + cfg.tau * v
        else:
            prim = lambda v: primitive_b(diffusion, v)
    setup = _Setup(grid, cfg, coeff, diffusion, noise, path, dict(monitors or {}), list(hooks),
                   phi, prim)
    threads = max(1, int(threads))
    if threads > 1 and hooks:
        raise StepperError("hooks are not supported with threads > 1")
    if threads == 1 or U0.shape[0] < 2:
        parts = [_run_rows(setup, U0, ids, start_step)]
    else:
        splits = np.array_split(np.arange(U0.shape[0]), min(threads, U0.shape[0]))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_rows, setup, U0[s], ids[s], start_step) for s in splits]
            parts = [f.result() for f in futures]
    snaps = np.concatenate([p[0] for p in parts])
    diag = {k: np.concatenate([p[1][k] for p in parts]) for k in parts[0][1]}
    diverged = np.concatenate([p[2] for p in parts])
    weak = np.concatenate([p[3] for p in parts]) if weak_test else None
    return Trajectory(grid, cfg.dt, cfg.record_every, start_step, snaps, diag, diverged, ids, weak)


def integrate_coupled(u0s, cfg: SolverConfig, diffusion: DiffusionSpec, noise: NoiseSpec,
                      path: NoisePath, **kwargs) -> list[Trajectory]:
    """Integrate several initial data, every one driven by the same noise paths.

    Each entry of ``u0s`` is either a single field (broadcast over all paths of
    ``path``) or a ``(paths, n)`` batch.
    """
    grid = noise.grid
    P = path.n_paths
    blocks = []
    for u in u0s:
        U, single = _as_batch(u, grid)
        if single:
            U = np.repeat(U, P, axis=0)
        if U.shape[0] != P:
            raise StepperError("each coupled initial batch must have one row per noise path")
        blocks.append(U)
    stacked = np.concatenate(blocks)
    ids = np.tile(path.path_ids, len(blocks))
    traj = integrate(stacked, cfg, diffusion, noise, path, path_ids=ids, **kwargs)
    out = []
    for k in range(len(blocks)):
        sl = slice(k * P, (k + 1) * P)
        out.append(Trajectory(
            traj.grid, traj.dt, traj.record_every, traj.start_step, traj.snapshots[sl],
            {name: v[sl] for name, v in traj.diagnostics.items()}, traj.diverged_at[sl],
            traj.path_ids[sl], None if traj.weak_residual is None else traj.weak_residual[sl]))
    return out


def step(u, cfg: SolverConfig, diffusion: DiffusionSpec, noise_increment) -> np.ndarray:
    """Single step from explicit arrays (no noise generation); mostly for tests."""
    grid = u.grid if isinstance(u, GridFunction) else None
    v = np.atleast_2d(_values(u))
    inc = np.atleast_2d(_values(noise_increment))
    if grid is None:
        raise StepperError("step needs a GridFunction to know the grid")
    coeff = coefficient_function(diffusion, cfg.regularization, epsilon=cfg.epsilon, tau=cfg.tau)
    a_zero = float(np.asarray(coeff(np.zeros(1)))[0])
    a_pad = np.concatenate([np.full((v.shape[0], 1), a_zero), coeff(v),
                            np.full((v.shape[0], 1), a_zero)], axis=1)
    faces = face_coefficients(a_pad, cfg.face_mean)
    if cfg.scheme == "explicit":
        if cfg.dt * np.max(faces) / grid.h**2 > 0.5:
            raise StepperError("explicit scheme violates the CFL guard")
        new = v + cfg.dt * apply_operator(faces, v, grid.h) + inc
    else:
        new = implicit_solve(faces, v + inc, cfg.dt, grid.h)
    if not np.all(np.isfinite(new)):
        raise StepperError("step produced non-finite values")
    return GridFunction(grid, new[0])


def continue_config(cfg: SolverConfig, T: float) -> SolverConfig:
    return replace(cfg, T=T)
