"""Truncated cylindrical Wiener noise and the coefficient family sigma_i.

The coefficients are separable, ``sigma_i(x, xi) = lambda_i * g_i(x) * s(xi)``
with ``g_i`` the H-normalised Dirichlet eigenfunctions (so they vanish on the
boundary) and ``s`` a state profile. Brownian increments come from a
counter-based generator keyed by ``(seed, path_id, chunk)``; any step of any
path can be regenerated without touching the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.special

from . import _kernels
from .grid import Grid, GridFunction, _values, eigenvalues, norm

CHUNK = 256


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class StateProfile:
    s: Callable[[np.ndarray], np.ndarray]
    ds: Callable[[np.ndarray], np.ndarray]
    sup: float
    sup_derivative: float
    at_zero: float


PROFILES = {
    "one": StateProfile(lambda x: np.ones_like(x), lambda x: np.zeros_like(x), 1.0, 0.0, 1.0),
    "cos": StateProfile(np.cos, lambda x: -np.sin(x), 1.0, 1.0, 1.0),
    "sin": StateProfile(np.sin, np.cos, 1.0, 1.0, 0.0),
    "tanh": StateProfile(np.tanh, lambda x: 1.0 / np.cosh(x) ** 2, 1.0, 1.0, 0.0),
    "bounded_linear": StateProfile(lambda x: x / np.sqrt(1 + x * x),
                                   lambda x: (1 + x * x) ** -1.5, 1.0, 1.0, 0.0),
    # unbounded on purpose; used to exercise the growth gate
    "linear": StateProfile(lambda x: np.asarray(x, dtype=float), lambda x: np.ones_like(x),
                           np.inf, 1.0, 0.0),
}


@dataclass(frozen=True)
class NoiseSpec:
    grid: Grid
    mode: str = "multiplicative"
    n_modes: int | None = None
    lambda_bar: float = 1.0
    decay_q: float = 1.0
    state_profile: str = "cos"
    seed: int = 0

    def __post_init__(self):
        mode = self.mode.lower()
        if mode not in ("multiplicative", "additive"):
            raise NoiseError(f"noise mode must be multiplicative or additive, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.n_modes is None:
            object.__setattr__(self, "n_modes", min(64, self.grid.n_interior))
        if not 0 <= self.n_modes <= self.grid.n_interior:
            raise NoiseError(f"truncation N={self.n_modes} outside [0, {self.grid.n_interior}]")
        if self.lambda_bar < 0:
            raise NoiseError("lambda_bar must be non-negative")
        if self.decay_q <= 0.5:
            raise NoiseError("decay_q must exceed 1/2 for square-summable lambda_i")
        if mode == "additive":
            object.__setattr__(self, "state_profile", "one")
        if self.state_profile not in PROFILES:
            raise NoiseError(f"unknown state profile {self.state_profile!r}")

    @property
    def additive(self) -> bool:
        return self.mode == "additive"

    @property
    def profile(self) -> StateProfile:
        return PROFILES[self.state_profile]

    @property
    def lambdas(self) -> np.ndarray:
        i = np.arange(1, self.n_modes + 1)
        return self.lambda_bar * i ** (-self.decay_q)

    def spatial(self, x) -> np.ndarray:
        """``g_i(x)`` for every mode, shape ``(N, len(x))``."""
        L = self.grid.length
        i = np.arange(1, self.n_modes + 1)[:, None]
        return np.sqrt(2.0 / L) * np.sin(i * np.pi * np.atleast_1d(x)[None, :] / L)

    @cached_property
    def nodal_profiles(self) -> np.ndarray:
        """``lambda_i * g_i(x_j)``, shape ``(N, n)``."""
        return self.lambdas[:, None] * self.spatial(self.grid.x)

    @property
    def D_amplitude(self) -> float:
        return float(4.0 * np.sum(self.lambdas ** 2))

    @property
    def hypothesis_lambdas(self) -> np.ndarray:
        """Per-mode bounds on ``|sigma_i(x,0)| + |d_x sigma_i| + |d_xi sigma_i|``."""
        L = self.grid.length
        i = np.arange(1, self.n_modes + 1)
        g_sup = np.sqrt(2.0 / L) * np.ones_like(i, dtype=float)
        dg_sup = np.sqrt(2.0 / L) * i * np.pi / L
        prof = self.profile
        k = g_sup * abs(prof.at_zero) + dg_sup * prof.sup + g_sup * prof.sup_derivative
        return self.lambdas * k

    @property
    def D(self) -> float:
        """Hypothesis constant ``4 * sum(lambda_i^2)`` for the actual coefficient family."""
        return float(4.0 * np.sum(self.hypothesis_lambdas ** 2))

    @property
    def truncation_tail(self) -> float:
        """``sum_{i > N} lambda_i^2`` of the untruncated sequence."""
        return float(self.lambda_bar ** 2 * scipy.special.zeta(2 * self.decay_q, self.n_modes + 1))

    def diagnostics(self) -> dict:
        return {"D": self.D, "D_amplitude": self.D_amplitude,
                "truncation_tail": self.truncation_tail, "n_modes": self.n_modes,
                "coefficient_family": "artifact default: lambda_bar*i^-q * e_i(x) * s(xi)"}


def sigma_sq(spec: NoiseSpec, x, xi):
    """``Sigma^2(x, xi) = sum_i sigma_i(x, xi)^2``."""
    g = spec.spatial(x)
    amp = np.sum((spec.lambdas[:, None] * g) ** 2, axis=0)
    s = spec.profile.s(np.asarray(xi, dtype=float))
    out = amp * s ** 2
    return float(out[0]) if np.ndim(x) == 0 and np.ndim(xi) == 0 else out


def sigma_components(spec: NoiseSpec, x, xi) -> np.ndarray:
    """``sigma_i(x, xi)`` for every mode at paired points, shape ``(N, k)``."""
    g = spec.spatial(x)
    return spec.lambdas[:, None] * g * spec.profile.s(np.atleast_1d(np.asarray(xi, dtype=float)))[None, :]


# -- Brownian increments -----------------------------------------------------


def _path_key(seed: int, path_id: int) -> np.ndarray:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(path_id)]).generate_state(2, np.uint64)


@dataclass
class NoisePath:
    """Replayable Brownian increments ``dbeta_i^n ~ N(0, dt)`` for a set of paths."""

    seed: int
    n_modes: int
    dt: float
    steps: int
    path_ids: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    zero: bool = False

    def __post_init__(self):
        self.path_ids = np.atleast_1d(np.asarray(self.path_ids, dtype=np.int64))
        self._keys = {}

    @classmethod
    def for_spec(cls, spec: NoiseSpec, dt: float, steps: int, paths=1, *, offset: int = 0,
                 zero: bool = False) -> "NoisePath":
        ids = np.arange(offset, offset + paths) if np.ndim(paths) == 0 else paths
        return cls(spec.seed, spec.n_modes, dt, steps, ids, zero)

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)

    def _key(self, pid: int) -> np.ndarray:
        if pid not in self._keys:
            self._keys[pid] = _path_key(self.seed, pid)
        return self._keys[pid]

    def _chunk(self, pid: int, chunk: int) -> np.ndarray:
        bitgen = np.random.Philox(key=self._key(pid), counter=[0, 0, 0, chunk])
        return np.random.Generator(bitgen).standard_normal((CHUNK, self.n_modes))

    def block(self, start: int, stop: int, path_ids=None) -> np.ndarray:
        """Increments for steps ``start..stop-1``, shape ``(paths, stop-start, N)``."""
        if start < 0 or stop > self.steps or start > stop:
            raise NoiseError(f"steps [{start}, {stop}) outside path of {self.steps} steps")
        ids = self.path_ids if path_ids is None else np.atleast_1d(path_ids)
        out = np.zeros((len(ids), stop - start, self.n_modes))
        if self.zero or self.n_modes == 0 or stop == start:
            return out
        scale = np.sqrt(self.dt)
        for c in range(start // CHUNK, (stop - 1) // CHUNK + 1):
            lo, hi = max(start, c * CHUNK), min(stop, (c + 1) * CHUNK)
            for r, pid in enumerate(ids):
                out[r, lo - start:hi - start] = self._chunk(int(pid), c)[lo - c * CHUNK:hi - c * CHUNK]
        return out * scale

    def increment(self, step: int, path_index: int = 0) -> np.ndarray:
        return self.block(step, step + 1, self.path_ids[path_index:path_index + 1])[0, 0]


def noise_field(spec: NoiseSpec, dbeta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``sum_i sigma_i(x_j, u_j) dbeta_i`` for a batch: ``dbeta (B, N)``, ``u (B, n)``."""
    base = _kernels.synthesize(np.ascontiguousarray(dbeta), np.ascontiguousarray(spec.nodal_profiles))
    if spec.additive:
        return base
    return base * spec.profile.s(u)


def sample_increment(spec: NoiseSpec, path: NoisePath, step: int, u, path_index: int = 0):
    """One Euler-Maruyama noise increment on the grid."""
    if not 0 <= step < path.steps:
        raise NoiseError(f"step {step} outside path of {path.steps} steps")
    v = _values(u, spec.grid)
    db = path.increment(step, path_index)[None, :]
    out = noise_field(spec, db, v[None, :])[0]
    return GridFunction(spec.grid, out) if isinstance(u, GridFunction) else out


# -- growth gate -------------------------------------------------------------


def hilbert_schmidt_norm(spec: NoiseSpec, h: np.ndarray) -> np.ndarray:
    """``||sigma(h)||_{L2(U,H)}`` for a batch of fields."""
    h = np.atleast_2d(h)
    weight = np.sum(spec.nodal_profiles ** 2, axis=0)
    s = spec.profile.s(h)
    return np.sqrt(spec.grid.h * np.sum(weight[None, :] * s * s, axis=-1))


def random_fields(grid: Grid, count: int, rng: np.random.Generator, modes: int = 16,
                  amplitudes=(1e-2, 1e3)) -> np.ndarray:
    """Random smooth Dirichlet fields with log-uniform H norms."""
    k = min(modes, grid.n_interior)
    coef = rng.standard_normal((count, k)) / np.arange(1, k + 1)
    fields = coef @ (np.sqrt(2.0 / grid.length)
                     * np.sin(np.arange(1, k + 1)[:, None] * np.pi * grid.x[None, :] / grid.length))
    target = np.exp(rng.uniform(np.log(amplitudes[0]), np.log(amplitudes[1]), count))
    return fields * (target / norm(fields, "H", grid=grid))[:, None]


def check_sublinear_growth(spec: NoiseSpec, lam: float, alpha: float, c: float,
                           samples: int = 400, b0: float | None = None, seed: int = 0) -> dict:
    """Check ``||sigma(h)|| <= lam*||h|| + c*(1 + ||h||^alpha)`` on random fields.

    Also estimates the effective linear growth rate by regressing the HS norm on
    ``||h||_H`` over the upper half of the sampled norms, and compares both the
    supplied and estimated rates with ``sqrt(2*alpha_1*b0)``.
    """
    if not 0 < alpha < 1:
        raise NoiseError("growth exponent alpha must lie in (0, 1)")
    grid = spec.grid
    rng = np.random.default_rng(seed)
    hs = random_fields(grid, samples, rng)
    hn = norm(hs, "H", grid=grid)
    sn = hilbert_schmidt_norm(spec, hs)
    bound = lam * hn + c * (1.0 + hn ** alpha)
    holds = bool(np.all(sn <= bound * (1 + 1e-12)))
    big = hn >= np.median(hn)
    slope = float(np.polyfit(hn[big], sn[big], 1)[0]) if np.count_nonzero(big) > 2 else 0.0
    lam_est = max(slope, 0.0)
    alpha1 = float(eigenvalues(grid, 1)[0])
    out = {"bound_holds": holds, "lambda": lam, "lambda_estimate": lam_est,
           "max_excess": float(np.max(sn - bound)), "alpha1": alpha1}
    if b0 is not None:
        threshold = float(np.sqrt(2.0 * alpha1 * b0))
        out["threshold"] = threshold
        out["gate"] = bool(lam < threshold and lam_est < threshold)
        out["passes"] = holds and out["gate"]
    else:
        out["passes"] = holds
    return out


def stochastic_convolution(spec: NoiseSpec, dt: float, steps: int, path: NoisePath,
                           record_every: int = 1, threads: int = 1):
    """Linear heat SPDE ``dW = Lap W dt + sigma dw`` from zero, same scheme as the solver."""
    if not spec.additive:
        raise NoiseError("the stochastic convolution is defined for additive noise only")
    from .diffusion import constant
    from .stepper import SolverConfig, integrate
    cfg = SolverConfig(dt=dt, T=dt * steps, record_every=record_every)
    u0 = np.zeros((path.n_paths, spec.grid.n_interior))
    traj = integrate(u0, cfg, constant(1.0), spec, path, threads=threads)
    traj.diagnostics["h1_running_max"] = np.maximum.accumulate(traj.diagnostics["h1"], axis=1)
    return traj
