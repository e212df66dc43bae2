"""Kinetic-formulation diagnostics on discrete trajectories.

The parabolic dissipation measure concentrates ``b(u)|u_x|^2`` on the graph
``xi = u(t, x)``. Here each step deposits, for every node (boundary nodes
included, where ``u = 0``), the weight ``h*dt*b(u_j)*(g_left^2 + g_right^2)/2``
into the xi-bin holding ``u_j``; ``g`` are the face differences on either
side. Every face therefore contributes exactly ``h*dt*b*g^2`` in total, split
between its two end nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid import GridFunction, _values, face_gradient, pad_boundary


class KineticError(ValueError):
    pass


def kinetic_function(u, xi: float) -> tuple[np.ndarray, np.ndarray]:
    """``h = 1_{u > xi}`` and ``chi = h - 1_{0 > xi}`` nodewise."""
    v = _values(u)
    h = (v > xi).astype(float)
    return h, h - float(0.0 > xi)


@dataclass
class KineticHistogram:
    """Dissipation mass per xi-bin and per dyadic band, one row per path.

    ``n1`` is the parabolic part, ``n2`` the viscous part (zero unless the run
    used a viscous regularisation). Deposits outside the bin range are kept in
    ``underflow``/``overflow`` so totals never depend on the bin layout.
    Band ``l`` collects ``2^l <= |xi| < 2^(l+1)`` for ``l_min <= l <= l_max``;
    ``band_below``/``band_above`` hold the rest.
    """

    edges: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    underflow: np.ndarray
    overflow: np.ndarray
    bands: np.ndarray
    band_below: np.ndarray
    band_above: np.ndarray
    l_min: int
    l_max: int

    @property
    def n_paths(self) -> int:
        return self.n1.shape[0]

    @property
    def mass(self) -> np.ndarray:
        return self.n1 + self.n2

    @property
    def total(self) -> np.ndarray:
        return self.mass.sum(axis=1) + self.underflow + self.overflow

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.l_min, self.l_max + 1)

    def band(self, l: int) -> np.ndarray:
        if l < self.l_min:
            raise KineticError(f"band {l} below the tracked range starting at {self.l_min}")
        if l > self.l_max:
            return self.band_above if l == self.l_max + 1 else np.zeros(self.n_paths)
        return self.bands[:, l - self.l_min]

    def __add__(self, other: "KineticHistogram") -> "KineticHistogram":
        if not (np.array_equal(self.edges, other.edges) and self.l_min == other.l_min
                and self.l_max == other.l_max):
            raise KineticError("histograms have different layouts")
        return KineticHistogram(self.edges, self.n1 + other.n1, self.n2 + other.n2,
                                self.underflow + other.underflow, self.overflow + other.overflow,
                                self.bands + other.bands, self.band_below + other.band_below,
                                self.band_above + other.band_above, self.l_min, self.l_max)

    def merge_paths(self) -> "KineticHistogram":
        """Collapse all paths into one row (sum)."""
        def s(a):
            return a.sum(axis=0, keepdims=True)
        return KineticHistogram(self.edges, s(self.n1), s(self.n2), s(self.underflow),
                                s(self.overflow), s(self.bands), s(self.band_below),
                                s(self.band_above), self.l_min, self.l_max)

    def summary(self) -> dict:
        return {
            "paths": self.n_paths,
            "total_mean": float(np.mean(self.total)),
            "n1_mean": float(np.mean(self.n1.sum(axis=1))),
            "n2_mean": float(np.mean(self.n2.sum(axis=1))),
            "bands": {int(l): float(np.mean(self.bands[:, i])) for i, l in enumerate(self.levels)},
            "band_below": float(np.mean(self.band_below)),
            "band_above": float(np.mean(self.band_above)),
        }


def uniform_edges(lo: float, hi: float, n_bins: int) -> np.ndarray:
    if not hi > lo or n_bins < 1:
        raise KineticError("need hi > lo and at least one bin")
    return np.linspace(lo, hi, n_bins + 1)


class KineticAccumulator:
    """Online histogram builder, usable as a stepper hook.

    ``coeff`` is the model coefficient deposited into ``n1``; ``tau`` (if given)
    deposits ``tau*|u_x|^2`` into ``n2``.
    """

    def __init__(self, edges: np.ndarray, coeff: Callable, h: float, dt: float, n_paths: int,
                 tau: float | None = None, l_range: tuple[int, int] = (-16, 16)):
        self.edges = np.asarray(edges, dtype=float)
        self.coeff = coeff
        self.h = h
        self.dt = dt
        self.tau = tau
        self.l_min, self.l_max = l_range
        nb = len(self.edges) - 1
        nl = self.l_max - self.l_min + 1
        self.n1 = np.zeros((n_paths, nb))
        self.n2 = np.zeros((n_paths, nb))
        self.under = np.zeros(n_paths)
        self.over = np.zeros(n_paths)
        self.bands = np.zeros((n_paths, nl))
        self.below = np.zeros(n_paths)
        self.above = np.zeros(n_paths)

    def node_weights(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-node gradient weight ``h*(g_left^2 + g_right^2)/2`` and padded values."""
        g2 = face_gradient(u, self.h) ** 2
        B = u.shape[0]
        left = np.concatenate([np.zeros((B, 1)), g2], axis=1)
        right = np.concatenate([g2, np.zeros((B, 1))], axis=1)
        return 0.5 * self.h * (left + right), pad_boundary(u)

    def deposit(self, u: np.ndarray, alive: np.ndarray | None = None, weight: float | None = None):
        u = np.atleast_2d(u)
        dt = self.dt if weight is None else weight
        w, vals = self.node_weights(u)
        m1 = dt * self.coeff(vals) * w
        if alive is not None:
            m1 = m1 * alive[:, None]
        self._bin(vals, m1, self.n1)
        self._band(vals, m1)
        if self.tau is not None:
            m2 = dt * self.tau * w
            if alive is not None:
                m2 = m2 * alive[:, None]
            self._bin(vals, m2, self.n2)
            self._band(vals, m2)

    def __call__(self, step: int, u: np.ndarray, alive: np.ndarray):
        self.deposit(u, alive)

    def _bin(self, vals, mass, target):
        lo, hi = self.edges[0], self.edges[-1]
        nb = len(self.edges) - 1
        B = vals.shape[0]
        idx = np.searchsorted(self.edges, vals, side="right") - 1
        under = vals < lo
        over = vals >= hi
        self.under += np.sum(np.where(under, mass, 0.0), axis=1)
        self.over += np.sum(np.where(over, mass, 0.0), axis=1)
        inside = ~(under | over)
        flat = (np.arange(B)[:, None] * nb + np.clip(idx, 0, nb - 1))[inside]
        target += np.bincount(flat, weights=mass[inside], minlength=B * nb).reshape(B, nb)

    def _band(self, vals, mass):
        _, expo = np.frexp(np.abs(vals))
        level = expo - 1  # floor(log2|xi|) for xi != 0
        zero = vals == 0
        below = zero | (level < self.l_min)
        above = ~zero & (level > self.l_max)
        self.below += np.sum(np.where(below, mass, 0.0), axis=1)
        self.above += np.sum(np.where(above, mass, 0.0), axis=1)
        nl = self.l_max - self.l_min + 1
        B = vals.shape[0]
        inside = ~(below | above)
        flat = (np.arange(B)[:, None] * nl + np.clip(level - self.l_min, 0, nl - 1))[inside]
        self.bands += np.bincount(flat, weights=mass[inside], minlength=B * nl).reshape(B, nl)

    def histogram(self) -> KineticHistogram:
        return KineticHistogram(self.edges.copy(), self.n1.copy(), self.n2.copy(), self.under.copy(),
                                self.over.copy(), self.bands.copy(), self.below.copy(),
                                self.above.copy(), self.l_min, self.l_max)


def accumulate_dissipation(traj, diffusion, edges: np.ndarray, tau: float | None = None,
                           l_range: tuple[int, int] = (-16, 16)) -> KineticHistogram:
    """Histogram from stored snapshots.

    Each recorded state after the first deposits with weight ``dt*record_every``
    (right-endpoint rule, the time level at which the implicit step evaluates
    the dissipation). With ``record_every = 1`` this equals online accumulation.
    """
    if traj.snapshots.shape[1] < 2:
        raise KineticError("trajectory has no steps to accumulate")
    if not np.all(traj.completed):
        raise KineticError("trajectory contains diverged paths")
    acc = KineticAccumulator(edges, diffusion, traj.grid.h, traj.dt, traj.n_paths, tau, l_range)
    weight = traj.dt * traj.record_every
    for r in range(1, traj.snapshots.shape[1]):
        acc.deposit(traj.snapshots[:, r], weight=weight)
    return acc.histogram()


def dyadic_decay(histo: KineticHistogram, l: int) -> float:
    """``2^{-l} * m(A_{2^l})`` averaged over the paths of the histogram."""
    return float(np.mean(histo.band(l)) * 2.0 ** (-l))


def dyadic_profile(histo: KineticHistogram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Levels, ensemble mean of ``2^{-l} m(A_{2^l})`` and its standard error."""
    levels = histo.levels
    vals = histo.bands * 2.0 ** (-levels[None, :].astype(float))
    se = vals.std(axis=0, ddof=1) / np.sqrt(histo.n_paths) if histo.n_paths > 1 else np.zeros(len(levels))
    return levels, vals.mean(axis=0), se


def band_limited_mass(histo: KineticHistogram, k: float) -> np.ndarray:
    """Per-path mass of bins whose centres lie in ``[-k, k]``."""
    centres = 0.5 * (histo.edges[1:] + histo.edges[:-1])
    sel = np.abs(centres) <= k
    return histo.mass[:, sel].sum(axis=1)


def measure_bound_report(histos, k: float, p: float) -> dict:
    """Empirical ``E |m([0,T] x O x [-k,k])|^p`` with a Monte Carlo standard error."""
    if isinstance(histos, KineticHistogram):
        histos = [histos]
    if not histos:
        raise KineticError("empty ensemble")
    masses = np.concatenate([band_limited_mass(hh, k) for hh in histos])
    vals = masses ** p
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return {"k": k, "p": p, "moment": float(vals.mean()), "stderr": se, "paths": len(vals)}


def moment_growth_slope(u0_norms, moments) -> float:
    """Log-log slope of band-mass moments against the initial L1 norms."""
    x = np.log(np.asarray(u0_norms, dtype=float))
    y = np.log(np.maximum(np.asarray(moments, dtype=float), 1e-300))
    return float(np.polyfit(x, y, 1)[0])
