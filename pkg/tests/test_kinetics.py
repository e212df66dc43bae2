import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdelab import diffusion as d
from spdelab.grid import Grid
from spdelab.kinetics import (KineticAccumulator, KineticError, accumulate_dissipation,
                              dyadic_decay, dyadic_profile, kinetic_function, measure_bound_report,
                              moment_growth_slope, uniform_edges)
from spdelab.noise import NoisePath, NoiseSpec
from spdelab.stepper import SolverConfig, integrate


def test_kinetic_function():
    h, chi = kinetic_function(np.array([-1.0, 0.5, 2.0]), 1.0)
    np.testing.assert_array_equal(h, [0, 0, 1])
    np.testing.assert_array_equal(chi, [0, 0, 1])
    _, chi = kinetic_function(np.array([-1.0, 0.5]), -0.5)
    np.testing.assert_array_equal(chi, [-1, 0])


def test_single_face_deposit_splits_between_nodes():
    grid = Grid(1.0, 3)  # h = 0.25
    acc = KineticAccumulator(uniform_edges(-4, 4, 8), lambda v: np.ones_like(v), grid.h, 0.5, 1)
    acc.deposit(np.array([[0.0, 3.0, 0.0]]))
    hist = acc.histogram()
    # faces 2 and 3 carry g = +-12, each contributing h*dt*g^2 = 18
    assert hist.total[0] == pytest.approx(36.0)
    # node with u = 3 receives half of each face, u = 0 nodes the rest
    assert hist.n1[0, 7] == pytest.approx(18.0)
    assert hist.n1[0, 4] == pytest.approx(18.0)
    assert hist.band(1)[0] == pytest.approx(18.0)  # 2 <= 3 < 4
    assert hist.band_below[0] == pytest.approx(18.0)


@given(arrays(np.float64, (2, 12), elements=st.floats(-50, 50)))
def test_bins_bands_and_total_agree(u):
    grid = Grid(1.0, 12)
    acc = KineticAccumulator(uniform_edges(-10, 10, 20), lambda v: 1 + v * v, grid.h, 0.1, 2,
                             tau=0.3, l_range=(-3, 3))
    acc.deposit(u)
    hist = acc.histogram()
    band_total = hist.bands.sum(axis=1) + hist.band_below + hist.band_above
    np.testing.assert_allclose(band_total, hist.total, rtol=1e-12, atol=1e-12)
    assert np.all(hist.mass >= 0) and np.all(hist.n2 >= 0)
    assert hist.merge_paths().total[0] == pytest.approx(hist.total.sum())


def test_online_total_equals_dissipation_monitor():
    grid = Grid(1.0, 32)
    noise = NoiseSpec(grid, "multiplicative", n_modes=8)
    spec = d.porous_floor(1.0, 1.0, 3.0)
    cfg = SolverConfig(1e-3, 0.05, record_every=1, face_mean="arithmetic")
    path = NoisePath.for_spec(noise, cfg.dt, cfg.steps, 3)
    acc = KineticAccumulator(uniform_edges(-3, 3, 30), spec, grid.h, cfg.dt, 3)
    u0 = np.repeat(np.sin(np.pi * grid.x)[None], 3, 0)
    traj = integrate(u0, cfg, spec, noise, path, hooks=[acc])
    expected = cfg.dt * traj.diagnostics["dissipation"][:, 1:].sum(axis=1)
    np.testing.assert_allclose(acc.histogram().total, expected, rtol=1e-10)
    offline = accumulate_dissipation(traj, spec, uniform_edges(-3, 3, 30))
    np.testing.assert_allclose(offline.total, expected, rtol=1e-10)


def test_histogram_layout_checks():
    a = KineticAccumulator(uniform_edges(0, 1, 4), np.ones_like, 0.1, 0.1, 1).histogram()
    b = KineticAccumulator(uniform_edges(0, 2, 4), np.ones_like, 0.1, 0.1, 1).histogram()
    with pytest.raises(KineticError):
        a + b
    with pytest.raises(KineticError):
        a.band(-100)
    with pytest.raises(KineticError):
        uniform_edges(1, 0, 3)


def test_dyadic_and_moment_helpers():
    grid = Grid(1.0, 3)
    acc = KineticAccumulator(uniform_edges(-8, 8, 16), np.ones_like, grid.h, 1.0, 2, l_range=(0, 3))
    acc.deposit(np.array([[0.0, 3.0, 0.0], [0.0, 6.0, 0.0]]))
    hist = acc.histogram()
    assert dyadic_decay(hist, 1) == pytest.approx(0.5 * np.mean(hist.band(1)))
    levels, mean, se = dyadic_profile(hist)
    np.testing.assert_array_equal(levels, [0, 1, 2, 3])
    assert mean.shape == se.shape == (4,)
    rep = measure_bound_report(hist, 8.0, 1.0)
    assert rep["paths"] == 2 and rep["moment"] > 0
    assert moment_growth_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
