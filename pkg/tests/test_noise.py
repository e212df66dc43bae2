import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelab.grid import Grid, eigenvectors, norm
from spdelab.noise import (CHUNK, NoiseError, NoisePath, NoiseSpec, check_sublinear_growth,
                           hilbert_schmidt_norm, noise_field, sample_increment, sigma_components,
                           sigma_sq, stochastic_convolution)


def test_spec_defaults_and_validation(grid):
    spec = NoiseSpec(grid)
    assert spec.n_modes == grid.n_interior and spec.state_profile == "cos"
    assert NoiseSpec(grid, "additive", state_profile="cos").state_profile == "one"
    with pytest.raises(NoiseError):
        NoiseSpec(grid, "both")
    with pytest.raises(NoiseError):
        NoiseSpec(grid, n_modes=grid.n_interior + 1)
    with pytest.raises(NoiseError):
        NoiseSpec(grid, decay_q=0.5)
    with pytest.raises(NoiseError):
        NoiseSpec(grid, state_profile="cubic")


def test_amplitudes_and_constants(grid):
    spec = NoiseSpec(grid, "additive", n_modes=4, lambda_bar=2.0, decay_q=1.0)
    np.testing.assert_allclose(spec.lambdas, [2.0, 1.0, 2 / 3, 0.5])
    assert spec.D_amplitude == pytest.approx(4 * (4 + 1 + 4 / 9 + 0.25))
    # additive: |sigma_i(x,0)| = lambda_i*sqrt(2)*|sin| and |d_x sigma_i| <= lambda_i*sqrt(2)*i*pi
    lam = spec.hypothesis_lambdas
    np.testing.assert_allclose(lam, spec.lambdas * np.sqrt(2) * (1 + np.arange(1, 5) * np.pi))
    # tail sum_{i>4} 4/i^2 = 4*(pi^2/6 - 1 - 1/4 - 1/9 - 1/16)
    assert spec.truncation_tail == pytest.approx(4 * (np.pi**2 / 6 - 1 - 0.25 - 1 / 9 - 1 / 16))


def test_spatial_profiles_are_discrete_eigenvectors(grid):
    spec = NoiseSpec(grid, "additive")
    np.testing.assert_allclose(spec.spatial(grid.x), eigenvectors(grid), atol=1e-12)


def test_sigma_sq_bound_and_boundary(grid):
    spec = NoiseSpec(grid, "multiplicative", n_modes=8)
    x = np.linspace(0, 1, 51)
    for xi in (-3.0, 0.0, 2.0):
        s2 = sigma_sq(spec, x, np.full_like(x, xi))
        assert np.all(s2 <= spec.D * (1 + xi**2))
    assert np.abs(sigma_components(spec, np.array([0.0, 1.0]), np.array([5.0, 5.0]))).max() < 1e-12


def test_increments_replay_across_chunks():
    path = NoisePath(7, 3, 0.01, 3 * CHUNK + 5, np.array([0, 4, 9]))
    full = path.block(0, path.steps)
    part = path.block(CHUNK - 3, 2 * CHUNK + 7)
    np.testing.assert_array_equal(full[:, CHUNK - 3:2 * CHUNK + 7], part)
    single = path.block(0, path.steps, [9])
    np.testing.assert_array_equal(full[2], single[0])
    np.testing.assert_array_equal(path.increment(CHUNK + 1, 1), full[1, CHUNK + 1])


def test_increments_depend_on_seed_and_path_only():
    a = NoisePath(1, 4, 0.1, 50, [3]).block(0, 50)
    b = NoisePath(1, 4, 0.1, 50, [0, 1, 2, 3]).block(0, 50)[3:]
    np.testing.assert_array_equal(a, b)
    c = NoisePath(2, 4, 0.1, 50, [3]).block(0, 50)
    assert not np.array_equal(a, c)


def test_increment_statistics():
    dt = 0.01
    inc = NoisePath(3, 8, dt, 4000, np.arange(5)).block(0, 4000)
    sample = inc.reshape(-1, 8)
    n = sample.shape[0]
    assert abs(sample.mean()) < 4 * np.sqrt(dt / sample.size)
    var = sample.var(axis=0)
    assert np.all(np.abs(var - dt) < 4 * dt * np.sqrt(2 / n))
    corr = np.corrcoef(sample.T)
    assert np.abs(corr - np.eye(8)).max() < 4 / np.sqrt(n)


def test_zero_path_and_bad_range():
    path = NoisePath(0, 2, 0.1, 10, [0], zero=True)
    assert not path.block(0, 10).any()
    with pytest.raises(NoiseError):
        path.block(5, 11)


def test_noise_field_multiplicative_scaling(grid, rng):
    spec = NoiseSpec(grid, "multiplicative", n_modes=5, state_profile="sin")
    db = rng.standard_normal((2, 5))
    u = rng.standard_normal((2, grid.n_interior))
    expected = (db @ spec.nodal_profiles) * np.sin(u)
    np.testing.assert_allclose(noise_field(spec, db, u), expected, atol=1e-13)
    path = NoisePath.for_spec(spec, 0.1, 3, 2)
    inc = sample_increment(spec, path, 1, u[1], path_index=1)
    np.testing.assert_allclose(inc, (path.increment(1, 1) @ spec.nodal_profiles) * np.sin(u[1]))


def test_hilbert_schmidt_norm_additive(grid):
    spec = NoiseSpec(grid, "additive", n_modes=6)
    # sum_i lambda_i^2 ||e_i||^2 with orthonormal e_i
    hs = hilbert_schmidt_norm(spec, np.zeros((1, grid.n_interior)))[0]
    assert hs == pytest.approx(np.sqrt(np.sum(spec.lambdas**2)))


def test_growth_gate(grid):
    bounded = NoiseSpec(grid, "multiplicative", n_modes=8, state_profile="cos")
    ok = check_sublinear_growth(bounded, 0.0, 0.5, 2.0, b0=1.0)
    assert ok["passes"] and ok["lambda_estimate"] < 1e-3
    linear = NoiseSpec(grid, "multiplicative", n_modes=8, lambda_bar=5.0, state_profile="linear")
    bad = check_sublinear_growth(linear, 0.0, 0.5, 1.0, b0=1.0)
    assert not bad["passes"] and not bad["bound_holds"]
    with pytest.raises(NoiseError):
        check_sublinear_growth(bounded, 0.0, 1.5, 1.0)


@given(st.floats(0.1, 10.0))
def test_growth_estimate_tracks_linear_profile(lam_bar):
    grid = Grid(1.0, 16)
    spec = NoiseSpec(grid, "multiplicative", n_modes=4, lambda_bar=lam_bar, state_profile="linear")
    rep = check_sublinear_growth(spec, 0.0, 0.5, 0.0, samples=64)
    weight = np.sqrt(np.max(np.sum(spec.nodal_profiles**2, axis=0)))
    assert 0 < rep["lambda_estimate"] <= weight * (1 + 1e-9)


def test_stochastic_convolution_variance(grid):
    spec = NoiseSpec(grid, "additive", n_modes=4)
    path = NoisePath.for_spec(spec, 0.01, 200, 300)
    traj = stochastic_convolution(spec, 0.01, 200, path, record_every=200)
    c = grid.h * traj.final @ eigenvectors(grid, 1)[0]
    from spdelab.grid import eigenvalues
    r = 1 / (1 + 0.01 * eigenvalues(grid, 1)[0])
    var = spec.lambdas[0] ** 2 * 0.01 * r * r * (1 - r ** 400) / (1 - r * r)
    assert abs(c.var(ddof=1) - var) < 4 * var * np.sqrt(2 / 299)
    rm = traj.diagnostics["h1_running_max"]
    assert np.all(np.diff(rm, axis=1) >= 0)
    with pytest.raises(NoiseError):
        stochastic_convolution(NoiseSpec(grid), 0.01, 10, path)
