import numpy as np
import pytest

from spdelab import diffusion as d
from spdelab.config import parse_text
from spdelab.experiments import (ExperimentError, deterministic_crossing, entry_times, estimate_c0,
                                 ou_stationary_variance, run_boundary_layer, run_contraction,
                                 run_invariant_measure, run_irreducibility, run_linear_oracle,
                                 run_negative_control, run_validate)
from spdelab.experiments.report import Criterion, ExperimentReport, mean_se
from spdelab.grid import Grid, eigenvalues, eigenvectors
from spdelab.noise import NoisePath, NoiseSpec
from spdelab.stepper import SolverConfig, integrate


def cfg_text(b, mode, kind, dt=1e-3, T=0.05, paths=8, extra="", lam=1.0, n=32, rec=10):
    return f"""
[grid]
n_interior = {n}
[diffusion]
b = {b}
[noise]
mode = {mode}
lambda_bar = {lam}
seed = 11
[solver]
dt = {dt}
T = {T}
record_every = {rec}
[experiment]
kind = {kind}
paths = {paths}
{extra}
"""


def test_criterion_and_report_helpers():
    c = Criterion("x", True, 1.0, 2.0, 0.1, "<=")
    assert c.line().startswith("PASS x")
    assert not ExperimentReport("k", [], []).passed
    rep = ExperimentReport("k", [c, Criterion("y", False, np.nan, 0.0)], [])
    assert not rep.passed and rep.criterion("y").estimate != rep.criterion("y").estimate
    assert rep.to_dict()["criteria"][1]["estimate"] == "nan"
    m, se = mean_se(np.array([1.0, 3.0]))
    assert m == 2.0 and se == pytest.approx(1.0)


def test_deterministic_crossing_matches_zero_noise_run():
    grid = Grid(1.0, 32)
    dt, b0, a = 1e-3, 1.0, 100.0
    noise = NoiseSpec(grid, "additive", lambda_bar=0.0)
    e1 = eigenvectors(grid, 1)[0]
    cfg = SolverConfig(dt, 0.3, record_every=1)
    traj = integrate(np.sqrt(a) * e1, cfg, d.constant(b0), noise,
                     NoisePath.for_spec(noise, dt, cfg.steps, 1))
    energy = traj.diagnostics["h"] ** 2
    K0 = 2.0
    expected = int(np.flatnonzero(energy[0] <= K0)[0])
    assert deterministic_crossing(a, K0, b0, eigenvalues(grid, 1)[0], dt) == expected
    assert deterministic_crossing(1.0, K0, b0, 1.0, dt) == 0


def test_entry_times_and_c0():
    energy = np.array([[5, 1, 1, 5, 1, 5, 5, 1], [5, 5, 5, 5, 5, 5, 5, 5]], dtype=float)
    taus = entry_times(energy, 2.0, 2, 3)
    np.testing.assert_array_equal(taus, [[2, 4, 7], [-1, -1, -1]])
    assert estimate_c0(np.ones((3, 11)), 0.1, 5) > 0


def test_negative_control_detects_anti_diffusion():
    cfg = parse_text(cfg_text("porous_floor(1.0, 1.0, 3.0)", "multiplicative", "contract"))
    assert run_contraction(cfg).passed
    neg = run_negative_control(cfg)
    assert neg.passed


def test_linear_oracle_small():
    cfg = parse_text(cfg_text("constant(1.0)", "additive", "linear", dt=1e-2, T=0.5, paths=200,
                              extra="oracle_paths = 200", rec=5, n=16))
    rep = run_linear_oracle(cfg)
    assert rep.passed, rep.lines()


def test_ou_stationary_variance_formula():
    grid = Grid(1.0, 16)
    noise = NoiseSpec(grid, "additive", n_modes=3)
    for dt in (1e-2, 1e-5):
        info = ou_stationary_variance(noise, 1.0, dt)
        r = 1 / (1 + dt * eigenvalues(grid, 3))
        np.testing.assert_allclose(info["scheme"], noise.lambdas**2 * dt * r**2 / (1 - r**2))
    # small dt: only the grid error in the eigenvalues remains
    np.testing.assert_allclose(info["continuum"], info["scheme"], rtol=3e-2)


def test_zero_noise_irreducibility_decays():
    cfg = parse_text(cfg_text("bounded(1.0, 2.0)", "additive", "irreducible", dt=1e-3, T=0.05,
                              paths=8, lam=0.0))
    rep = run_irreducibility(cfg)
    frac = rep.summary["reach_fraction_by_z"]
    # deterministic heat flow: z = 4 decays to about 4 exp(-pi^2 T) > eps
    assert frac["0"] == 1.0 and frac["4"] == 0.0
    assert not rep.criterion("rank correlation").passed


def test_invariant_gate_rejects_growth_violation():
    text = cfg_text("bounded(1.0, 2.0)", "multiplicative", "invariant", lam=50.0,
                    extra="growth_alpha = 0.5")
    cfg = parse_text(text.replace("seed = 11", "seed = 11\nstate_profile = linear"))
    with pytest.raises(ExperimentError):
        run_invariant_measure(cfg)


def test_zero_noise_invariant_averages_decay():
    # without noise both families decay to zero and the burn-in window moves later with T
    gaps = []
    for T in (2.0, 4.0):
        cfg = parse_text(cfg_text("bounded(1.0, 2.0)", "additive", "invariant", dt=1e-2, T=T,
                                  paths=2, lam=0.0))
        gaps.append(run_invariant_measure(cfg).criterion("agree l1").estimate)
    assert 0 < gaps[1] < gaps[0] / 10


def test_validate_and_boundary_layer_runners():
    rep = run_validate(parse_text(cfg_text("porous_floor(1.0, 1.0, 3.0)", "multiplicative", "validate")))
    assert rep.passed, rep.lines()
    rep = run_boundary_layer(parse_text(cfg_text("constant(1.0)", "additive", "boundary-layer", n=399)))
    assert rep.passed, rep.lines()
