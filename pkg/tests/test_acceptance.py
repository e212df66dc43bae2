"""Acceptance suite: one test per criterion at desk scale.

Defaults are n = 128, dt = 1e-4, T = 1 and 200 paths. The long-horizon
ergodic runs use dt = 1e-2 and the ball-entry run dt = 1e-3 so each suite
stays within a few minutes on one core. Every test records a single
PASS/FAIL line, printed in the terminal summary.
"""

import json

import numpy as np
import pytest

from spdelab import diffusion as d
from spdelab.config import parse_text
from spdelab.experiments import (run_ball_entry, run_boundary_layer, run_comparison,
                                 run_contraction, run_energy, run_ergodic_coupling,
                                 run_invariant_measure, run_kinetic, run_linear_oracle,
                                 run_negative_control)
from spdelab.io import write_outputs

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance


def config(kind, b, mode, solver="", extra="", noise=""):
    return parse_text(f"[diffusion]\nb = {b}\n[noise]\nmode = {mode}\n{noise}\n"
                      f"[solver]\n{solver}\n[experiment]\nkind = {kind}\n{extra}\n")


def record(number, title, passed, reports=(), detail=""):
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"{status} criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))
    for rep in reports:
        for line in rep.lines():
            ACCEPTANCE_LINES.append(f"        [{rep.kind}] {line}")
    return passed


POROUS_FLOOR = "porous_floor(1.0, 1.0, 3.0)"
BOUNDED = "bounded(1.0, 2.0)"
LONG = "dt = 0.01\nT = 50.0\nrecord_every = 25"


@pytest.fixture(scope="module")
def ergodic_cfg():
    return config("ergodic", BOUNDED, "additive", LONG)


def test_criterion_01_yosida():
    rng = np.random.default_rng(20261018)
    specs = {"constant": d.constant(1.0),
             "1+r^2": d.from_expression("1 + r**2", d.NonDegenerate(1.0, 3.0, 1.0)),
             "porous_floor": d.porous_floor(0.5, 2.0, 2.5)}
    n = 10_000
    violations = {}
    for name, spec in specs.items():
        r1 = rng.uniform(-50, 50, n) * rng.choice([1e-3, 1e-1, 1.0], n)
        r2 = rng.uniform(-50, 50, n) * rng.choice([1e-3, 1e-1, 1.0], n)
        eps = 10.0 ** rng.uniform(-4, 1, n)
        count = 0
        for k in range(n):
            y = d.YosidaRegularizer(spec, float(eps[k]))
            r = np.array([r1[k], r2[k]])
            j = y.resolve(r)
            tol = 1e-10 * max(1.0, abs(r1[k]), abs(r2[k]))
            be = y.coefficient(r, j)
            shifted = (r - j) / eps[k]
            checks = (
                np.abs(y.residual(j, r)).max() <= tol,
                abs(j[0] - j[1]) <= abs(r1[k] - r2[k]) + 2 * tol,
                np.all(be >= spec.b0 - 1e-12) and np.all(be <= spec.b0 + 2.0 / eps[k] + 1e-12),
                np.all(np.abs(shifted) <= np.abs(d.shifted_primitive(spec, r)) + tol / eps[k]),
                np.all(np.abs(j - r) <= eps[k] * np.abs(shifted) + tol),
            )
            count += not all(checks)
        violations[name] = count
    ok = record(1, "Yosida approximation properties on 10^4 samples per coefficient",
                sum(violations.values()) == 0,
                detail=", ".join(f"{k}: {v} violations" for k, v in violations.items()))
    assert ok, violations


def test_criterion_02_boundary_layer():
    cfg = config("boundary-layer", "constant(1.0)", "additive",
                 extra="deltas = 0.2,0.1,0.05\nflux_deltas = 0.04,0.02,0.01")
    rep = run_boundary_layer(cfg)
    assert record(2, "boundary layer error, bounds and flux limit", rep.passed, [rep]), rep.lines()


def test_criterion_03_linear_oracle():
    rep = run_linear_oracle(config("linear", "constant(1.0)", "additive", extra="oracle_paths = 1000"))
    assert record(3, "linear regime against the exact discrete OU law", rep.passed, [rep]), rep.lines()


def test_criterion_04_contraction():
    reps = [run_contraction(config("contract", POROUS_FLOOR, "multiplicative")),
            run_contraction(config("contract", BOUNDED, "multiplicative")),
            run_contraction(config("contract", POROUS_FLOOR, "additive"))]
    pathwise = reps[2].criterion("pathwise non-increasing fraction")
    ok = all(r.passed for r in reps) and pathwise is not None and pathwise.passed
    assert record(4, "L1 contraction (porous floor, bounded, additive pathwise)", ok, reps)


def test_criterion_05_comparison():
    rep = run_comparison(config("compare", POROUS_FLOOR, "additive"))
    assert record(5, "comparison principle for ordered data", rep.passed, [rep]), rep.lines()


def test_criterion_06_energy():
    rep = run_energy(config("energy", POROUS_FLOOR, "multiplicative"))
    sup = [c for c in rep.criteria if "sup" in c.name and "slope" in c.name]
    ok = rep.passed and len(sup) == 2 and all(c.threshold == pytest.approx(1.1) for c in sup)
    assert record(6, "energy sweep slopes", ok, [rep]), rep.lines()


def test_criterion_07_kinetic():
    rep = run_kinetic(config("kinetic", "porous(1.0, 3.0)", "multiplicative",
                             noise="state_profile = sin"))
    assert record(7, "dyadic decay of the dissipation measure", rep.passed, [rep]), rep.lines()


def test_criterion_08_ergodic_and_invariant(ergodic_cfg):
    erg = run_ergodic_coupling(ergodic_cfg)
    inv = run_invariant_measure(config("invariant", BOUNDED, "additive", LONG))
    names = {c.name for c in inv.criteria}
    ok = erg.passed and inv.passed and any(n.startswith("agree") for n in names)
    assert record(8, "ergodic coupling, invariant averages and H1 occupation", ok, [erg, inv])


def test_criterion_09_ball_entry_and_negative_control():
    ball = run_ball_entry(config("ball-entry", BOUNDED, "additive", "dt = 0.001\nT = 2.0"))
    neg = run_negative_control(config("contract", POROUS_FLOOR, "multiplicative"))
    ok = ball.passed and neg.passed
    assert record(9, "ball entry with measured K0; anti-diffusion control fails contraction",
                  ok, [ball, neg])


def _outputs(out):
    manifest = json.loads((out / "manifest.json").read_text())
    return manifest, {name: (out / name).read_bytes() for name in manifest["outputs"]}


def test_criterion_10_determinism(tmp_path):
    cases = {
        "contract": (config("contract", POROUS_FLOOR, "multiplicative", "T = 0.2"), run_contraction),
        "ergodic": (config("ergodic", BOUNDED, "additive", "dt = 0.01\nT = 5.0\nrecord_every = 25"),
                    run_ergodic_coupling),
        "ball-entry": (config("ball-entry", BOUNDED, "additive", "dt = 0.001\nT = 0.5",
                              "paths = 50\nsizes = 1,10"), run_ball_entry),
    }
    mismatches = []
    for name, (cfg, runner) in cases.items():
        runs = []
        for k, threads in enumerate((1, 1, 2)):
            out = tmp_path / f"{name}_{k}"
            write_outputs(runner(cfg, threads=threads), cfg, out, figures=False)
            runs.append(_outputs(out))
        base_manifest, base_files = runs[0]
        for manifest, files in runs[1:]:
            if manifest != base_manifest or files != base_files:
                mismatches.append(name)
    ok = record(10, "byte-identical CSV/JSON across repeats and thread counts", not mismatches,
                detail=f"suites {', '.join(cases)}; mismatches: {mismatches or 'none'}")
    assert ok, mismatches
