import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelab import diffusion as d

FAMILIES = [d.constant(1.5), d.porous_floor(1.0, 1.0, 3.0), d.bounded(1.0, 2.0),
            d.affine_floor(0.5, 2.0),
            d.from_expression("1 + r**2", d.NonDegenerate(1.0, 3.0, 1.0))]

r_vals = st.floats(-50, 50, allow_nan=False)
eps_vals = st.floats(1e-3, 10.0)


def simpson(f, a, b, tol=1e-12, depth=50):
    """Adaptive Simpson quadrature (independent oracle for primitives)."""
    def s(a, b):
        m = 0.5 * (a + b)
        return (b - a) / 6 * (f(a) + 4 * f(m) + f(b))

    def rec(a, b, whole, depth):
        m = 0.5 * (a + b)
        left, right = s(a, m), s(m, b)
        if depth == 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return rec(a, m, left, depth - 1) + rec(m, b, right, depth - 1)
    return rec(a, b, s(a, b), depth)


def bisect_resolvent(spec, eps, r):
    """Plain bisection for j + eps*(B(j) - b0*j) = r (oracle)."""
    lo, hi = min(0.0, r), max(0.0, r)
    f = lambda j: j + eps * (d.primitive_b(spec, j) - spec.b0 * j) - r
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.describe())
@pytest.mark.parametrize("r", [-3.0, -0.2, 0.0, 0.7, 4.0])
def test_primitive_matches_simpson(spec, r):
    ref = simpson(lambda x: float(spec(np.array(x))), 0.0, r) if r else 0.0
    assert d.primitive_b(spec, r) == pytest.approx(ref, abs=1e-9)


def test_primitive_frozen_values():
    # b0*r + (b1-b0)*(r - arctan r) at r = 1.5
    assert d.primitive_b(d.bounded(1, 2), 1.5) == pytest.approx(2.017206276752671, rel=1e-14)
    expr = d.from_expression("1 + r**2", d.NonDegenerate(1, 3, 1))
    assert d.primitive_b(expr, 2.0) == pytest.approx(14.0 / 3.0, rel=1e-12)


@pytest.mark.parametrize("spec", FAMILIES[1:3], ids=lambda s: s.describe())
@pytest.mark.parametrize("r", [-7.5, -1.0, 0.3, 2.0, 25.0])
def test_resolvent_matches_bisection(spec, r):
    y = d.YosidaRegularizer(spec, 0.1)
    assert y.resolve(r) == pytest.approx(bisect_resolvent(spec, 0.1, r), abs=1e-9)


def test_resolvent_frozen_value():
    y = d.YosidaRegularizer(d.porous_floor(1, 1, 3), 0.1)
    # J + 0.1*J^3/3 = 2
    assert y.resolve(2.0) == pytest.approx(1.80422718, abs=1e-8)


@given(r_vals, r_vals, eps_vals)
def test_yosida_approximation_properties(r1, r2, eps):
    spec = d.porous_floor(1.0, 1.0, 3.0)
    y = d.YosidaRegularizer(spec, eps)
    j = y.resolve(np.array([r1, r2]))
    tol = 1e-10 * max(1.0, abs(r1), abs(r2))
    assert abs(y.residual(j, np.array([r1, r2]))).max() <= tol
    assert abs(j[0] - j[1]) <= abs(r1 - r2) + 2 * tol
    be = y.coefficient(np.array([r1, r2]), j)
    assert np.all(be >= spec.b0) and np.all(be <= spec.b0 + 2.0 / eps)
    shifted = y.shifted(np.array([r1]))[0]
    assert abs(shifted) <= abs(d.shifted_primitive(spec, r1)) + tol / eps
    assert abs(j[0] - r1) <= eps * abs(shifted) + tol


def test_cached_coefficient_close_to_exact():
    y = d.YosidaRegularizer(d.porous_floor(1.0, 1.0, 3.0), 0.05)
    f = y.cached(20.0)
    r = np.linspace(-30, 30, 1001)
    np.testing.assert_allclose(f(r), y.coefficient(r), atol=1e-7)
    assert y.cache_error < 1e-7


def test_validation_rejects_negative_and_degenerate_yosida():
    with pytest.raises(d.DiffusionError):
        d.from_expression("r", d.NonDegenerate(1, 1, 1))
    with pytest.raises(d.DiffusionError):
        d.YosidaRegularizer(d.porous(1.0, 3.0), 0.1)
    with pytest.raises(d.DiffusionError):
        d.constant(0.0)
    with pytest.raises(d.DiffusionError):
        d.from_expression("__import__('os')", d.NonDegenerate(1, 1, 1))


def test_anti_diffusion_bypasses_validation():
    spec = d.anti_diffusion(0.5)
    assert spec.unchecked and spec(np.array([3.0]))[0] == -0.5


def test_validate_hypotheses_pass_and_fail():
    ok = d.validate_hypotheses(d.porous_floor(1.0, 1.0, 3.0), 10.0)
    assert ok.passes["3A"] and ok.passes["2"]
    deg = d.validate_hypotheses(d.porous(1.0, 3.0), 10.0)
    assert deg.passes["3B"] and deg.passes["2"]
    # sqrt(|r|) is only 1/2-Holder: the constant blows up under refinement
    sq = d.from_expression("abs(r)", d.Degenerate(2.5, 2.5, 1e-9, 10.0))
    assert not d.validate_hypotheses(sq, 1.0, holder_gamma=1.0).passes["2"]
    # growth upper bound violated
    wild = d.from_expression("1 + r**4", d.NonDegenerate(1.0, 3.0, 1.0))
    rep = d.validate_hypotheses(wild, 10.0)
    assert not rep.passes["3A"] and rep.growth_violations


def test_symbol_measure_shrinks_with_delta():
    spec = d.porous(1.0, 3.0)
    small = d.symbol_nondegeneracy(spec, (-1, 1), 4.0, 1e-3, n_xi=20001, n_u=21)
    large = d.symbol_nondegeneracy(spec, (-1, 1), 4.0, 1e-1, n_xi=20001, n_u=21)
    assert 0 < small["estimate"] < large["estimate"]
    assert small["alpha"] == 0.5
    # |xi|^2 n^2 <= delta  =>  measure ~ 2*sqrt(delta)/n, exponent 1/2
    slope = d.symbol_exponent(spec, (-1, 1), 4.0, [1e-3, 1e-2, 1e-1])
    assert slope == pytest.approx(0.5, abs=0.05)


def test_viscous_spec_is_nondegenerate():
    v = d.viscous_spec(d.porous(1.0, 3.0), 0.1)
    assert not v.is_degenerate and v.b0 == pytest.approx(0.1)
    assert d.primitive_b(v, 1.0) == pytest.approx(1.0 / 3.0 + 0.1)


def test_coefficient_function_modes():
    spec = d.porous_floor(1.0, 1.0, 3.0)
    r = np.array([0.0, 2.0])
    np.testing.assert_allclose(d.coefficient_function(spec)(r), spec(r))
    np.testing.assert_allclose(d.coefficient_function(spec, "viscous", tau=0.5)(r), spec(r) + 0.5)
    assert np.all(d.coefficient_function(spec, "yosida", epsilon=0.1)(r) <= spec(r) + 1e-12)
    with pytest.raises(d.DiffusionError):
        d.coefficient_function(spec, "magic")
