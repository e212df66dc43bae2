"""Diffusion nonlinearities, their primitives and regularisations.

A :class:`DiffusionSpec` bundles a vectorised coefficient ``b`` with the growth
regime it is claimed to satisfy. Regularised coefficients (Yosida and viscous)
are produced from a spec and consumed by the stepper through
:func:`coefficient_function`.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.integrate
import scipy.interpolate

ArrayFn = Callable[[np.ndarray], np.ndarray]


class DiffusionError(ValueError):
    pass


class ResolventError(DiffusionError):
    pass


@dataclass(frozen=True)
class NonDegenerate:
    b0: float
    theta: float
    c: float


@dataclass(frozen=True)
class Degenerate:
    theta1: float
    theta2: float
    c1: float
    c2: float


Regime = Union[NonDegenerate, Degenerate]


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficient ``b`` plus the regime parameters it is declared to satisfy.

    ``name`` and ``params`` record how the spec was built so configs can be
    re-emitted. ``unchecked`` skips the positivity check and exists only for
    negative controls (anti-diffusion runs).
    """

    b: ArrayFn
    regime: Regime
    holder_gamma: float = 1.0
    primitive: Optional[ArrayFn] = None
    name: str = "custom"
    params: tuple = ()
    bounded_above: Optional[float] = None
    unchecked: bool = False

    def __post_init__(self):
        if self.unchecked:
            return
        r = np.linspace(-10.0, 10.0, 2001)
        vals = np.asarray(self.b(r), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DiffusionError(f"b({self.name}) is not finite on [-10, 10]")
        floor = 0.0 if isinstance(self.regime, Degenerate) else 1e-300
        if np.any(vals < floor):
            raise DiffusionError(f"b({self.name}) takes negative values on [-10, 10]")

    def __call__(self, r):
        return np.asarray(self.b(np.asarray(r, dtype=float)), dtype=float)

    @property
    def is_degenerate(self) -> bool:
        return isinstance(self.regime, Degenerate)

    @property
    def b0(self) -> float:
        if isinstance(self.regime, NonDegenerate):
            return self.regime.b0
        raise DiffusionError("degenerate diffusion has no positive floor b0")

    @property
    def theta(self) -> float:
        if isinstance(self.regime, NonDegenerate):
            return self.regime.theta
        return self.regime.theta2

    def describe(self) -> str:
        args = ", ".join(repr(p) if isinstance(p, str) else _fmt(p) for p in self.params)
        return f"{self.name}({args})"


def _fmt(x: float) -> str:
    return repr(float(x))


# -- shipped families --------------------------------------------------------


def constant(b0: float) -> DiffusionSpec:
    if b0 <= 0:
        raise DiffusionError("constant diffusion needs b0 > 0")
    return DiffusionSpec(
        b=lambda r: np.full(np.shape(r), float(b0)),
        regime=NonDegenerate(b0, 1.0, b0),
        primitive=lambda r: b0 * np.asarray(r, dtype=float),
        name="constant", params=(b0,), bounded_above=b0)


def affine_floor(b0: float, slope: float) -> DiffusionSpec:
    """``b0 + slope*|r|``: linear growth above a positive floor."""
    if b0 <= 0 or slope < 0:
        raise DiffusionError("affine_floor needs b0 > 0 and slope >= 0")
    return DiffusionSpec(
        b=lambda r: b0 + slope * np.abs(r),
        regime=NonDegenerate(b0, 2.0, max(b0, slope)),
        primitive=lambda r: b0 * r + 0.5 * slope * r * np.abs(r),
        name="affine_floor", params=(b0, slope))


def porous(c: float, theta: float) -> DiffusionSpec:
    """Degenerate porous-media coefficient ``c*|r|^(theta-1)``, ``theta > 2``."""
    if c <= 0 or theta <= 2:
        raise DiffusionError("porous diffusion needs c > 0 and theta > 2")
    gamma = 1.0 if theta >= 3 else 0.25 * theta  # midpoint of (1/2, (theta-1)/2)
    return DiffusionSpec(
        b=lambda r: c * np.abs(r) ** (theta - 1.0),
        regime=Degenerate(theta, theta, c, c),
        holder_gamma=gamma,
        primitive=lambda r: c * np.sign(r) * np.abs(r) ** theta / theta,
        name="porous", params=(c, theta))


def porous_floor(b0: float, c: float, theta: float) -> DiffusionSpec:
    """``b0 + c*|r|^(theta-1)``, non-degenerate with polynomial growth."""
    if b0 <= 0 or c < 0 or theta < 1:
        raise DiffusionError("porous_floor needs b0 > 0, c >= 0, theta >= 1")
    return DiffusionSpec(
        b=lambda r: b0 + c * np.abs(r) ** (theta - 1.0),
        regime=NonDegenerate(b0, theta, max(b0, c)),
        primitive=lambda r: b0 * r + c * np.sign(r) * np.abs(r) ** theta / theta,
        name="porous_floor", params=(b0, c, theta))


def bounded(b0: float, b1: float) -> DiffusionSpec:
    """Smooth monotone interpolation from ``b0`` at 0 towards ``b1`` at infinity."""
    if not 0 < b0 <= b1:
        raise DiffusionError("bounded diffusion needs 0 < b0 <= b1")
    gap = b1 - b0
    return DiffusionSpec(
        b=lambda r: b0 + gap * r * r / (1.0 + r * r),
        regime=NonDegenerate(b0, 1.0, b1),
        primitive=lambda r: b0 * r + gap * (r - np.arctan(r)),
        name="bounded", params=(b0, b1), bounded_above=b1)


_EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("abs", "exp", "log", "sqrt", "sin", "cos", "tanh", "arctan", "sign",
                 "minimum", "maximum", "cosh", "sinh", "pi")
}


def _compile_expression(expr: str) -> ArrayFn:
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id != "r" and node.id not in _EXPR_NAMES:
            raise DiffusionError(f"unknown symbol {node.id!r} in expression {expr!r}")
        if isinstance(node, (ast.Attribute, ast.Subscript, ast.Lambda)):
            raise DiffusionError(f"unsupported syntax in expression {expr!r}")
    code = compile(tree, "<diffusion>", "eval")

    def b(r):
        r = np.asarray(r, dtype=float)
        return np.asarray(eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "r": r}),
                          dtype=float) * np.ones_like(r)
    return b


def from_expression(expr: str, regime: Regime, holder_gamma: float = 1.0,
                    bounded_above: float | None = None) -> DiffusionSpec:
    """Custom coefficient from a numpy expression in ``r``; primitive by quadrature."""
    return DiffusionSpec(b=_compile_expression(expr), regime=regime,
                         holder_gamma=holder_gamma, name="expr", params=(expr,),
                         bounded_above=bounded_above)


def anti_diffusion(strength: float) -> DiffusionSpec:
    """Negative control: ``b = -strength``. Bypasses validation on purpose."""
    return DiffusionSpec(
        b=lambda r: np.full(np.shape(r), -float(strength)),
        regime=NonDegenerate(-strength, 1.0, -strength),
        primitive=lambda r: -strength * np.asarray(r, dtype=float),
        name="anti_diffusion", params=(strength,), unchecked=True)


FAMILIES = {
    "constant": constant,
    "affine_floor": affine_floor,
    "porous": porous,
    "porous_floor": porous_floor,
    "bounded": bounded,
    "anti_diffusion": anti_diffusion,
}


# -- primitive ---------------------------------------------------------------


def primitive_b(spec: DiffusionSpec, r):
    """``B(r) = int_0^r b``; closed form when available, else adaptive quadrature."""
    r_arr = np.asarray(r, dtype=float)
    if spec.primitive is not None:
        out = np.asarray(spec.primitive(r_arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    def one(x):
        val, err, *rest = scipy.integrate.quad(lambda s: float(spec.b(np.array(s))), 0.0, x,
                                               epsabs=1e-12, epsrel=1e-12, limit=200,
                                               full_output=1)
        if len(rest) > 1 and err > 1e-10 * max(1.0, abs(val)):
            raise DiffusionError(f"quadrature for the primitive did not converge at r={x}")
        return val

    out = np.vectorize(one, otypes=[float])(r_arr)
    return float(out) if out.ndim == 0 else out


def shifted_primitive(spec: DiffusionSpec, r):
    """``B(r) - b0*r``, monotone under the non-degenerate regime."""
    return primitive_b(spec, r) - spec.b0 * np.asarray(r, dtype=float)


def viscous_b(spec: DiffusionSpec, tau: float, r):
    if tau <= 0:
        raise DiffusionError("viscosity tau must be positive")
    return spec(r) + tau


def viscous_spec(spec: DiffusionSpec, tau: float) -> DiffusionSpec:
    """The shifted coefficient ``b + tau`` as a non-degenerate spec with floor ``tau``."""
    if tau <= 0:
        raise DiffusionError("viscosity tau must be positive")
    base = spec.primitive
    if isinstance(spec.regime, Degenerate):
        regime = NonDegenerate(tau, spec.regime.theta2, max(spec.regime.c2, 0) + tau)
    else:
        regime = NonDegenerate(spec.regime.b0 + tau, spec.regime.theta, spec.regime.c + tau)
    return DiffusionSpec(
        b=lambda r: spec.b(r) + tau, regime=regime, holder_gamma=spec.holder_gamma,
        primitive=None if base is None else (lambda r: base(r) + tau * np.asarray(r, dtype=float)),
        name="viscous", params=(spec.describe(), tau),
        bounded_above=None if spec.bounded_above is None else spec.bounded_above + tau)


# -- Yosida regularisation ---------------------------------------------------


@dataclass
class YosidaRegularizer:
    """Resolvent ``J = (I + eps*Bt)^{-1}`` of the shifted primitive ``Bt = B - b0*r``."""

    spec: DiffusionSpec
    epsilon: float
    tol: float = 1e-10
    max_iter: int = 200
    _cache: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DiffusionError("Yosida epsilon must be positive")
        if not isinstance(self.spec.regime, NonDegenerate):
            raise DiffusionError("Yosida regularisation needs a non-degenerate diffusion")

    def residual(self, j, r):
        return j + self.epsilon * shifted_primitive(self.spec, j) - r

    def resolve(self, r) -> np.ndarray:
        """Vectorised safeguarded Newton-bisection for the resolvent."""
        r = np.asarray(r, dtype=float)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        b0, eps = self.spec.b0, self.epsilon
        # Bt(0) = 0 and Bt monotone, so the root lies between 0 and r.
        lo = np.minimum(r, 0.0)
        hi = np.maximum(r, 0.0)
        f_lo = self.residual(lo, r)
        f_hi = self.residual(hi, r)
        scale = self.tol * np.maximum(1.0, np.abs(r))
        if np.any(f_lo > scale) or np.any(f_hi < -scale):
            raise ResolventError("resolvent bracket failed; b is not monotone on this range")
        j = np.where(np.abs(f_hi) <= np.abs(f_lo), hi, lo)
        f = np.where(np.abs(f_hi) <= np.abs(f_lo), f_hi, f_lo)
        active = np.abs(f) > scale
        for _ in range(self.max_iter):
            if not np.any(active):
                break
            slope = 1.0 + eps * (self.spec(j) - b0)
            newton = j - f / slope
            inside = (newton > lo) & (newton < hi)
            cand = np.where(inside, newton, 0.5 * (lo + hi))
            f_c = self.residual(cand, r)
            lo = np.where(active & (f_c < 0), cand, lo)
            hi = np.where(active & (f_c > 0), cand, hi)
            j = np.where(active, cand, j)
            f = np.where(active, f_c, f)
            active = (np.abs(f) > scale) & (hi - lo > 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(j)))
        if np.any(np.abs(f) > scale):
            # The bracket collapsed to machine precision; accept only if rounding explains it.
            bad = np.abs(f) > 1e3 * scale
            if np.any(bad):
                raise ResolventError("resolvent iteration failed to converge")
        return j[0] if scalar else j

    def __call__(self, r):
        return self.resolve(r)

    def shifted(self, r):
        """``Bt_eps(r) = (r - J(r))/eps``."""
        r = np.asarray(r, dtype=float)
        return (r - self.resolve(r)) / self.epsilon

    def primitive(self, r):
        r = np.asarray(r, dtype=float)
        return self.shifted(r) + self.spec.b0 * r

    def coefficient(self, r, j=None):
        """``b_eps = b0 + (b(J)-b0)/(1 + eps*(b(J)-b0))``."""
        if j is None:
            j = self.resolve(r)
        excess = self.spec(j) - self.spec.b0
        return self.spec.b0 + excess / (1.0 + self.epsilon * excess)

    def cached(self, r_max: float, n_knots: int = 4097) -> Callable[[np.ndarray], np.ndarray]:
        """Coefficient ``b_eps`` through a spline table of ``J`` on ``[-r_max, r_max]``.

        Values outside the table fall back to the exact solve. The table error is
        measured at the knot midpoints and stored in ``cache_error``.
        """
        knots = np.linspace(-r_max, r_max, n_knots)
        table = scipy.interpolate.CubicSpline(knots, self.resolve(knots))
        mids = 0.5 * (knots[1:] + knots[:-1])
        self.cache_error = float(np.max(np.abs(table(mids) - self.resolve(mids))))

        def coeff(r):
            r = np.asarray(r, dtype=float)
            j = table(r)
            outside = np.abs(r) > r_max
            if np.any(outside):
                j = np.where(outside, 0.0, j)
                j[outside] = self.resolve(r[outside])
            return self.coefficient(r, j)
        return coeff


def yosida_resolvent(y: YosidaRegularizer, r):
    return y.resolve(r)


def yosida_b(y: YosidaRegularizer, r):
    return y.coefficient(r)


# -- validators --------------------------------------------------------------


@dataclass
class HypothesisReport:
    sample_range: float
    growth_violations: list
    holder_gamma: float
    holder_constant: float
    holder_constant_refined: float
    passes: dict

    def to_dict(self) -> dict:
        return {
            "sample_range": self.sample_range,
            "checked": "on sampled range only",
            "growth_violations": self.growth_violations,
            "holder_gamma": self.holder_gamma,
            "holder_constant": self.holder_constant,
            "holder_constant_refined": self.holder_constant_refined,
            "passes": self.passes,
        }


def _holder_constant(spec: DiffusionSpec, R: float, count: int, gamma: float) -> float:
    # odd count keeps r = 0 on the grid, where degenerate roots are least regular
    r = np.linspace(-R, R, 2 * (count // 2) + 1)
    s = np.sqrt(np.maximum(spec(r), 0.0))
    return float(np.max(np.abs(np.diff(s)) / np.diff(r) ** gamma))


def validate_hypotheses(spec: DiffusionSpec, sample_range: float, sample_count: int = 4001,
                        holder_gamma: float | None = None, refine: int = 64) -> HypothesisReport:
    """Sample-based check of the Holder and growth hypotheses on ``[-R, R]``.

    The Holder exponent is accepted when the sampled constant does not grow by
    more than 2% after refining the sample spacing by ``refine``.
    """
    if sample_range <= 0:
        raise DiffusionError("sample range must be positive")
    gamma = spec.holder_gamma if holder_gamma is None else holder_gamma
    r = np.linspace(-sample_range, sample_range, sample_count)
    vals = spec(r)
    violations = []
    passes = {}
    slack = 1e-12
    reg = spec.regime
    if isinstance(reg, NonDegenerate):
        upper = reg.c * (1.0 + np.abs(r) ** (reg.theta - 1.0))
        low_bad = vals < reg.b0 - slack
        up_bad = vals > upper * (1 + slack)
        passes["3A"] = bool(reg.theta >= 1 and reg.b0 > 0 and not low_bad.any() and not up_bad.any())
        passes["3B"] = None
    else:
        lower = reg.c1 * np.abs(r) ** (reg.theta1 - 1.0)
        upper = reg.c2 * (1.0 + np.abs(r) ** (reg.theta2 - 1.0))
        low_bad = vals < lower * (1 - slack) - slack
        up_bad = vals > upper * (1 + slack)
        passes["3B"] = bool(reg.theta2 >= reg.theta1 > 2 and not low_bad.any() and not up_bad.any())
        passes["3A"] = None
    for x in r[low_bad][:20]:
        violations.append({"r": float(x), "bound": "lower"})
    for x in r[up_bad][:20]:
        violations.append({"r": float(x), "bound": "upper"})
    coarse = _holder_constant(spec, sample_range, sample_count, gamma)
    fine = _holder_constant(spec, sample_range, refine * sample_count, gamma)
    passes["2"] = bool(gamma > 0.5 and np.isfinite(fine) and fine <= 1.02 * coarse + 1e-12)
    return HypothesisReport(sample_range, violations, gamma, coarse, fine, passes)


def symbol_nondegeneracy(spec: DiffusionSpec, eta_support: tuple[float, float], J: float,
                         delta: float, n_xi: int = 100_000, n_u: int = 201) -> dict:
    """Measure of ``{xi in supp eta : |i*u + b(xi)*n^2| <= delta}``, maximised over u and |n| ~ J.

    The n-range is the dyadic shell ``J <= |n| <= 2J``; the u-grid always contains 0.
    """
    a, c = eta_support
    xi = np.linspace(a, c, n_xi)
    dxi = (c - a) / (n_xi - 1)
    bx = spec(xi)
    n_lo = max(1, int(math.ceil(J)))
    ns = np.arange(n_lo, max(n_lo, int(math.floor(2 * J))) + 1)
    u_max = 10.0 * float(np.max(np.abs(bx))) * J**2
    us = np.unique(np.concatenate([np.linspace(-u_max, u_max, n_u), [0.0]]))
    best = 0.0
    for n in ns:
        real = bx * float(n) ** 2
        for u in us:
            if abs(u) > delta:
                continue
            count = np.count_nonzero(np.hypot(u, real) <= delta)
            best = max(best, count * dxi)
    alpha_ref = None
    reference = None
    if isinstance(spec.regime, Degenerate):
        alpha_ref = 1.0 / (spec.regime.theta1 - 1.0)
        reference = (delta / J**2) ** alpha_ref
    return {"estimate": best, "reference_rate": reference, "alpha": alpha_ref, "beta": 2.0,
            "support_measure": c - a, "J": J, "delta": delta}


def symbol_exponent(spec: DiffusionSpec, eta_support, J: float, deltas) -> float:
    """Log-log slope of the symbol measure estimate against ``delta``."""
    est = [symbol_nondegeneracy(spec, eta_support, J, d)["estimate"] for d in deltas]
    return float(np.polyfit(np.log(deltas), np.log(est), 1)[0])


# -- stepper-facing coefficient map ------------------------------------------


def coefficient_function(spec: DiffusionSpec, regularization: str = "none", *,
                         epsilon: float | None = None, tau: float | None = None,
                         cache_range: float = 50.0) -> ArrayFn:
    """Coefficient actually used by the time stepper for a regularisation mode."""
    mode = regularization.lower()
    if mode == "none":
        return spec
    if mode == "viscous":
        if tau is None:
            raise DiffusionError("viscous regularisation needs tau")
        return lambda r: viscous_b(spec, tau, r)
    if mode == "yosida":
        if epsilon is None:
            raise DiffusionError("Yosida regularisation needs epsilon")
        return YosidaRegularizer(spec, epsilon).cached(cache_range)
    raise DiffusionError(f"unknown regularisation {regularization!r}")
