"""Value and probability distortions for cumulative prospect theory.

A :class:`DistortionModel` pairs a value distortion ``u = (u_plus, u_minus)``
with a probability distortion ``w = (w_plus, w_minus)`` and carries the
certificate produced by validating both on a finite grid. Functions are held
either in closed form (``functools.partial`` over module-level formulas) or
as piecewise-linear knot tables evaluated with ``numpy.interp``.
"""

import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import brentq

from errors import (
    CertificateFailed,
    FlatRegionTooLarge,
    InvalidParameter,
    NonEvaluable,
)

logger = logging.getLogger(__name__)

GRID_SIZE = 1024
SHAPE_TOL = 1e-8
STRICT_MARGIN = 1e-8
FD_STEP = 1e-6
ENDPOINT_TOL = 1e-12
UNBIASED_TOL = 1e-12


# Closed-form families

def _power_gain(x, alpha):
    return np.power(np.maximum(np.asarray(x, dtype=float), 0.0), alpha)


def _power_loss(x, beta, lam):
    return -lam * np.power(np.maximum(-np.asarray(x, dtype=float), 0.0), beta)


def _tk_weight(p, gamma):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    num = np.power(p, gamma)
    return num / np.power(num + np.power(1.0 - p, gamma), 1.0 / gamma)


def _flattened(p, base, p_flat):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    z = np.clip((p - p_flat) / (1.0 - p_flat), 0.0, 1.0)
    return np.where(p <= p_flat, 0.0, base(z))


def _blend_identity(x, base, theta):
    x = np.asarray(x, dtype=float)
    return (1.0 - theta) * base(x) + theta * x


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Knot table evaluated by linear interpolation."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise InvalidParameter("knot table needs matching 1-d x and y arrays with at least 2 knots")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidParameter("knot table contains non-finite values")
        if np.any(np.diff(x) <= 0.0):
            raise InvalidParameter("knot x-grid must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __call__(self, v):
        return np.interp(np.asarray(v, dtype=float), self.x, self.y)

    def to_dict(self):
        return {"x": self.x.tolist(), "y": self.y.tolist()}


@dataclass(frozen=True, eq=False)
class ValueDistortion:
    u_plus: object
    u_minus: object
    r_max: float
    kind: str = "closed_form"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0.0, self.u_plus(np.maximum(x, 0.0)), self.u_minus(np.minimum(x, 0.0)))


@dataclass(frozen=True, eq=False)
class ProbabilityDistortion:
    w_plus: object
    w_minus: object
    kind: str = "closed_form"
    # w_minus is identically zero on [0, flat_until]
    flat_until: float = 0.0


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    witness: float = None
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "witness": self.witness, "detail": self.detail}


@dataclass(frozen=True)
class Certificate:
    """Per-constraint validation outcome for a distortion."""

    checks: tuple
    fixed_points: tuple = (None, None)
    unbiased: bool = False

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def failures(self):
        return [check.name for check in self.checks if not check.passed]

    def check(self, name):
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self):
        return {
            "passed": self.passed,
            "unbiased": self.unbiased,
            "fixed_points": list(self.fixed_points),
            "checks": [check.to_dict() for check in self.checks],
        }


@dataclass(frozen=True, eq=False)
class DistortionModel:
    """
    A validated (u, w) pair

    Attributes:
        value (ValueDistortion): u_plus on [0, r_max], u_minus on [-r_max, 0]
        prob (ProbabilityDistortion): w_plus, w_minus on [0, 1]
        certificate (Certificate): Outcome of the grid validators
        kind (str): Family name used when serializing
        params (dict): Family parameters used when serializing
    """

    value: ValueDistortion
    prob: ProbabilityDistortion
    certificate: Certificate
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def r_max(self):
        return self.value.r_max

    @property
    def fixed_points(self):
        return self.certificate.fixed_points

    @property
    def usable(self):
        """All constraints pass, or the model is the unbiased identity limit."""
        return self.certificate.passed or self.certificate.unbiased

    def require_usable(self):
        if not self.usable:
            raise CertificateFailed(
                f"distortion model '{self.kind}' failed: {', '.join(self.certificate.failures())}",
                self.certificate,
            )

    def u(self, x):
        return self.value(x)

    def u_minus(self, x):
        return np.asarray(self.value.u_minus(np.minimum(np.asarray(x, dtype=float), 0.0)), dtype=float)

    def w_plus(self, p):
        return np.asarray(self.prob.w_plus(p), dtype=float)

    def w_minus(self, p):
        return np.asarray(self.prob.w_minus(p), dtype=float)

    def w(self, p, branch):
        """Weighting on the "plus" (gains) or "minus" (losses) branch."""
        if branch == "plus":
            return self.w_plus(p)
        if branch == "minus":
            return self.w_minus(p)
        raise InvalidParameter(f"branch must be 'plus' or 'minus', got {branch!r}")

    def decision_weights(self, values, probs):
        """
        Rank-dependent decision weights for a discrete prospect

        Outcomes below zero are cumulated from the most negative upward and
        weighted with w_minus; outcomes at or above zero are decumulated from
        the largest downward and weighted with w_plus.

        Args:
            values (array-like): Outcome values (already in utility units)
            probs (array-like): Outcome probabilities

        Returns:
            numpy.ndarray: Decision weight per outcome, in input order
        """
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        order = np.argsort(values, kind="stable")
        v, p = values[order], probs[order]
        neg = v < 0.0
        sorted_weights = np.zeros_like(p)

        cum = np.minimum(np.cumsum(p[neg]), 1.0)
        sorted_weights[neg] = np.diff(self.w_minus(np.concatenate(([0.0], cum))))

        dec = np.minimum(np.cumsum(p[~neg][::-1])[::-1], 1.0)
        dec_next = np.append(dec[1:], 0.0)
        sorted_weights[~neg] = self.w_plus(dec) - self.w_plus(dec_next)

        weights = np.empty_like(sorted_weights)
        weights[order] = sorted_weights
        return weights

    def to_dict(self):
        return {"kind": self.kind, **self.params}


# Validation helpers

def _evaluate(fn, grid, name):
    try:
        with np.errstate(all="ignore"):
            y = np.asarray(fn(grid), dtype=float)
    except Exception as exc:
        raise NonEvaluable(f"{name} could not be evaluated on the grid: {exc}") from exc
    if y.shape != grid.shape or not np.all(np.isfinite(y)):
        raise NonEvaluable(f"{name} returned non-finite or misshapen values on the grid")
    return y


def _scalar(fn, x, name):
    return float(_evaluate(fn, np.asarray([x], dtype=float), name)[0])


def _monotone_check(name, xs, ys, tol):
    bad = np.flatnonzero(np.diff(ys) < -tol)
    if bad.size:
        return ConstraintCheck(name, False, float(xs[bad[0] + 1]), "decreases between grid points")
    return ConstraintCheck(name, True)


def _curvature_check(name, xs, ys, tol, concave):
    second = ys[2:] - 2.0 * ys[1:-1] + ys[:-2]
    bad = np.flatnonzero(second > tol) if concave else np.flatnonzero(second < -tol)
    if bad.size:
        return ConstraintCheck(name, False, float(xs[bad[0] + 1]), "second difference has wrong sign")
    return ConstraintCheck(name, True)


def _zero_check(name, at, value, tol):
    if abs(value) > tol:
        return ConstraintCheck(name, False, float(at), f"value {value:.3g}")
    return ConstraintCheck(name, True)


def validate_value_distortion(u, grid_size=GRID_SIZE, tol=SHAPE_TOL):
    """
    Check u against the value-distortion constraints on a grid

    Utilities are only defined up to a positive factor, so slopes at zero are
    compared after scaling the gain branch to a right-derivative of at most 1;
    loss aversion then requires the loss-branch slope to exceed the scaled
    gain slope by ``STRICT_MARGIN``.

    Args:
        u (ValueDistortion): Distortion to check
        grid_size (int, optional): Number of knots per branch. Defaults to 1024.
        tol (float, optional): Finite-difference tolerance. Defaults to 1e-8.

    Returns:
        Certificate: One entry per constraint

    Raises:
        NonEvaluable: If a branch fails to evaluate on the grid
    """
    gains = np.linspace(0.0, u.r_max, grid_size)
    losses = -gains[::-1]
    up = _evaluate(u.u_plus, gains, "u_plus")
    um = _evaluate(u.u_minus, losses, "u_minus")

    d_plus = (_scalar(u.u_plus, FD_STEP, "u_plus") - _scalar(u.u_plus, 0.0, "u_plus")) / FD_STEP
    d_minus = (_scalar(u.u_minus, 0.0, "u_minus") - _scalar(u.u_minus, -FD_STEP, "u_minus")) / FD_STEP
    scale = max(d_plus, 1.0)

    checks = (
        _zero_check("u_plus_zero", 0.0, up[0], tol),
        _zero_check("u_minus_zero", 0.0, um[-1], tol),
        _monotone_check("u_plus_monotone", gains, up, tol),
        _monotone_check("u_minus_monotone", losses, um, tol),
        _curvature_check("u_plus_concave", gains, up, tol, concave=True),
        _curvature_check("u_minus_convex", losses, um, tol, concave=False),
        ConstraintCheck(
            "u_plus_slope_at_zero",
            d_plus / scale <= 1.0 + tol,
            None,
            f"slope {d_plus:.6g}, scale {scale:.6g}",
        ),
        ConstraintCheck(
            "u_minus_slope_at_zero",
            d_minus / scale > 1.0 + STRICT_MARGIN,
            None if d_minus / scale > 1.0 + STRICT_MARGIN else 0.0,
            f"slope {d_minus:.6g}, scaled {d_minus / scale:.6g}",
        ),
    )
    return Certificate(checks)


def _fixed_point(fn, ps, ys, start, tol, name):
    interior = np.flatnonzero((ps > start) & (ps > 0.0) & (ps < 1.0))
    g = ys[interior] - ps[interior]
    crossing = np.flatnonzero((g[:-1] > tol) & (g[1:] <= 0.0))
    if crossing.size == 0:
        return None, ConstraintCheck(f"{name}_fixed_point", False, None, "w(p) - p has no interior +/- crossing")
    lo, hi = ps[interior[crossing[0]]], ps[interior[crossing[0] + 1]]
    if g[crossing[0] + 1] == 0.0:
        root = float(hi)
    else:
        root = brentq(lambda p: _scalar(fn, p, name) - p, lo, hi, xtol=1e-14)
    residual = abs(_scalar(fn, root, name) - root)
    if residual > tol:
        return root, ConstraintCheck(f"{name}_fixed_point", False, root, f"residual {residual:.3g}")
    return root, ConstraintCheck(f"{name}_fixed_point", True, None, f"fixed point {root:.10g}")


def _inverse_s_check(ps, ys, start, tol, name):
    keep = ps >= start
    xs, vs = ps[keep], ys[keep]
    slopes = np.diff(vs) / np.diff(xs)
    label = f"{name}_shape"
    if slopes.size < 3:
        return ConstraintCheck(label, False, float(xs[0]), "too few grid points outside the flat region")
    k = int(np.argmin(slopes))
    if k == 0 or k == slopes.size - 1:
        return ConstraintCheck(label, False, float(xs[k]), "derivative has no interior turning point")
    falling = np.flatnonzero(np.diff(slopes[: k + 1]) > tol)
    if falling.size:
        return ConstraintCheck(label, False, float(xs[falling[0] + 1]), "derivative rises before the turning point")
    rising = np.flatnonzero(np.diff(slopes[k:]) < -tol)
    if rising.size:
        return ConstraintCheck(label, False, float(xs[k + rising[0] + 1]), "derivative falls after the turning point")
    if slopes[0] - slopes[k] <= tol or slopes[-1] - slopes[k] <= tol:
        return ConstraintCheck(label, False, float(xs[k]), "derivative is not strictly varying")
    return ConstraintCheck(label, True, None, f"turning point near {xs[k]:.6g}")


def validate_probability_distortion(w, grid_size=GRID_SIZE, tol=SHAPE_TOL):
    """
    Check both weighting branches on a grid over [0, 1]

    Each branch must fix 0 and 1, be non-decreasing, cross the diagonal from
    above at an interior fixed point (located by bracketing plus Brent's
    method) and have an inverse-S derivative: falling to a single interior
    minimum, then rising. Points of w_minus inside its flat region are exempt
    from the derivative check.

    Returns:
        Certificate: Checks plus the fixed points (a, b)
    """
    ps = np.linspace(0.0, 1.0, grid_size)
    checks = []
    fixed = []
    for name, fn, start in (("w_plus", w.w_plus, 0.0), ("w_minus", w.w_minus, w.flat_until)):
        ys = _evaluate(fn, ps, name)
        ok_ends = abs(ys[0]) <= ENDPOINT_TOL and abs(ys[-1] - 1.0) <= ENDPOINT_TOL
        checks.append(
            ConstraintCheck(f"{name}_endpoints", ok_ends, None if ok_ends else 0.0, f"w(0)={ys[0]:.3g}, w(1)={ys[-1]:.3g}")
        )
        outside = np.flatnonzero((ys < -tol) | (ys > 1.0 + tol))
        checks.append(
            ConstraintCheck(f"{name}_range", outside.size == 0, float(ps[outside[0]]) if outside.size else None)
        )
        checks.append(_monotone_check(f"{name}_monotone", ps, ys, tol))
        if start > 0.0:
            flat = ps <= start
            nonzero = np.flatnonzero(ys[flat] != 0.0)
            checks.append(
                ConstraintCheck(f"{name}_flat", nonzero.size == 0, float(ps[nonzero[0]]) if nonzero.size else None)
            )
        root, check = _fixed_point(fn, ps, ys, start, tol, name)
        fixed.append(root)
        checks.append(check)
        checks.append(_inverse_s_check(ps, ys, start, tol, name))
    return Certificate(tuple(checks), tuple(fixed))


def _is_unbiased(value, prob, grid_size):
    xs = np.linspace(-value.r_max, value.r_max, grid_size)
    ps = np.linspace(0.0, 1.0, grid_size)
    u_err = np.max(np.abs(_evaluate(value, xs, "u") - xs))
    w_err = max(
        np.max(np.abs(_evaluate(prob.w_plus, ps, "w_plus") - ps)),
        np.max(np.abs(_evaluate(prob.w_minus, ps, "w_minus") - ps)),
    )
    return bool(u_err <= UNBIASED_TOL * max(1.0, value.r_max) and w_err <= UNBIASED_TOL)


def _assemble(value, prob, kind, params, grid_size=GRID_SIZE):
    value_cert = validate_value_distortion(value, grid_size)
    prob_cert = validate_probability_distortion(prob, grid_size)
    certificate = Certificate(
        value_cert.checks + prob_cert.checks,
        prob_cert.fixed_points,
        _is_unbiased(value, prob, grid_size),
    )
    model = DistortionModel(value, prob, certificate, kind, params)
    if certificate.passed:
        logger.info("distortion model '%s' validated, fixed points %s", kind, certificate.fixed_points)
    else:
        logger.debug("distortion model '%s' failed checks %s", kind, certificate.failures())
    return model


def _require_usable(model):
    model.require_usable()
    return model


# Factories

def tversky_kahneman_model(alpha, beta, lam, gamma_plus, gamma_minus, r_max=1.0, grid_size=GRID_SIZE):
    """
    Power utilities with Tversky-Kahneman weighting

    u_plus(x) = x**alpha, u_minus(x) = -lam * (-x)**beta and
    w(p) = p**g / (p**g + (1 - p)**g)**(1 / g) with g = gamma_plus or gamma_minus.

    Args:
        alpha (float): Gain curvature in (0, 1]
        beta (float): Loss curvature in (0, 1]
        lam (float): Loss aversion, > 1
        gamma_plus (float): Gain weighting exponent in (0, 1]
        gamma_minus (float): Loss weighting exponent in (0, 1]
        r_max (float, optional): Reward bound. Defaults to 1.0.

    Returns:
        DistortionModel: Model with an all-pass certificate

    Raises:
        InvalidParameter: Parameters outside their ranges
        CertificateFailed: Parameters in range but the curves fail validation
    """
    for name, val in (("alpha", alpha), ("beta", beta), ("gamma_plus", gamma_plus), ("gamma_minus", gamma_minus)):
        if not 0.0 < val <= 1.0:
            raise InvalidParameter(f"{name} must lie in (0, 1], got {val}")
    if not lam > 1.0:
        raise InvalidParameter(f"lambda must exceed 1 (loss aversion), got {lam}")
    if not r_max > 0.0:
        raise InvalidParameter(f"r_max must be positive, got {r_max}")

    value = ValueDistortion(partial(_power_gain, alpha=alpha), partial(_power_loss, beta=beta, lam=lam), float(r_max))
    prob = ProbabilityDistortion(partial(_tk_weight, gamma=gamma_plus), partial(_tk_weight, gamma=gamma_minus))
    params = {
        "alpha": alpha,
        "beta": beta,
        "lambda": lam,
        "gamma_plus": gamma_plus,
        "gamma_minus": gamma_minus,
        "r_max": float(r_max),
    }
    return _require_usable(_assemble(value, prob, "tversky_kahneman", params, grid_size))


def identity_model(r_max=1.0, grid_size=GRID_SIZE):
    """Unbiased perception as knot tables of y = x; its certificate is marked unbiased."""
    value = ValueDistortion(
        PiecewiseLinear([0.0, r_max], [0.0, r_max]),
        PiecewiseLinear([-r_max, 0.0], [-r_max, 0.0]),
        float(r_max),
        kind="table",
    )
    line = PiecewiseLinear([0.0, 1.0], [0.0, 1.0])
    prob = ProbabilityDistortion(line, line, kind="table")
    return _assemble(value, prob, "identity", {"r_max": float(r_max)}, grid_size)


def table_model(u_plus, u_minus, w_plus, w_minus, r_max, grid_size=GRID_SIZE):
    """
    Model from user-supplied knot tables

    Args:
        u_plus, u_minus, w_plus, w_minus (dict): ``{"x": [...], "y": [...]}``
            with strictly increasing x covering the branch domain
        r_max (float): Reward bound

    Returns:
        DistortionModel: Validated model (all-pass or unbiased)
    """
    tables = {}
    domains = {
        "u_plus": (0.0, r_max),
        "u_minus": (-r_max, 0.0),
        "w_plus": (0.0, 1.0),
        "w_minus": (0.0, 1.0),
    }
    for name, knots in (("u_plus", u_plus), ("u_minus", u_minus), ("w_plus", w_plus), ("w_minus", w_minus)):
        try:
            table = PiecewiseLinear(knots["x"], knots["y"])
        except (KeyError, TypeError) as exc:
            raise InvalidParameter(f"{name} needs 'x' and 'y' knot arrays") from exc
        lo, hi = domains[name]
        if not (np.isclose(table.x[0], lo) and np.isclose(table.x[-1], hi)):
            raise InvalidParameter(f"{name} knots must span [{lo}, {hi}]")
        tables[name] = table
    value = ValueDistortion(tables["u_plus"], tables["u_minus"], float(r_max), kind="table")
    prob = ProbabilityDistortion(tables["w_plus"], tables["w_minus"], kind="table")
    params = {"r_max": float(r_max), **{name: table.to_dict() for name, table in tables.items()}}
    return _require_usable(_assemble(value, prob, "table", params, grid_size))


def flat_region_model(p_flat, base, grid_size=GRID_SIZE):
    """
    Give w_minus an exact zero region on [0, p_flat]

    Above p_flat the base weighting is rescaled: w(x) = w_base((x - p_flat) / (1 - p_flat)).

    Args:
        p_flat (float): Width of the flat region, below the base fixed point b
        base (DistortionModel): Validated model

    Returns:
        DistortionModel: Re-validated model; ``base`` itself when p_flat is 0

    Raises:
        FlatRegionTooLarge: If p_flat reaches the fixed point of base w_minus
    """
    if p_flat == 0.0:
        return base
    if not 0.0 < p_flat < 1.0:
        raise InvalidParameter(f"p_flat must lie in [0, 1), got {p_flat}")
    b = base.fixed_points[1]
    if b is None or p_flat >= b:
        raise FlatRegionTooLarge(f"p_flat={p_flat} must stay below the w_minus fixed point b={b}")
    prob = ProbabilityDistortion(
        base.prob.w_plus,
        partial(_flattened, base=base.prob.w_minus, p_flat=p_flat),
        kind=base.prob.kind,
        flat_until=p_flat,
    )
    params = {"p_flat": p_flat, "base": base.to_dict()}
    return _require_usable(_assemble(base.value, prob, "flat_region", params, grid_size))


def toward_identity(model, theta, grid_size=GRID_SIZE):
    """Blend u_minus toward the identity: (1 - theta) u_minus(x) + theta x."""
    if not 0.0 <= theta <= 1.0:
        raise InvalidParameter(f"theta must lie in [0, 1], got {theta}")
    if theta == 0.0:
        return model
    value = ValueDistortion(
        model.value.u_plus,
        partial(_blend_identity, base=model.value.u_minus, theta=theta),
        model.r_max,
        kind=model.value.kind,
    )
    params = {"theta": theta, "base": model.to_dict()}
    return _require_usable(_assemble(value, model.prob, "toward_identity", params, grid_size))


def load_model(spec, grid_size=GRID_SIZE):
    """
    Build a model from a distortion-file mapping

    Args:
        spec (dict): ``{"kind": ...}`` plus the family's fields

    Returns:
        DistortionModel: Validated model
    """
    kind = spec.get("kind")
    try:
        if kind == "tversky_kahneman":
            return tversky_kahneman_model(
                spec["alpha"],
                spec["beta"],
                spec["lambda"],
                spec["gamma_plus"],
                spec["gamma_minus"],
                spec.get("r_max", 1.0),
                grid_size,
            )
        if kind == "identity":
            return identity_model(spec.get("r_max", 1.0), grid_size)
        if kind == "table":
            return table_model(
                spec["u_plus"], spec["u_minus"], spec["w_plus"], spec["w_minus"], spec["r_max"], grid_size
            )
        if kind == "flat_region":
            return flat_region_model(spec["p_flat"], load_model(spec["base"], grid_size), grid_size)
        if kind == "toward_identity":
            return toward_identity(load_model(spec["base"], grid_size), spec["theta"], grid_size)
    except KeyError as exc:
        raise InvalidParameter(f"distortion spec of kind {kind!r} is missing {exc.args[0]!r}") from exc
    raise InvalidParameter(f"unknown distortion kind {kind!r}")


# Derived quantities

def lipschitz_constants(model, grid_size=GRID_SIZE):
    """Max grid slope of w_plus and w_minus, (L_plus, L_minus)."""
    ps = np.linspace(0.0, 1.0, grid_size)
    step = ps[1] - ps[0]
    l_plus = np.max(np.diff(model.w_plus(ps))) / step
    l_minus = np.max(np.diff(model.w_minus(ps))) / step
    return float(l_plus), float(l_minus)


def safe_envelope(model, grid_size=GRID_SIZE):
    """
    Slope k of the least steep linear u_minus_safe(r) = k r lying below u_minus

    Returns:
        float: k = max over negative grid points of u_minus(r) / r
    """
    rs = np.linspace(-model.r_max, 0.0, grid_size)[:-1]
    return float(np.max(model.u_minus(rs) / rs))


def is_safe_perception(model, reward_dist, c_bs, eps_bs, eta_flat=1e-12):
    """
    True iff the model induces no s-black swan on the reward distribution

    Args:
        model (DistortionModel): Perception under test
        reward_dist (RewardDistribution): Discrete rewards with probabilities
        c_bs (float): High-risk threshold
        eps_bs (float): Rarity threshold

    Returns:
        bool: True when the detected set is empty
    """
    from blackswan import detect_in_distribution

    report = detect_in_distribution(reward_dist, model, c_bs, eps_bs, eta_flat)
    return not report.events
