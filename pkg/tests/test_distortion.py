"""Tests for distortion families, their certificates and derived constants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distortion import (
    Certificate,
    ConstraintCheck,
    DistortionModel,
    PiecewiseLinear,
    ProbabilityDistortion,
    ValueDistortion,
    flat_region_model,
    is_safe_perception,
    lipschitz_constants,
    load_model,
    safe_envelope,
    table_model,
    toward_identity,
    tversky_kahneman_model,
    validate_probability_distortion,
    validate_value_distortion,
)
from errors import CertificateFailed, FlatRegionTooLarge, InvalidParameter, NonEvaluable
from perception import RewardDistribution

CONCAVE_GAIN = {"x": [0.0, 0.5, 1.0], "y": [0.0, 0.6, 1.0]}
CONVEX_LOSS = {"x": [-1.0, -0.5, 0.0], "y": [-2.0, -1.5, 0.0]}
INVERSE_S = {"x": [0.0, 0.1, 0.5, 0.9, 1.0], "y": [0.0, 0.2, 0.5, 0.8, 1.0]}


def test_tversky_kahneman_certificate_passes(tk):
    cert = tk.certificate

    assert cert.passed
    assert not cert.unbiased
    assert cert.failures() == []
    a, b = tk.fixed_points
    assert 0.0 < a < 1.0 and 0.0 < b < 1.0
    assert float(tk.w_plus(a)) == pytest.approx(a, abs=1e-9)
    assert float(tk.w_minus(b)) == pytest.approx(b, abs=1e-9)


def test_tversky_kahneman_closed_forms(tk_1000):
    assert float(tk_1000.u(-1000.0)) == pytest.approx(-2.25 * 1000.0**0.88)
    assert float(tk_1000.u(-1000.0)) == pytest.approx(-982.16, abs=0.01)
    assert float(tk_1000.u(10.0)) == pytest.approx(10.0**0.88)
    np.testing.assert_allclose(tk_1000.w_plus([0.0, 1.0]), [0.0, 1.0])


def test_standard_models_all_pass(standard_models):
    assert all(model.certificate.passed for model in standard_models)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha": 0.0},
        {"alpha": 1.2},
        {"beta": -0.5},
        {"lam": 1.0},
        {"gamma_plus": 0.0},
        {"r_max": 0.0},
    ],
)
def test_tversky_kahneman_rejects_out_of_range_parameters(kwargs):
    params = {"alpha": 0.88, "beta": 0.88, "lam": 2.25, "gamma_plus": 0.61, "gamma_minus": 0.69, **kwargs}
    with pytest.raises(InvalidParameter):
        tversky_kahneman_model(**params)


def test_identity_is_usable_through_the_unbiased_limit(identity):
    assert identity.certificate.unbiased
    assert not identity.certificate.passed
    assert identity.usable
    identity.require_usable()
    assert not identity.certificate.check("u_minus_slope_at_zero").passed


def test_table_model_with_inverse_s_weights_passes():
    model = table_model(CONCAVE_GAIN, CONVEX_LOSS, INVERSE_S, INVERSE_S, r_max=1.0)

    assert model.certificate.passed
    assert model.fixed_points[0] == pytest.approx(0.5, abs=1e-9)
    assert float(model.u(-0.25)) == pytest.approx(-0.75)


def test_table_model_reports_the_failing_constraint():
    decreasing = {"x": [0.0, 0.5, 1.0], "y": [0.0, 0.8, 0.6]}
    with pytest.raises(CertificateFailed) as info:
        table_model(decreasing, CONVEX_LOSS, INVERSE_S, INVERSE_S, r_max=1.0)

    cert = info.value.certificate
    assert "u_plus_monotone" in cert.failures()
    assert 0.5 < cert.check("u_plus_monotone").witness < 0.51


def test_table_model_without_loss_aversion_fails():
    linear_loss = {"x": [-1.0, 0.0], "y": [-1.0, 0.0]}
    with pytest.raises(CertificateFailed) as info:
        table_model(CONCAVE_GAIN, linear_loss, INVERSE_S, INVERSE_S, r_max=1.0)
    assert "u_minus_slope_at_zero" in info.value.certificate.failures()


def test_table_knots_must_span_domain():
    short = {"x": [0.0, 0.5], "y": [0.0, 0.5]}
    with pytest.raises(InvalidParameter):
        table_model(CONCAVE_GAIN, CONVEX_LOSS, short, INVERSE_S, r_max=1.0)


def test_piecewise_linear_rejects_unsorted_knots():
    with pytest.raises(InvalidParameter):
        PiecewiseLinear([0.0, 0.5, 0.4], [0.0, 0.1, 0.2])


def test_non_finite_branch_is_not_evaluable():
    broken = ValueDistortion(lambda x: np.full_like(x, np.nan), lambda x: x, 1.0)
    with pytest.raises(NonEvaluable):
        validate_value_distortion(broken)


def test_flat_region_zeroes_small_loss_probabilities(flat_model):
    ps = np.linspace(0.0, 0.02, 50)

    assert flat_model.certificate.passed
    np.testing.assert_array_equal(flat_model.w_minus(ps), 0.0)
    assert float(flat_model.w_minus(0.03)) > 0.0
    assert float(flat_model.w_minus(1.0)) == pytest.approx(1.0)


def test_flat_region_of_zero_returns_base(tk):
    assert flat_region_model(0.0, tk) is tk


def test_flat_region_must_stay_below_fixed_point(tk):
    with pytest.raises(FlatRegionTooLarge):
        flat_region_model(0.9, tk)


def test_toward_identity_interpolates_loss_branch(tk):
    half = toward_identity(tk, 0.5)
    r = -0.4

    assert half.certificate.passed
    assert float(half.u(r)) == pytest.approx(0.5 * float(tk.u(r)) + 0.5 * r)
    assert toward_identity(tk, 0.0) is tk


def test_toward_identity_at_one_loses_loss_aversion(tk):
    with pytest.raises(CertificateFailed):
        toward_identity(tk, 1.0)


def test_load_model_round_trips_parameters(tk):
    rebuilt = load_model(tk.to_dict())

    assert rebuilt.to_dict() == tk.to_dict()
    np.testing.assert_allclose(rebuilt.w_minus([0.1, 0.7]), tk.w_minus([0.1, 0.7]))


@pytest.mark.parametrize("spec", [{"kind": "cubic"}, {"kind": "tversky_kahneman", "alpha": 0.5}])
def test_load_model_rejects_unknown_or_incomplete_specs(spec):
    with pytest.raises(InvalidParameter):
        load_model(spec)


def test_unusable_model_cannot_be_used():
    decreasing = PiecewiseLinear([0.0, 1.0], [0.0, -1.0])
    line = PiecewiseLinear([0.0, 1.0], [0.0, 1.0])
    model = DistortionModel(
        ValueDistortion(decreasing, PiecewiseLinear([-1.0, 0.0], [-1.0, 0.0]), 1.0),
        ProbabilityDistortion(line, line),
        Certificate((ConstraintCheck("u_plus_monotone", False, 1.0),)),
        "table",
    )

    assert not model.usable
    with pytest.raises(CertificateFailed, match="u_plus_monotone"):
        model.require_usable()


def test_identity_decision_weights_are_probabilities(identity):
    probs = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(identity.decision_weights([-0.5, 0.1, 0.4], probs), probs)


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False), min_size=1, max_size=6),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_decision_weights_are_nonnegative_and_split_by_sign(tk, values, seed):
    values = np.asarray(values)
    probs = np.random.default_rng(seed).dirichlet(np.ones(values.size))

    weights = tk.decision_weights(values, probs)
    f_neg = probs[values < 0.0].sum()

    assert np.all(weights >= -1e-12)
    assert weights[values < 0.0].sum() == pytest.approx(float(tk.w_minus(f_neg)), abs=1e-9)
    assert weights[values >= 0.0].sum() == pytest.approx(float(tk.w_plus(1.0 - f_neg)), abs=1e-9)


def test_lipschitz_and_envelope_of_identity(identity):
    l_plus, l_minus = lipschitz_constants(identity)

    assert l_plus == pytest.approx(1.0)
    assert l_minus == pytest.approx(1.0)
    assert safe_envelope(identity) == pytest.approx(1.0)


def test_safe_envelope_bounds_the_loss_branch(tk_1000):
    k = safe_envelope(tk_1000)
    rs = np.linspace(-1000.0, -1.0, 200)
    assert np.all(tk_1000.u_minus(rs) >= k * rs - 1e-6)


def test_flat_region_perception_is_unsafe_for_insurance(flat_model, tk_1000):
    rewards = RewardDistribution.from_atoms([-1000.0, 0.0], [0.005, 0.995])

    assert not is_safe_perception(flat_model, rewards, 500.0, 0.01)
    assert is_safe_perception(tk_1000, rewards, 500.0, 0.01)


def _identity(x):
    return np.asarray(x, dtype=float)


@pytest.mark.parametrize(
    "w, expected",
    [
        (_identity, {"fixed_point", "shape"}),
        (np.square, {"fixed_point", "shape"}),
    ],
    ids=["identity", "square"],
)
def test_weightings_without_inverse_s_shape_fail(w, expected):
    cert = validate_probability_distortion(ProbabilityDistortion(w, w))

    failed = set(cert.failures())
    for branch in ("w_plus", "w_minus"):
        assert {f"{branch}_{name}" for name in expected} <= failed
    assert "w_plus_monotone" not in failed


@pytest.mark.parametrize(
    "u_plus, u_minus, expected",
    [
        (np.square, lambda x: 2.0 * x, "u_plus_concave"),
        (np.sqrt, lambda x: -np.square(x), "u_minus_convex"),
    ],
    ids=["convex-gains", "concave-losses"],
)
def test_value_distortions_with_wrong_curvature_fail(u_plus, u_minus, expected):
    cert = validate_value_distortion(ValueDistortion(u_plus, u_minus, 1.0))
    assert expected in cert.failures()


def test_identity_utility_lacks_only_loss_aversion():
    cert = validate_value_distortion(ValueDistortion(_identity, _identity, 1.0))
    assert cert.failures() == ["u_minus_slope_at_zero"]


def test_extreme_weighting_curvature_is_rejected():
    with pytest.raises(CertificateFailed) as info:
        tversky_kahneman_model(0.88, 0.88, 2.25, 0.2, 0.69)
    assert "w_plus_monotone" in info.value.certificate.failures()


def test_weighting_by_branch(tk):
    ps = np.array([0.1, 0.5, 0.9])

    np.testing.assert_allclose(tk.w(ps, "plus"), tk.w_plus(ps))
    np.testing.assert_allclose(tk.w(ps, "minus"), tk.w_minus(ps))
    with pytest.raises(InvalidParameter):
        tk.w(ps, "sideways")
