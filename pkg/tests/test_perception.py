"""Tests for the Human MDP, CPT values and the empirical estimator."""

import logging

import numpy as np
import pytest

from distortion import Certificate, ConstraintCheck, DistortionModel, tversky_kahneman_model
from errors import CertificateFailed, DimensionMismatch, DuplicateState, EmptySample, NonInjectiveReward
from mdp_core import Policy, build_mdp, sample_trajectories, sample_trajectory, value_function
from perception import (
    EmpiricalCdf,
    RewardDistribution,
    augment_state,
    build_hmdp,
    cpt_value,
    estimate_hemdp,
    perceive_trajectories,
    perceive_trajectory,
    perception_gaps,
    rank_dependent_expectation,
    reward_distribution,
    sample_rewards,
    state_distortion_map,
)

MILD_REWARDS = [-2.0, -1.0, 1.0, 3.0]
MILD_PROBS = [0.1, 0.3, 0.4, 0.2]


@pytest.fixture(scope="module")
def tk_3():
    return tversky_kahneman_model(0.88, 0.88, 2.25, 0.61, 0.69, r_max=3.0)


@pytest.fixture
def uniform(two_state):
    return Policy.stationary(np.full((2, 2), 0.5), two_state.horizon)


def test_insurance_hmdp_distorts_the_rare_loss(insurance, no_pay, tk_1000):
    pm = build_hmdp(insurance, no_pay, tk_1000, 0)

    assert pm.reward_dagger[3, 1] == pytest.approx(-2.25 * 1000.0**0.88)
    assert pm.occupancy_dagger[3, 1] == pytest.approx(float(tk_1000.w_minus(0.005)))
    # the two zero-reward pairs are weighted on the gain branch
    assert pm.occupancy_dagger[1, 1] == pytest.approx(float(tk_1000.w_plus(0.5) - tk_1000.w_plus(0.005)))
    assert pm.occupancy_dagger[0, 1] == pytest.approx(float(1.0 - tk_1000.w_plus(0.5)))
    assert pm.occupancy_dagger[2, 0] == 0.0


def test_ordering_is_ascending_occupancy_with_index_ties(insurance, no_pay, tk_1000):
    pm = build_hmdp(insurance, no_pay, tk_1000, 0)
    flat = pm.occupancy.table.ravel()[pm.ordering]

    assert np.all(np.diff(flat) >= 0.0)
    zero_pairs = pm.ordering[flat == 0.0]
    assert list(zero_pairs) == sorted(zero_pairs)


def test_perception_gaps_match_stored_values(insurance, no_pay, tk_1000):
    pm = build_hmdp(insurance, no_pay, tk_1000, 0)
    eps_r, eps_d = perception_gaps(pm)

    assert (eps_r, eps_d) == (pm.eps_r, pm.eps_d)
    assert eps_r == pytest.approx(np.max(np.abs(insurance.reward - tk_1000.u(insurance.reward))))
    assert eps_d > 0.0


def test_identity_perception_changes_nothing(insurance, no_pay, identity_1000):
    pm = build_hmdp(insurance, no_pay, identity_1000, 0)

    assert pm.eps_r == pytest.approx(0.0, abs=1e-9)
    assert pm.eps_d == pytest.approx(0.0, abs=1e-12)
    assert pm.value() == pytest.approx(value_function(insurance, no_pay, 0))


def test_unusable_model_is_rejected(insurance, no_pay, identity_1000):
    failed = Certificate((ConstraintCheck("w_plus_shape", False),))
    model = DistortionModel(identity_1000.value, identity_1000.prob, failed, "table")

    with pytest.raises(CertificateFailed):
        build_hmdp(insurance, no_pay, model, 0)


def test_reward_distribution_of_insurance(insurance, no_pay):
    dist = reward_distribution(insurance, no_pay, 0)

    np.testing.assert_allclose(dist.support, [-1000.0, 0.0])
    np.testing.assert_allclose(dist.probabilities, [0.005, 0.995])
    assert dist.cdf_at(-1001.0) == 0.0
    assert dist.cdf_at(-500.0) == pytest.approx(0.005)
    assert dist.cdf_at(0.0) == pytest.approx(1.0)


def test_from_atoms_aggregates_repeats():
    dist = RewardDistribution.from_atoms([1.0, -1.0, 1.0, 5.0], [0.25, 0.25, 0.5, 0.0])

    np.testing.assert_allclose(dist.support, [-1.0, 1.0])
    np.testing.assert_allclose(dist.probabilities, [0.25, 0.75])
    assert dist.mean() == pytest.approx(0.5)


def test_from_atoms_requires_unit_mass():
    with pytest.raises(DimensionMismatch):
        RewardDistribution.from_atoms([0.0, 1.0], [0.5, 0.4])


def test_cpt_value_of_insurance(insurance, no_pay, identity_1000, tk_1000):
    dist = reward_distribution(insurance, no_pay, 0)

    assert cpt_value(dist, identity_1000, insurance.normalizer) == pytest.approx(-10.0)
    expected = 2.0 * float(tk_1000.u(-1000.0)) * float(tk_1000.w_minus(0.005))
    assert cpt_value(dist, tk_1000, insurance.normalizer) == pytest.approx(expected)


def test_rank_dependent_expectation_of_identity_is_the_mean(identity):
    assert rank_dependent_expectation(MILD_REWARDS, MILD_PROBS, identity) == pytest.approx(
        float(np.dot(MILD_REWARDS, MILD_PROBS))
    )


def test_state_distortion_map_needs_injective_rewards(insurance, no_pay, tk_1000):
    with pytest.raises(NonInjectiveReward):
        state_distortion_map(insurance, no_pay, tk_1000, 0)


def test_state_distortion_map_is_a_monotone_cdf(two_state, uniform, tk):
    h = state_distortion_map(two_state, uniform, tk, 0)
    dist = reward_distribution(two_state, uniform, 0)
    f_neg = dist.cdf_at(-1e-12)

    assert np.all(np.diff(h.mapped) >= -1e-12)
    assert h.mapped[0] == pytest.approx(float(tk.w_minus(dist.cdf[0])))
    assert h.mapped[-1] == pytest.approx(float(tk.w_minus(f_neg) + tk.w_plus(1.0 - f_neg)))
    assert float(h(dist.support[1])) == pytest.approx(h.mapped[1])
    assert float(h(-2.0)) == 0.0


def test_identity_distortion_map_is_the_cdf(two_state, uniform, identity):
    h = state_distortion_map(two_state, uniform, identity, 0)
    np.testing.assert_allclose(h.mapped, h.cdf, atol=1e-12)


def test_empirical_cdf_steps():
    edf = EmpiricalCdf.from_samples([0.0, 1.0, 1.0, 3.0])

    np.testing.assert_allclose(edf([-1.0, 0.0, 0.5, 1.0, 3.0]), [0.0, 0.25, 0.25, 0.75, 1.0])
    assert edf.survival_integral(lambda p: p) == pytest.approx(np.mean([0.0, 1.0, 1.0, 3.0]))


def test_empirical_cdf_cumulates_weights():
    edf = EmpiricalCdf.from_samples([2.0, 0.0, 2.0], weights=[1.0, 2.0, 1.0])

    np.testing.assert_allclose(edf([0.0, 2.0]), [0.5, 1.0])
    with pytest.raises(DimensionMismatch):
        EmpiricalCdf.from_samples([0.0, 1.0], weights=[1.0])


def test_discounted_estimate_matches_the_value(discounted_chain, identity):
    policy = Policy.stationary([[1.0], [1.0]], discounted_chain.horizon)
    _, _, rewards = sample_trajectories(discounted_chain, policy, 0, 50, seed=1)
    weights = np.broadcast_to(discounted_chain.gamma ** np.arange(discounted_chain.horizon), rewards.shape)

    estimate = estimate_hemdp(rewards.ravel(), identity, discounted_chain.normalizer, weights=weights.ravel())

    assert estimate.cpt_value_estimate == pytest.approx(value_function(discounted_chain, policy, 0), abs=1e-12)
    assert estimate.cpt_value_estimate == pytest.approx(-1.0, abs=1e-12)


def test_estimate_is_exact_when_samples_match_the_distribution(tk_3):
    samples = [-2.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0]
    dist = RewardDistribution.from_atoms(MILD_REWARDS, MILD_PROBS)

    estimate = estimate_hemdp(samples, tk_3, 1.0)

    assert estimate.n_samples == 10
    assert estimate.cpt_value_estimate == pytest.approx(cpt_value(dist, tk_3, 1.0), abs=1e-9)


def test_estimate_converges_on_sampled_rewards(tk_3):
    dist = RewardDistribution.from_atoms(MILD_REWARDS, MILD_PROBS)
    exact = cpt_value(dist, tk_3, 1.0)

    estimate = estimate_hemdp(sample_rewards(dist, 20000, seed=2), tk_3, 1.0)

    assert estimate.cpt_value_estimate == pytest.approx(exact, abs=0.1)


def test_sampled_rewards_are_reproducible():
    dist = RewardDistribution.from_atoms(MILD_REWARDS, MILD_PROBS)
    np.testing.assert_array_equal(sample_rewards(dist, 50, seed=9), sample_rewards(dist, 50, seed=9))


def test_estimate_rejects_empty_samples(tk):
    with pytest.raises(EmptySample):
        estimate_hemdp([], tk, 1.0)


def test_estimation_gaps_against_the_hmdp(insurance, no_pay, identity_1000):
    reference = build_hmdp(insurance, no_pay, identity_1000, 0)
    states, actions, rewards = sample_trajectories(insurance, no_pay, 0, 5000, seed=4)
    pairs = np.stack([states[:, :-1].ravel(), actions.ravel()], axis=1)

    estimate = estimate_hemdp(rewards.ravel(), identity_1000, insurance.normalizer, reference, pairs)

    assert estimate.kappa_r == pytest.approx(0.0, abs=1e-9)
    assert estimate.kappa_d < 0.01
    assert estimate.to_dict()["n"] == 10000


def test_estimated_visitation_is_distorted_like_the_reference(insurance, no_pay, tk_1000):
    reference = build_hmdp(insurance, no_pay, tk_1000, 0)
    states, actions, rewards = sample_trajectories(insurance, no_pay, 0, 10000, seed=8)
    pairs = np.stack([states[:, :-1].ravel(), actions.ravel()], axis=1)

    estimate = estimate_hemdp(rewards.ravel(), tk_1000, insurance.normalizer, reference, pairs)

    assert reference.eps_d > 0.05
    assert estimate.kappa_d < 0.02


def test_estimation_pairs_must_align(insurance, no_pay, identity_1000):
    reference = build_hmdp(insurance, no_pay, identity_1000, 0)
    with pytest.raises(DimensionMismatch):
        estimate_hemdp([0.0, 0.0], identity_1000, 2.0, reference, [[0, 1]])


def test_perceived_trajectory_carries_levels(two_state, uniform, tk):
    h = state_distortion_map(two_state, uniform, tk, 0)
    traj = sample_trajectory(two_state, uniform, 0, seed=8)

    perceived = perceive_trajectory(traj, tk, h)

    assert perceived.states == traj.states
    np.testing.assert_allclose(perceived.rewards, tk.u(np.asarray(traj.rewards)))
    np.testing.assert_allclose(perceived.levels, h(traj.rewards))


def test_perceived_trajectory_without_map_warns(two_state, uniform, tk, caplog):
    traj = sample_trajectory(two_state, uniform, 0, seed=8)
    with caplog.at_level(logging.WARNING, logger="perception"):
        perceived = perceive_trajectory(traj, tk)

    assert perceived.levels == ()
    assert "distortion map" in caplog.text


def test_batch_perception_warns_once(two_state, uniform, tk, caplog):
    trajectories = [sample_trajectory(two_state, uniform, 0, seed=s) for s in range(4)]
    with caplog.at_level(logging.WARNING, logger="perception"):
        perceived = perceive_trajectories(trajectories, tk)

    assert len(perceived) == 4
    assert sum("distortion map" in rec.getMessage() for rec in caplog.records) == 1
    assert perceived[2] == perceive_trajectory(trajectories[2], tk)


def test_augmented_state_is_never_visited(insurance, no_pay, tk_1000):
    pm = build_hmdp(insurance, no_pay, tk_1000, 0)

    bigger = augment_state(pm, "audit")

    assert bigger.source.n_states == 5
    assert bigger.source.labels[-1] == "audit"
    np.testing.assert_allclose(bigger.occupancy.table[-1], 0.0)
    np.testing.assert_allclose(bigger.occupancy.table[:-1], pm.occupancy.table)
    assert bigger.value() == pytest.approx(pm.value())


def test_augmenting_an_existing_label_fails(insurance, no_pay, tk_1000):
    pm = build_hmdp(insurance, no_pay, tk_1000, 0)
    with pytest.raises(DuplicateState):
        augment_state(pm, "risk")


@pytest.mark.parametrize("state_order, action_order", [((1, 0), (0, 1)), ((0, 1), (1, 0)), ((1, 0), (1, 0))])
def test_relabeling_states_and_actions_leaves_perception_unchanged(two_state_spec, tk, state_order, action_order):
    s_idx, a_idx = np.array(state_order), np.array(action_order)
    rows = np.array([[0.3, 0.7], [0.6, 0.4]])
    mdp = build_mdp(two_state_spec)
    policy = Policy.stationary(rows, mdp.horizon)
    relabeled_spec = dict(two_state_spec)
    relabeled_spec["transition"] = np.asarray(two_state_spec["transition"])[s_idx][:, a_idx][:, :, s_idx]
    relabeled_spec["reward"] = np.asarray(two_state_spec["reward"])[s_idx][:, a_idx]
    relabeled = build_mdp(relabeled_spec)
    relabeled_policy = Policy.stationary(rows[s_idx][:, a_idx], relabeled.horizon)
    start = int(np.flatnonzero(s_idx == 0)[0])

    pm = build_hmdp(mdp, policy, tk, 0)
    other = build_hmdp(relabeled, relabeled_policy, tk, start)

    assert other.eps_r == pytest.approx(pm.eps_r, abs=1e-12)
    assert other.eps_d == pytest.approx(pm.eps_d, abs=1e-12)
    value = cpt_value(reward_distribution(mdp, policy, 0), tk, mdp.normalizer)
    relabeled_value = cpt_value(reward_distribution(relabeled, relabeled_policy, start), tk, relabeled.normalizer)
    assert relabeled_value == pytest.approx(value, abs=1e-12)
    np.testing.assert_allclose(other.occupancy_dagger, pm.occupancy_dagger[s_idx][:, a_idx], atol=1e-12)
