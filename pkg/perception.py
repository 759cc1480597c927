"""Human MDP construction and estimation.

The Human MDP keeps the ground-truth dynamics but perceives rewards through
``u`` and the normalized visitation measure through ``w``: pairs are sorted by
ascending occupancy, their cumulative occupancies are distorted and the
distorted masses are recovered by differencing. The estimation side rebuilds
the CPT value from sampled rewards with empirical distribution functions.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from errors import DimensionMismatch, DuplicateState, EmptySample, NonInjectiveReward
from mdp_core import Mdp, Policy, occupancy

logger = logging.getLogger(__name__)

__all__ = [
    "RewardDistribution",
    "PerceivedMdp",
    "DistortionMap",
    "EmpiricalCdf",
    "HemdpEstimate",
    "PerceivedTrajectory",
    "build_hmdp",
    "perception_gaps",
    "state_distortion_map",
    "reward_distribution",
    "rank_dependent_expectation",
    "cpt_value",
    "estimate_hemdp",
    "sample_rewards",
    "perceive_trajectory",
    "perceive_trajectories",
    "augment_state",
]


@dataclass(frozen=True, eq=False)
class RewardDistribution:
    """Discrete reward law induced by a policy, support sorted ascending."""

    support: np.ndarray
    probabilities: np.ndarray
    cdf: np.ndarray

    @classmethod
    def from_atoms(cls, values, probs):
        """
        Aggregate equal reward values and drop zero-mass atoms

        Args:
            values (array-like): Reward values, any order, repeats allowed
            probs (array-like): Non-negative masses summing to 1

        Returns:
            RewardDistribution: Sorted, aggregated distribution
        """
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1:
            raise DimensionMismatch("reward values and probabilities must be matching 1-d arrays")
        keep = probs > 0.0
        support, inverse = np.unique(values[keep], return_inverse=True)
        masses = np.bincount(inverse, weights=probs[keep], minlength=support.size)
        if support.size == 0 or abs(masses.sum() - 1.0) > 1e-9:
            raise DimensionMismatch(f"reward masses must sum to 1, got {masses.sum():.12g}")
        return cls(support, masses, np.cumsum(masses))

    def cdf_at(self, r):
        """F(r) = P(R <= r)."""
        idx = int(np.searchsorted(self.support, r, side="right"))
        return 0.0 if idx == 0 else float(self.cdf[idx - 1])

    def mean(self):
        return float(np.dot(self.support, self.probabilities))

    def to_dict(self):
        return {"support": self.support.tolist(), "probabilities": self.probabilities.tolist()}


@dataclass(frozen=True, eq=False)
class PerceivedMdp:
    """
    Human MDP built from a ground-truth MDP, a policy and a distortion model

    Attributes:
        source (Mdp): Ground-truth process
        model (DistortionModel): Perception
        policy (Policy): Policy whose occupancy is perceived
        start_state (int): Initial state
        occupancy (OccupancyMeasure): True P^pi
        reward_dagger (numpy.ndarray): u(R), [S, A]
        occupancy_dagger (numpy.ndarray): Distorted P^pi, [S, A], not renormalized
        ordering (numpy.ndarray): Flat pair indices in cumulation order
        eps_r (float): max |R - R_dagger|
        eps_d (float): max |P^pi - P_dagger|
    """

    source: Mdp
    model: object
    policy: Policy
    start_state: int
    occupancy: object
    reward_dagger: np.ndarray
    occupancy_dagger: np.ndarray
    ordering: np.ndarray
    eps_r: float
    eps_d: float

    def value(self):
        return float(self.occupancy.normalizer * np.sum(self.reward_dagger * self.occupancy_dagger))

    def to_dict(self):
        n_actions = self.source.n_actions
        return {
            "eps_r": self.eps_r,
            "eps_d": self.eps_d,
            "value": self.value(),
            "reward_dagger": self.reward_dagger.tolist(),
            "occupancy": self.occupancy.table.tolist(),
            "occupancy_dagger": self.occupancy_dagger.tolist(),
            "ordering": [[int(i // n_actions), int(i % n_actions)] for i in self.ordering],
        }


def _occupancy_ordering(table):
    flat = table.ravel()
    # primary key ascending occupancy, ties by flat (s, a) index
    return np.lexsort((np.arange(flat.size), flat))


def _distort_occupancy(table, reward, model):
    """Rank-dependent masses of an occupancy table, with the ordering used."""
    flat_p = table.ravel()
    flat_r = reward.ravel()
    ordering = _occupancy_ordering(table)

    cum = np.clip(np.cumsum(flat_p[ordering]), 0.0, 1.0)
    prev = np.concatenate(([0.0], cum[:-1]))
    gains = flat_r[ordering] >= 0.0
    masses = np.where(
        gains,
        model.w_plus(cum) - model.w_plus(prev),
        model.w_minus(cum) - model.w_minus(prev),
    )
    distorted = np.empty_like(flat_p)
    distorted[ordering] = masses
    return distorted.reshape(table.shape), ordering


def build_hmdp(mdp, policy, model, start_state):
    """
    Distort rewards and visitation of ``mdp`` under ``policy``

    Each distorted mass is the difference of w at consecutive cumulative
    occupancies, using the branch given by the sign of the upper pair's reward.

    Args:
        mdp (Mdp): Ground-truth process
        policy (Policy): Policy
        model (DistortionModel): Validated perception
        start_state (int): Initial state

    Returns:
        PerceivedMdp: Human MDP with its perception gaps

    Raises:
        CertificateFailed: If the model is not usable
    """
    model.require_usable()
    occ = occupancy(mdp, policy, start_state)
    occupancy_dagger, ordering = _distort_occupancy(occ.table, mdp.reward, model)
    reward_dagger = model.u(mdp.reward)

    eps_r = float(np.max(np.abs(mdp.reward - reward_dagger)))
    eps_d = float(np.max(np.abs(occ.table - occupancy_dagger)))
    logger.debug("built HMDP: eps_r=%.6g eps_d=%.6g", eps_r, eps_d)
    return PerceivedMdp(
        mdp, model, policy, start_state, occ, reward_dagger, occupancy_dagger, ordering, eps_r, eps_d
    )


def perception_gaps(pm):
    """Recompute (eps_r, eps_d) from the stored tables."""
    eps_r = float(np.max(np.abs(pm.source.reward - pm.reward_dagger)))
    eps_d = float(np.max(np.abs(pm.occupancy.table - pm.occupancy_dagger)))
    return eps_r, eps_d


def reward_distribution(mdp, policy, start_state):
    """Push the occupancy measure forward through R over reachable pairs."""
    occ = occupancy(mdp, policy, start_state)
    return RewardDistribution.from_atoms(mdp.reward.ravel(), occ.table.ravel())


@dataclass(frozen=True, eq=False)
class DistortionMap:
    """Discrete map r -> h(r) on the support of the reward distribution."""

    support: np.ndarray
    cdf: np.ndarray
    mapped: np.ndarray

    def __call__(self, r):
        idx = np.searchsorted(self.support, np.asarray(r, dtype=float), side="right")
        return np.where(idx == 0, 0.0, self.mapped[np.maximum(idx - 1, 0)])

    def as_dict(self):
        return {float(r): float(h) for r, h in zip(self.support, self.mapped)}


def state_distortion_map(mdp, policy, model, start_state):
    """
    Map each reachable reward level to its distorted cumulative probability

    On losses h(r) = w_minus(F(r)); on gains the decumulative w_plus weights
    continue from w_minus(F(0-)), so the distorted cumulative distribution at
    each support point equals h evaluated there.

    Args:
        mdp (Mdp): Ground-truth process
        policy (Policy): Policy
        model (DistortionModel): Perception
        start_state (int): Initial state

    Returns:
        DistortionMap: Monotone step map on the reward support

    Raises:
        NonInjectiveReward: If two reachable pairs share a reward value
    """
    model.require_usable()
    occ = occupancy(mdp, policy, start_state)
    reachable = mdp.reward[occ.table > 0.0]
    if np.unique(reachable).size != reachable.size:
        raise NonInjectiveReward(
            "reachable pairs share reward values; perturb rewards (mdp_core.perturb_rewards) first"
        )
    dist = reward_distribution(mdp, policy, start_state)
    neg = dist.support < 0.0
    f_neg = float(dist.cdf[neg][-1]) if np.any(neg) else 0.0
    mapped = np.where(
        neg,
        model.w_minus(dist.cdf),
        model.w_minus(f_neg) + model.w_plus(1.0 - f_neg) - model.w_plus(np.clip(1.0 - dist.cdf, 0.0, 1.0)),
    )
    return DistortionMap(dist.support, dist.cdf, mapped)


def rank_dependent_expectation(values, probs, model):
    """Choquet expectation of ``values`` under the model's weighting functions."""
    values = np.asarray(values, dtype=float)
    return float(np.dot(values, model.decision_weights(values, probs)))


def cpt_value(reward_dist, model, normalizer):
    """
    CPT value of a reward distribution

    Args:
        reward_dist (RewardDistribution): Rewards and their occupancy masses
        model (DistortionModel): Usable perception
        normalizer (float): Sum of discount weights over the horizon

    Returns:
        float: normalizer * sum_i u(R_i) * decision_weight_i
    """
    model.require_usable()
    utilities = model.u(reward_dist.support)
    return normalizer * rank_dependent_expectation(utilities, reward_dist.probabilities, model)


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Right-continuous step function over sorted sample values."""

    values: np.ndarray
    levels: np.ndarray

    @classmethod
    def from_samples(cls, samples, weights=None):
        """Cumulate normalized weights (counts when unweighted) over sorted values."""
        values, inverse = np.unique(np.asarray(samples, dtype=float).ravel(), return_inverse=True)
        w = np.ones(inverse.size) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != inverse.shape:
            raise DimensionMismatch("weights must align with samples")
        mass = np.bincount(inverse, weights=w, minlength=values.size)
        return cls(values, np.cumsum(mass) / mass.sum())

    def __call__(self, z):
        idx = np.searchsorted(self.values, np.asarray(z, dtype=float), side="right")
        return np.where(idx == 0, 0.0, self.levels[np.maximum(idx - 1, 0)])

    def survival_integral(self, weight):
        """Integral over z >= 0 of weight(1 - F(z)), exact for a step function."""
        lower = np.concatenate(([0.0], self.values[:-1]))
        survival = 1.0 - np.concatenate(([0.0], self.levels[:-1]))
        widths = self.values - lower
        return float(np.sum(widths * weight(np.clip(survival, 0.0, 1.0))))


@dataclass(frozen=True, eq=False)
class HemdpEstimate:
    n_samples: int
    edf_plus: EmpiricalCdf
    edf_minus: EmpiricalCdf
    cpt_value_estimate: float
    kappa_r: float = None
    kappa_d: float = None

    def to_dict(self):
        return {
            "n": self.n_samples,
            "value": self.cpt_value_estimate,
            "kappa_r": self.kappa_r,
            "kappa_d": self.kappa_d,
        }


def estimate_hemdp(rewards, model, normalizer, reference=None, pairs=None, weights=None):
    """
    Estimate the Human-Estimation MDP value from sampled rewards

    The gain part uses the EDF of max(u(r), 0), the loss part the EDF of
    max(-u(r), 0); the value is normalizer * (int w_plus(1 - F_plus) -
    int w_minus(1 - F_minus)).

    Args:
        rewards (array-like): Rewards observed along sampled trajectories
        model (DistortionModel): Perception
        normalizer (float): Sum of discount weights over the horizon
        reference (PerceivedMdp, optional): Human MDP to measure estimation
            gaps against
        pairs (array-like, optional): Visited (s, a) for each reward, [n, 2]
        weights (array-like, optional): Per-sample weights, e.g. gamma^t of the
            step each reward was collected at; they weight both the EDFs and
            the empirical occupancy. Defaults to uniform.

    Returns:
        HemdpEstimate: EDFs, value estimate and (kappa_r, kappa_d) when a
            reference is supplied

    Raises:
        EmptySample: If no rewards are given
    """
    samples = np.array(rewards, dtype=float)
    if samples.size == 0:
        raise EmptySample("estimate_hemdp needs at least one reward sample")
    utilities = model.u(samples)
    w = np.ones(samples.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.size != samples.size:
        raise DimensionMismatch("weights must align with reward samples")
    edf_plus = EmpiricalCdf.from_samples(np.maximum(utilities, 0.0), w)
    edf_minus = EmpiricalCdf.from_samples(np.maximum(-utilities, 0.0), w)
    value = normalizer * (
        edf_plus.survival_integral(model.w_plus) - edf_minus.survival_integral(model.w_minus)
    )

    kappa_r = kappa_d = None
    if reference is not None and pairs is not None:
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        if pairs.shape[0] != samples.size:
            raise DimensionMismatch("pairs must align with reward samples")
        shape = reference.reward_dagger.shape
        flat = np.ravel_multi_index((pairs[:, 0], pairs[:, 1]), shape)
        counts = np.bincount(flat, weights=w, minlength=np.prod(shape))
        totals = np.bincount(flat, weights=utilities, minlength=np.prod(shape))
        visits = np.bincount(flat, minlength=np.prod(shape))
        seen = visits > 0
        means = totals[seen] / visits[seen]
        kappa_r = float(np.max(np.abs(reference.reward_dagger.ravel()[seen] - means)))
        empirical = (counts / counts.sum()).reshape(shape)
        empirical_dagger, _ = _distort_occupancy(empirical, reference.source.reward, model)
        kappa_d = float(np.max(np.abs(reference.occupancy_dagger - empirical_dagger)))

    return HemdpEstimate(samples.size, edf_plus, edf_minus, float(value), kappa_r, kappa_d)


def sample_rewards(reward_dist, n, seed):
    """Draw ``n`` i.i.d. rewards from a reward distribution."""
    rng = np.random.default_rng(seed)
    probs = reward_dist.probabilities / reward_dist.probabilities.sum()
    return rng.choice(reward_dist.support, size=n, p=probs)


@dataclass(frozen=True)
class PerceivedTrajectory:
    states: tuple
    actions: tuple
    rewards: tuple
    levels: tuple
    seed: int


def _perceive(trajectory, model, distortion_map):
    rewards = tuple(float(r) for r in model.u(np.asarray(trajectory.rewards, dtype=float)))
    levels = () if distortion_map is None else tuple(float(h) for h in distortion_map(trajectory.rewards))
    return PerceivedTrajectory(trajectory.states, trajectory.actions, rewards, levels, trajectory.seed)


def perceive_trajectory(trajectory, model, distortion_map=None):
    """
    Realize a perceived trajectory from a ground-truth one

    Rewards pass through u. Each step is also tagged with its distorted
    cumulative level h(r) when a distortion map is available.
    """
    if distortion_map is None:
        logger.warning("no injective distortion map; perceiving rewards only")
    return _perceive(trajectory, model, distortion_map)


def perceive_trajectories(trajectories, model, distortion_map=None):
    """Perceive a batch of trajectories, warning once when there is no map."""
    if distortion_map is None:
        logger.warning("no injective distortion map; perceiving rewards only")
    return [_perceive(traj, model, distortion_map) for traj in trajectories]


def augment_state(pm, new_state, template=None):
    """
    Add an unperceived state to a Human MDP

    The new state copies the rewards, outgoing transitions and policy rows of
    ``template`` (default: the start state) and receives no inbound
    probability, so its occupancy is zero and every existing quantity is
    unchanged.

    Args:
        pm (PerceivedMdp): Human MDP
        new_state (str): Label of the added state
        template (int, optional): State whose rows are inherited

    Returns:
        PerceivedMdp: Rebuilt Human MDP over S + 1 states

    Raises:
        DuplicateState: If ``new_state`` is already a state label
    """
    mdp = pm.source
    labels = mdp.labels or tuple(str(s) for s in range(mdp.n_states))
    if str(new_state) in labels:
        raise DuplicateState(f"state {new_state!r} already exists")
    template = pm.start_state if template is None else template
    n = mdp.n_states

    transition = np.zeros((n + 1, mdp.n_actions, n + 1))
    transition[:n, :, :n] = mdp.transition
    transition[n, :, :n] = mdp.transition[template]
    reward = np.vstack([mdp.reward, mdp.reward[template]])
    table = np.concatenate([pm.policy.table, pm.policy.table[:, template : template + 1]], axis=1)

    augmented = replace(mdp, transition=transition, reward=reward, labels=labels + (str(new_state),))
    return build_hmdp(augmented, Policy(table), pm.model, pm.start_state)
