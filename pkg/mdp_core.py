"""Stationary finite-horizon MDPs: construction, exact solution, occupancy
measures and trajectory sampling.

All tables are numpy arrays indexed as ``transition[s, a, s_next]``,
``reward[s, a]`` and ``policy.table[t, s, a]``. Objects are frozen and their
arrays are marked read-only, so they can be shared between worker threads.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from errors import (
    BadDiscount,
    DimensionMismatch,
    EnumerationTooLarge,
    NonStochasticRow,
    RewardOutOfBounds,
)

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9
ENUMERATION_CAP = 10**6

__all__ = [
    "Mdp",
    "Policy",
    "OccupancyMeasure",
    "Trajectory",
    "build_mdp",
    "value_function",
    "step_distributions",
    "occupancy",
    "value_from_occupancy",
    "optimal_policy",
    "enumerate_deterministic_policies",
    "sample_trajectory",
    "sample_trajectories",
    "perturb_rewards",
    "sample_categorical",
]


def _frozen(array, dtype=float):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Mdp:
    """A validated decision process (S, A, P, R, gamma, T, r_max).

    Build instances through :func:`build_mdp`; the constructor itself only
    freezes the arrays.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    horizon: int
    r_max: float
    labels: tuple = ()
    action_labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "action_labels", tuple(self.action_labels))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def normalizer(self):
        """Sum of discount weights over the horizon, (1 - gamma^T) / (1 - gamma)."""
        return float(np.sum(self.gamma ** np.arange(self.horizon)))

    def state_label(self, s):
        return self.labels[s] if self.labels else str(s)

    def action_label(self, a):
        return self.action_labels[a] if self.action_labels else str(a)

    def to_dict(self):
        data = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "horizon": self.horizon,
            "r_max": self.r_max,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }
        if self.labels:
            data["labels"] = list(self.labels)
        if self.action_labels:
            data["action_labels"] = list(self.action_labels)
        return data


@dataclass(frozen=True, eq=False)
class Policy:
    """Time-indexed action distributions, ``table[t, s, a]``."""

    table: np.ndarray
    deterministic: bool = field(default=False)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 3:
            raise DimensionMismatch(f"policy table must be [T, S, A], got shape {table.shape}")
        if np.any(table < -PROB_TOL) or np.any(np.abs(table.sum(axis=2) - 1.0) > PROB_TOL):
            raise NonStochasticRow("policy rows must be probability distributions")
        object.__setattr__(self, "table", _frozen(table))
        object.__setattr__(self, "deterministic", bool(np.all((table == 0.0) | (table == 1.0))))

    @classmethod
    def from_actions(cls, actions, n_actions):
        """
        Build a deterministic policy from an action table

        Args:
            actions (array-like): Integer actions, shape [T, S]
            n_actions (int): Size of the action set

        Returns:
            Policy: One-hot policy
        """
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 2:
            raise DimensionMismatch(f"action table must be [T, S], got shape {actions.shape}")
        if np.any(actions < 0) or np.any(actions >= n_actions):
            raise DimensionMismatch("action index out of range")
        table = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(table, actions[..., None], 1.0, axis=2)
        return cls(table)

    @classmethod
    def stationary(cls, rows, horizon):
        """Repeat one [S, A] table of action distributions over the horizon."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2:
            raise DimensionMismatch(f"stationary rows must be [S, A], got shape {rows.shape}")
        return cls(np.repeat(rows[None, :, :], horizon, axis=0))

    @property
    def horizon(self):
        return self.table.shape[0]

    def actions(self):
        """Chosen action per (t, s); meaningful for deterministic policies."""
        return np.argmax(self.table, axis=2)


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Normalized discounted visitation P^pi(s, a) and its normalizer."""

    table: np.ndarray
    normalizer: float

    def __post_init__(self):
        object.__setattr__(self, "table", _frozen(self.table))


@dataclass(frozen=True)
class Trajectory:
    states: tuple
    actions: tuple
    rewards: tuple
    seed: int

    def __len__(self):
        return len(self.actions)


def build_mdp(spec):
    """
    Validate a structured description and build an Mdp

    Args:
        spec (Mapping): Keys ``transition``, ``reward``, ``gamma``,
            ``horizon``, ``r_max`` and optionally ``n_states``,
            ``n_actions``, ``labels``, ``action_labels``

    Returns:
        Mdp: Validated process

    Raises:
        DimensionMismatch: Tables inconsistent with declared sizes
        NonStochasticRow: A transition row is not a distribution
        RewardOutOfBounds: Some |R(s, a)| exceeds r_max
        BadDiscount: gamma outside (0, 1]
    """
    try:
        transition = np.asarray(spec["transition"], dtype=float)
        reward = np.asarray(spec["reward"], dtype=float)
        gamma = float(spec["gamma"])
        horizon = spec["horizon"]
        r_max = float(spec["r_max"])
    except KeyError as exc:
        raise DimensionMismatch(f"MDP spec is missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"MDP spec has ragged or non-numeric tables: {exc}") from exc

    if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
        raise DimensionMismatch(f"transition must be [S, A, S], got shape {transition.shape}")
    n_states, n_actions = transition.shape[:2]
    if n_states < 1 or n_actions < 1:
        raise DimensionMismatch("MDP needs at least one state and one action")
    if spec.get("n_states", n_states) != n_states or spec.get("n_actions", n_actions) != n_actions:
        raise DimensionMismatch(
            f"declared sizes ({spec.get('n_states')}, {spec.get('n_actions')}) "
            f"do not match transition shape {transition.shape}"
        )
    if reward.shape != (n_states, n_actions):
        raise DimensionMismatch(f"reward must be [{n_states}, {n_actions}], got shape {reward.shape}")
    if isinstance(horizon, bool) or int(horizon) != horizon or int(horizon) < 1:
        raise DimensionMismatch(f"horizon must be a positive integer, got {horizon!r}")

    if not np.all(np.isfinite(transition)) or np.any(transition < 0.0) or np.any(transition > 1.0):
        raise NonStochasticRow("transition entries must lie in [0, 1]")
    row_error = np.abs(transition.sum(axis=2) - 1.0)
    if np.any(row_error > PROB_TOL):
        s, a = np.unravel_index(np.argmax(row_error), row_error.shape)
        raise NonStochasticRow(
            f"transition row (s={s}, a={a}) sums to {transition[s, a].sum():.12g}, expected 1"
        )
    if not r_max > 0.0:
        raise RewardOutOfBounds(f"r_max must be positive, got {r_max}")
    if not np.all(np.isfinite(reward)) or np.any(np.abs(reward) > r_max):
        raise RewardOutOfBounds(f"rewards must satisfy |R| <= r_max = {r_max}")
    if not 0.0 < gamma <= 1.0:
        raise BadDiscount(f"gamma must lie in (0, 1], got {gamma}")

    labels = tuple(spec.get("labels") or ())
    action_labels = tuple(spec.get("action_labels") or ())
    if labels and len(labels) != n_states:
        raise DimensionMismatch("labels must name every state")
    if action_labels and len(action_labels) != n_actions:
        raise DimensionMismatch("action_labels must name every action")

    mdp = Mdp(transition, reward, gamma, int(horizon), r_max, labels, action_labels)
    logger.debug("built MDP with %d states, %d actions, T=%d", n_states, n_actions, mdp.horizon)
    return mdp


def _check_inputs(mdp, policy=None, start_state=None):
    if policy is not None and policy.table.shape != (mdp.horizon, mdp.n_states, mdp.n_actions):
        raise DimensionMismatch(
            f"policy shape {policy.table.shape} does not match MDP "
            f"({mdp.horizon}, {mdp.n_states}, {mdp.n_actions})"
        )
    if start_state is not None and not 0 <= start_state < mdp.n_states:
        raise DimensionMismatch(f"start state {start_state} out of range")


def value_function(mdp, policy, start_state):
    """
    Exact finite-horizon discounted value by backward induction

    Args:
        mdp (Mdp): Process
        policy (Policy): Policy over the same horizon
        start_state (int): Initial state

    Returns:
        float: V^pi(start_state)
    """
    _check_inputs(mdp, policy, start_state)
    v = np.zeros(mdp.n_states)
    for t in reversed(range(mdp.horizon)):
        q = mdp.reward + mdp.gamma * (mdp.transition @ v)
        v = np.sum(policy.table[t] * q, axis=1)
    return float(v[start_state])


def step_distributions(mdp, policy, start_state):
    """Probability of visiting (s, a) at each step t, shape [T, S, A]."""
    _check_inputs(mdp, policy, start_state)
    d = np.zeros(mdp.n_states)
    d[start_state] = 1.0
    out = np.empty((mdp.horizon, mdp.n_states, mdp.n_actions))
    for t in range(mdp.horizon):
        out[t] = d[:, None] * policy.table[t]
        d = np.einsum("sa,sap->p", out[t], mdp.transition)
    return out


def occupancy(mdp, policy, start_state):
    """
    Normalized discounted visitation measure

    Args:
        mdp (Mdp): Process
        policy (Policy): Policy
        start_state (int): Initial state

    Returns:
        OccupancyMeasure: sum_t gamma^t P(s_t, a_t = s, a) divided by sum_t gamma^t
    """
    steps = step_distributions(mdp, policy, start_state)
    weights = mdp.gamma ** np.arange(mdp.horizon)
    table = np.tensordot(weights, steps, axes=1) / weights.sum()
    return OccupancyMeasure(table, float(weights.sum()))


def value_from_occupancy(mdp, occ):
    """Value as the normalizer times the inner product of R and P^pi."""
    if occ.table.shape != mdp.reward.shape:
        raise DimensionMismatch(
            f"occupancy shape {occ.table.shape} does not match reward shape {mdp.reward.shape}"
        )
    return float(occ.normalizer * np.sum(mdp.reward * occ.table))


def optimal_policy(mdp):
    """
    Deterministic optimal policy by backward induction

    Ties go to the lowest action index (``np.argmax`` returns the first maximum).

    Args:
        mdp (Mdp): Process

    Returns:
        Policy: Optimal deterministic policy
    """
    actions = np.empty((mdp.horizon, mdp.n_states), dtype=int)
    v = np.zeros(mdp.n_states)
    for t in reversed(range(mdp.horizon)):
        q = mdp.reward + mdp.gamma * (mdp.transition @ v)
        actions[t] = np.argmax(q, axis=1)
        v = q[np.arange(mdp.n_states), actions[t]]
    return Policy.from_actions(actions, mdp.n_actions)


def enumerate_deterministic_policies(mdp, cap=ENUMERATION_CAP):
    """
    Enumerate every deterministic time-dependent policy

    Args:
        mdp (Mdp): Process
        cap (int, optional): Largest allowed count. Defaults to 10**6.

    Returns:
        Iterator[Policy]: |A|^(|S| T) distinct policies, lazily

    Raises:
        EnumerationTooLarge: If the count exceeds ``cap``
    """
    shape = (mdp.horizon, mdp.n_states)
    count = mdp.n_actions ** (shape[0] * shape[1])
    if count > cap:
        raise EnumerationTooLarge(f"{count} deterministic policies exceed the cap of {cap}")

    def _policies():
        for combo in itertools.product(range(mdp.n_actions), repeat=shape[0] * shape[1]):
            yield Policy.from_actions(np.reshape(combo, shape), mdp.n_actions)

    return _policies()


def sample_trajectory(mdp, policy, start_state, seed):
    """
    Sample one trajectory; identical seeds give identical trajectories

    Args:
        mdp (Mdp): Process
        policy (Policy): Policy
        start_state (int): Initial state
        seed (int): Seed for ``numpy.random.default_rng``

    Returns:
        Trajectory: T+1 states, T actions and T rewards
    """
    _check_inputs(mdp, policy, start_state)
    rng = np.random.default_rng(seed)
    s = start_state
    states, actions, rewards = [s], [], []
    for t in range(mdp.horizon):
        a = int(rng.choice(mdp.n_actions, p=policy.table[t, s]))
        rewards.append(float(mdp.reward[s, a]))
        s = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
        actions.append(a)
        states.append(s)
    return Trajectory(tuple(states), tuple(actions), tuple(rewards), seed)


def sample_categorical(rng, probs):
    # Inverse-CDF draw per row; dividing by the last cumulative value makes the
    # last positive-mass category end at exactly 1.0.
    cdf = np.cumsum(probs, axis=1)
    cdf = cdf / cdf[:, -1:]
    u = rng.random(probs.shape[0])[:, None]
    return np.sum(cdf <= u, axis=1)


def sample_trajectories(mdp, policy, start_state, n, seed):
    """
    Vectorized batch of ``n`` trajectories

    Returns:
        tuple: (states [n, T+1], actions [n, T], rewards [n, T]) arrays
    """
    _check_inputs(mdp, policy, start_state)
    rng = np.random.default_rng(seed)
    states = np.empty((n, mdp.horizon + 1), dtype=int)
    actions = np.empty((n, mdp.horizon), dtype=int)
    states[:, 0] = start_state
    for t in range(mdp.horizon):
        s = states[:, t]
        actions[:, t] = sample_categorical(rng, policy.table[t, s])
        states[:, t + 1] = sample_categorical(rng, mdp.transition[s, actions[:, t]])
    rewards = mdp.reward[states[:, :-1], actions]
    return states, actions, rewards


def perturb_rewards(mdp, scale=1e-9, seed=0):
    """Jitter rewards by at most ``scale`` to break ties, clipped to r_max."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-scale, scale, size=mdp.reward.shape)
    return replace(mdp, reward=np.clip(mdp.reward + noise, -mdp.r_max, mdp.r_max))
