"""Numerical checks of the optimality, value-gap, hitting-time, visitation
and estimation results for CPT-perceived MDPs.

Every check returns a :class:`TheoremCheckResult`. Random instances are drawn
from ``numpy.random.SeedSequence(seed).spawn(n)`` so each instance has its own
generator and results do not depend on evaluation order; instances run
through ``joblib.Parallel`` with at most ``SBS_THREADS`` workers.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from joblib import Parallel, delayed

from blackswan import ETA_FLAT, detect
from distortion import GRID_SIZE, lipschitz_constants, safe_envelope
from errors import (
    AssumptionViolated,
    BadDiscount,
    DimensionMismatch,
    EmptyBlackSwanSet,
    InfeasibleDelta,
    InvalidParameter,
    ReachabilityViolated,
    SearchBudgetExhausted,
)
from mdp_core import (
    Policy,
    build_mdp,
    enumerate_deterministic_policies,
    occupancy,
    sample_categorical,
    step_distributions,
    value_function,
)
from perception import cpt_value, estimate_hemdp, rank_dependent_expectation, reward_distribution, sample_rewards
from utils import thread_limit

logger = logging.getLogger(__name__)

SEARCH_BUDGET = 10**5
VALUE_LOSS_MIN = 1e-6
LEMMA_SLACK = 1e-9

# Three parameterizations with all-pass certificates, used when no model is given
STANDARD_MODEL_SPECS = (
    {"kind": "tversky_kahneman", "alpha": 0.88, "beta": 0.88, "lambda": 2.25, "gamma_plus": 0.61, "gamma_minus": 0.69, "r_max": 1.0},
    {"kind": "tversky_kahneman", "alpha": 0.7, "beta": 0.7, "lambda": 1.5, "gamma_plus": 0.5, "gamma_minus": 0.6, "r_max": 1.0},
    {"kind": "tversky_kahneman", "alpha": 1.0, "beta": 0.9, "lambda": 2.0, "gamma_plus": 0.8, "gamma_minus": 0.75, "r_max": 1.0},
)

# Understates large losses and ignores cumulative probability below 0.02
DETECTION_MODEL_SPEC = {
    "kind": "flat_region",
    "p_flat": 0.02,
    "base": {"kind": "tversky_kahneman", "alpha": 0.88, "beta": 0.5, "lambda": 2.0, "gamma_plus": 0.61, "gamma_minus": 0.69, "r_max": 1000.0},
}


class TheoremId(str, Enum):
    ONE_STEP = "one_step"
    TWO_STATE = "two_state"
    THREE_STATE_COUNTEREXAMPLE = "three_state_counterexample"
    VALUE_GAP_LOWER_BOUND = "value_gap_lower_bound"
    HITTING_TIME = "hitting_time"
    VISITATION_GAP_LEMMA = "visitation_gap_lemma"
    STEP_VISITATION_LEMMA = "step_visitation_lemma"
    DKW_CONVERGENCE = "dkw_convergence"


@dataclass(frozen=True)
class TheoremCheckResult:
    """
    Outcome of one verification run

    ``failures`` counts instances contradicting the checked statement and
    ``witness`` holds the first of them. For the three-state search the
    statement is that perception preserves optimal policies, so a found
    counterexample is the expected outcome.
    """

    theorem_id: TheoremId
    instances_run: int
    failures: int
    witness: dict = None
    metrics: dict = field(default_factory=dict)

    @property
    def passed(self):
        if self.theorem_id is TheoremId.THREE_STATE_COUNTEREXAMPLE:
            return self.failures > 0 and self.witness is not None
        return self.failures == 0

    def to_dict(self):
        return {
            "theorem_id": self.theorem_id.value,
            "instances_run": self.instances_run,
            "failures": self.failures,
            "passed": self.passed,
            "witness": self.witness,
            "metrics": dict(self.metrics),
        }


@dataclass(frozen=True)
class DkwConfig:
    """
    Constants of the DKW concentration bound for CPT estimates

    Attributes:
        epsilon (float): Error level
        confidence (float): Target probability that the error stays below epsilon
        lipschitz_plus (float): Max grid slope of w_plus
        lipschitz_minus (float): Max grid slope of w_minus
        scale (float): max(L_plus u_plus(r_max), L_minus |u_minus(-r_max)|)
    """

    epsilon: float
    confidence: float
    lipschitz_plus: float
    lipschitz_minus: float
    scale: float

    @classmethod
    def from_model(cls, model, epsilon=None, n=None, confidence=0.95, grid_size=GRID_SIZE):
        l_plus, l_minus = lipschitz_constants(model, grid_size)
        scale = max(
            l_plus * float(model.value.u_plus(model.r_max)),
            l_minus * abs(float(model.value.u_minus(-model.r_max))),
        )
        if epsilon is None:
            if n is None:
                raise InvalidParameter("either epsilon or a sample size n is required")
            epsilon = cls.epsilon_for_bound(scale, n, 1.0 - confidence)
        if not epsilon > 0.0:
            raise InvalidParameter(f"epsilon must be positive, got {epsilon}")
        return cls(float(epsilon), confidence, l_plus, l_minus, scale)

    @staticmethod
    def epsilon_for_bound(scale, n, target):
        """Epsilon at which 4 exp(-n eps^2 / (2 c^2)) equals ``target``."""
        return float(scale * math.sqrt(2.0 * math.log(4.0 / target) / n))

    def bound(self, n):
        return min(1.0, 4.0 * math.exp(-n * self.epsilon**2 / (2.0 * self.scale**2)))


# Instance generation

def random_mdp(rng, n_states, n_actions, horizon, gamma=0.9, r_max=1.0):
    """
    Random instance with Dirichlet(1, ..., 1) transition rows

    Args:
        rng (numpy.random.Generator): Source of randomness
        n_states (int): |S|
        n_actions (int): |A|
        horizon (int): T
        gamma (float, optional): Discount. Defaults to 0.9.
        r_max (float, optional): Rewards are uniform on [-r_max, r_max]. Defaults to 1.0.

    Returns:
        Mdp: Validated instance
    """
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    reward = rng.uniform(-r_max, r_max, size=(n_states, n_actions))
    return build_mdp(
        {"transition": transition, "reward": reward, "gamma": gamma, "horizon": horizon, "r_max": r_max}
    )


def mdp_family(n_states, n_actions, horizon, gamma=0.9, r_max=1.0):
    """Factory rng -> Mdp; ``horizon`` is an int or an inclusive (lo, hi) range."""

    def generate(rng):
        t = horizon if isinstance(horizon, int) else int(rng.integers(horizon[0], horizon[1] + 1))
        return random_mdp(rng, n_states, n_actions, t, gamma, r_max)

    return generate


def black_swan_chain(risk_probability=0.01, r_max=1000.0, premium=-15.0, loss=None):
    """
    Insurance-style instance: from ``start``, paying moves to ``premium``,
    not paying reaches ``risk`` with ``risk_probability`` and ``base``
    otherwise. Rewards are collected in the state reached; T=2, gamma=1.
    """
    loss = -r_max if loss is None else loss
    p = risk_probability
    transition = np.zeros((4, 2, 4))
    transition[0, 0, 2] = 1.0
    transition[0, 1, 1] = 1.0 - p
    transition[0, 1, 3] = p
    for s in (1, 2, 3):
        transition[s, :, s] = 1.0
    reward = np.array([[0.0, 0.0], [0.0, 0.0], [premium, premium], [loss, loss]])
    return build_mdp(
        {
            "transition": transition,
            "reward": reward,
            "gamma": 1.0,
            "horizon": 2,
            "r_max": r_max,
            "labels": ["start", "base", "premium", "risk"],
            "action_labels": ["pay", "no-pay"],
        }
    )


def hitting_chain(hit_probability, horizon=1, r_max=1.0):
    """
    One state, two actions; the policy picks the risky action with
    ``hit_probability`` each step and the risky pair is the only event.

    Returns:
        tuple: (Mdp, Policy, events)
    """
    mdp = build_mdp(
        {
            "transition": [[[1.0], [1.0]]],
            "reward": [[0.0, -r_max]],
            "gamma": 1.0,
            "horizon": horizon,
            "r_max": r_max,
            "action_labels": ["safe", "risky"],
        }
    )
    policy = Policy.stationary([[1.0 - hit_probability, hit_probability]], horizon)
    return mdp, policy, {(0, 1)}


# Exact solvers

def _stage_rewards(reward, t, horizon, reward_timing):
    if reward_timing == "every" or t == horizon - 1:
        return reward
    return np.zeros_like(reward)


def _check_timing(reward_timing):
    if reward_timing not in ("final", "every"):
        raise InvalidParameter(f"reward_timing must be 'final' or 'every', got {reward_timing!r}")


def solve_true_mdp(mdp, reward_timing="every"):
    """
    Backward induction on the ground-truth MDP

    Args:
        mdp (Mdp): Process
        reward_timing (str, optional): "every" collects R at each step,
            "final" only at the last step. Defaults to "every".

    Returns:
        tuple: (actions [T, S], initial values [S])
    """
    _check_timing(reward_timing)
    actions = np.empty((mdp.horizon, mdp.n_states), dtype=int)
    v = np.zeros(mdp.n_states)
    for t in reversed(range(mdp.horizon)):
        q = _stage_rewards(mdp.reward, t, mdp.horizon, reward_timing) + mdp.gamma * (mdp.transition @ v)
        actions[t] = np.argmax(q, axis=1)
        v = q[np.arange(mdp.n_states), actions[t]]
    return actions, v


def solve_distorted_mdp(mdp, model, reward_timing="every", distort_rewards=True):
    """
    Backward induction on the per-step distorted MDP

    Rewards pass through u (unless ``distort_rewards`` is False) and the
    expectation over next-state values is the rank-dependent expectation
    under w.

    Returns:
        tuple: (actions [T, S], initial values [S])
    """
    _check_timing(reward_timing)
    utilities = model.u(mdp.reward) if distort_rewards else mdp.reward
    actions = np.empty((mdp.horizon, mdp.n_states), dtype=int)
    v = np.zeros(mdp.n_states)
    for t in reversed(range(mdp.horizon)):
        continuation = np.array(
            [
                [rank_dependent_expectation(v, mdp.transition[s, a], model) for a in range(mdp.n_actions)]
                for s in range(mdp.n_states)
            ]
        )
        q = _stage_rewards(utilities, t, mdp.horizon, reward_timing) + mdp.gamma * continuation
        actions[t] = np.argmax(q, axis=1)
        v = q[np.arange(mdp.n_states), actions[t]]
    return actions, v


def evaluate_actions(mdp, actions, reward_timing="every"):
    """True values [S] at t=0 of a deterministic action table [T, S]."""
    _check_timing(reward_timing)
    v = np.zeros(mdp.n_states)
    states = np.arange(mdp.n_states)
    for t in reversed(range(mdp.horizon)):
        q = _stage_rewards(mdp.reward, t, mdp.horizon, reward_timing) + mdp.gamma * (mdp.transition @ v)
        v = q[states, actions[t]]
    return v


# Parallel driver

def _run_instances(fn, n_instances, seed, n_jobs):
    seeds = np.random.SeedSequence(seed).spawn(n_instances)
    n_jobs = thread_limit() if n_jobs is None else n_jobs
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(np.random.default_rng(s)) for s in seeds)


def _aggregate(theorem_id, outcomes, metrics=None):
    failures = sum(count for count, _ in outcomes)
    witness = next((detail for count, detail in outcomes if count), None)
    metrics = dict(metrics or {})
    metrics["mismatches"] = failures
    return TheoremCheckResult(theorem_id, len(outcomes), sum(1 for c, _ in outcomes if c), witness, metrics)


def check_one_step(mdp_family, model, n_instances, seed, n_jobs=None):
    """
    Single-step optimal actions are unchanged by value distortion

    For every generated T=1 instance and every state, argmax_a u(R(s, a))
    must equal argmax_a R(s, a). The model is used as given, so invalid
    models can be fed in to check that the harness notices.

    Args:
        mdp_family (callable): rng -> Mdp with horizon 1
        model (DistortionModel): Perception
        n_instances (int): Number of instances
        seed (int): Root seed

    Returns:
        TheoremCheckResult: ``failures`` counts instances with a mismatch
    """

    def one(rng):
        mdp = mdp_family(rng)
        if mdp.horizon != 1:
            raise DimensionMismatch(f"one-step check needs T=1 instances, got T={mdp.horizon}")
        true = np.argmax(mdp.reward, axis=1)
        perceived = np.argmax(model.u(mdp.reward), axis=1)
        bad = np.flatnonzero(true != perceived)
        if bad.size:
            return int(bad.size), {"mdp": mdp.to_dict(), "states": bad.tolist()}
        return 0, None

    result = _aggregate(TheoremId.ONE_STEP, _run_instances(one, n_instances, seed, n_jobs))
    logger.info("one-step check: %d/%d instances with mismatches", result.failures, result.instances_run)
    return result


def check_two_state(mdp_family, model, n_instances, horizon=None, seed=0, reward_timing="final", n_jobs=None):
    """
    Two-state multi-step optimal policies are unchanged by perception

    Both processes are solved by backward induction with rewards collected at
    the final step; the perceived one uses u on rewards and the w-weighted
    expectation over next states.

    Args:
        mdp_family (callable): rng -> Mdp with two states
        model (DistortionModel): Perception
        n_instances (int): Number of instances
        horizon (int, optional): Overrides the generated horizon
        seed (int, optional): Root seed. Defaults to 0.
        reward_timing (str, optional): "final" or "every". Defaults to "final".

    Returns:
        TheoremCheckResult: ``failures`` counts instances with any (t, s)
            whose optimal action differs

    Raises:
        DimensionMismatch: If an instance does not have exactly two states
    """
    _check_timing(reward_timing)

    def one(rng):
        mdp = mdp_family(rng)
        if mdp.n_states != 2:
            raise DimensionMismatch(f"two-state check needs |S|=2, got {mdp.n_states}")
        if horizon is not None:
            mdp = replace(mdp, horizon=horizon)
        true, _ = solve_true_mdp(mdp, reward_timing)
        perceived, _ = solve_distorted_mdp(mdp, model, reward_timing)
        bad = np.argwhere(true != perceived)
        if bad.size:
            return int(bad.shape[0]), {"mdp": mdp.to_dict(), "steps_states": bad.tolist()}
        return 0, None

    result = _aggregate(TheoremId.TWO_STATE, _run_instances(one, n_instances, seed, n_jobs))
    logger.info("two-state check: %d/%d instances with mismatches", result.failures, result.instances_run)
    return result


def _policy_deviation(mdp, model):
    true_actions, true_values = solve_true_mdp(mdp, "final")
    perceived_actions, _ = solve_distorted_mdp(mdp, model, "final", distort_rewards=False)
    achieved = evaluate_actions(mdp, perceived_actions, "final")
    losses = true_values - achieved
    return true_actions, perceived_actions, losses


def _verify_witness(mdp, perceived_actions):
    best = np.full(mdp.n_states, -np.inf)
    for policy in enumerate_deterministic_policies(mdp):
        best = np.maximum(best, evaluate_actions(mdp, policy.actions(), "final"))
    achieved = evaluate_actions(mdp, perceived_actions, "final")
    s = int(np.argmax(best - achieved))
    return s, float(best[s] - achieved[s])


def _refinements(mdp, rng, steps):
    # pull the start-state rows of both actions toward random vertices
    for lam in np.linspace(0.1, 0.9, steps):
        transition = np.array(mdp.transition)
        for a in range(mdp.n_actions):
            target = np.zeros(mdp.n_states)
            target[rng.integers(mdp.n_states)] = 1.0
            transition[0, a] = (1.0 - lam) * transition[0, a] + lam * target
        yield replace(mdp, transition=transition)


def construct_three_state_counterexample(model, budget=SEARCH_BUDGET, seed=0, refine_steps=5):
    """
    Search for a three-state, two-step instance where w changes the optimal policy

    Rewards are left undistorted and collected at the final step. Random
    instances are drawn first; the instance with the largest value loss seen
    so far is also refined by moving its start-state transition rows toward
    vertices of the simplex. A candidate becomes a witness once its value
    loss exceeds 1e-6 and exhaustive policy enumeration confirms it.

    Args:
        model (DistortionModel): Perception whose w is tested
        budget (int, optional): Maximum candidates. Defaults to 10**5.
        seed (int, optional): Seed. Defaults to 0.

    Returns:
        tuple: (Mdp, TheoremCheckResult)

    Raises:
        SearchBudgetExhausted: If no witness is found within the budget
    """
    ps = np.linspace(0.0, 1.0, GRID_SIZE)
    distance = max(np.max(np.abs(model.w_plus(ps) - ps)), np.max(np.abs(model.w_minus(ps) - ps)))
    if distance < 1e-3:
        logger.warning("w is within %.3g of the identity; no counterexample is expected", distance)

    rng = np.random.default_rng(seed)
    tried = 0
    best_loss, best_mdp = 0.0, None
    while tried < budget:
        candidates = [random_mdp(rng, 3, 2, 2, gamma=1.0, r_max=1.0)]
        if best_mdp is not None:
            candidates.extend(_refinements(best_mdp, rng, refine_steps))
        for mdp in candidates:
            if tried >= budget:
                break
            tried += 1
            true_actions, perceived_actions, losses = _policy_deviation(mdp, model)
            loss = float(np.max(losses))
            if loss > best_loss:
                best_loss, best_mdp = loss, mdp
            if loss <= VALUE_LOSS_MIN:
                continue
            state, verified_loss = _verify_witness(mdp, perceived_actions)
            if verified_loss <= VALUE_LOSS_MIN:
                continue
            steps = np.flatnonzero(np.any(true_actions != perceived_actions, axis=1))
            witness = {
                "mdp": mdp.to_dict(),
                "start_state": state,
                "policy_gmdp": true_actions.tolist(),
                "policy_distorted": perceived_actions.tolist(),
            }
            metrics = {
                "value_loss": verified_loss,
                "candidates_tried": tried,
                "first_deviation_step": int(steps[0]),
            }
            logger.info("counterexample found after %d candidates, value loss %.6g", tried, verified_loss)
            return mdp, TheoremCheckResult(TheoremId.THREE_STATE_COUNTEREXAMPLE, tried, 1, witness, metrics)
    raise SearchBudgetExhausted(
        f"no three-state counterexample in {budget} candidates (largest value loss {best_loss:.3g})"
    )


def value_gap_bound(r_max, r_bs, eps_min, eps_bs, c_bs):
    """((r_max - r_bs) eps_min - r_bs eps_bs) (r_max - r_bs) c_bs / r_max**2."""
    return ((r_max - r_bs) * eps_min - r_bs * eps_bs) * (r_max - r_bs) * c_bs / r_max**2


def check_value_gap_lower_bound(
    mdp,
    policy,
    model,
    c_bs,
    eps_bs,
    start_state,
    eta_flat=ETA_FLAT,
    safe_slope=None,
    ratio_floor=1.0,
):
    """
    Compare the measured perceived value gap with its lower bound

    Args:
        mdp (Mdp): Ground-truth process
        policy (Policy): Policy
        model (DistortionModel): Perception inducing the black swans
        c_bs (float): High-risk threshold
        eps_bs (float): Rarity threshold
        start_state (int): Initial state
        eta_flat (float, optional): Flatness tolerance for detection
        safe_slope (float, optional): Slope k of the safe loss perception
            u_minus_safe(r) = k r, with k >= 1. Defaults to
            ``distortion.safe_envelope``, which lies below u_minus by
            construction, so only its steepness is then checked.
        ratio_floor (float, optional): Required measured / bound ratio

    Returns:
        TheoremCheckResult: Metrics measured_gap, bound_value and ratio

    Raises:
        EmptyBlackSwanSet: If no event is detected
        AssumptionViolated: If u_minus dips below the safe perception or the
            safe perception is flatter than the identity
    """
    report = detect(mdp, policy, model, c_bs, eps_bs, start_state, eta_flat)
    if not report.events:
        raise EmptyBlackSwanSet("no s-black swan detected; the value-gap bound is undefined")

    slope = safe_envelope(model) if safe_slope is None else float(safe_slope)
    # a line flatter than the identity understates every loss and is not safe
    if slope < 1.0:
        raise AssumptionViolated(f"safe perception {slope:.6g} r is flatter than the identity")
    rs = np.linspace(-mdp.r_max, 0.0, GRID_SIZE)
    below = np.flatnonzero(model.u_minus(rs) < slope * rs - 1e-9 * max(1.0, mdp.r_max))
    if below.size:
        raise AssumptionViolated(f"u_minus lies below the safe perception {slope:.6g} r at r={rs[below[0]]:.6g}")

    true_value = value_function(mdp, policy, start_state)
    perceived = cpt_value(reward_distribution(mdp, policy, start_state), model, mdp.normalizer)
    measured = abs(perceived - true_value)
    bound = value_gap_bound(mdp.r_max, report.r_bs, report.eps_bs_min, eps_bs, c_bs)
    metrics = {
        "measured_gap": measured,
        "bound_value": bound,
        "r_bs": report.r_bs,
        "eps_bs_min": report.eps_bs_min,
        "events": len(report.events),
    }
    failures = 0
    if bound > 0.0:
        metrics["ratio"] = measured / bound
        failures = int(measured / bound < ratio_floor)
    else:
        logger.warning("value-gap bound %.6g is not positive; the check is vacuous", bound)
    witness = None
    if failures:
        witness = {"mdp": mdp.to_dict(), "c_bs": c_bs, "eps_bs": eps_bs, "start_state": start_state}
    return TheoremCheckResult(TheoremId.VALUE_GAP_LOWER_BOUND, 1, failures, witness, metrics)


def check_value_gap_sweep(mdp, policy, model, c_values, eps_bs, start_state, **kwargs):
    """Run the value-gap check for each c_bs and report bounds per value."""
    results = [
        check_value_gap_lower_bound(mdp, policy, model, c, eps_bs, start_state, **kwargs) for c in c_values
    ]
    metrics = {}
    for c, result in zip(c_values, results):
        for key in ("measured_gap", "bound_value", "ratio"):
            if key in result.metrics:
                metrics[f"{key}_c{c:g}"] = result.metrics[key]
    failures = sum(r.failures for r in results)
    witness = next((r.witness for r in results if r.failures), None)
    return TheoremCheckResult(TheoremId.VALUE_GAP_LOWER_BOUND, len(results), failures, witness, metrics)


def hitting_time_from_probabilities(delta, p_min, p_max):
    """Smallest integer t with t >= log(delta / p_min) / log(1 - p_max) + 1."""
    if not 0.0 < p_min <= p_max < 1.0:
        raise InvalidParameter(f"need 0 < p_min <= p_max < 1, got p_min={p_min}, p_max={p_max}")
    if not 0.0 < delta <= 1.0:
        raise InvalidParameter(f"delta must lie in (0, 1], got {delta}")
    if delta > p_min:
        raise InfeasibleDelta(f"delta={delta} exceeds p_min={p_min}; the bound is vacuous")
    return int(math.ceil(math.log(delta / p_min) / math.log(1.0 - p_max) + 1.0))


def hitting_time_bound(delta, r_max, r_bs, eps_min, eps_bs):
    """
    Steps after which an s-black swan is met with probability at least delta

    The per-step hit probability is bracketed by
    p_min = (r_max - r_bs) / (2 r_max) * eps_min and
    p_max = (r_max - r_bs) / (2 r_max) * eps_bs.

    Returns:
        int: Smallest t satisfying the bound

    Raises:
        InfeasibleDelta: If delta > p_min
    """
    factor = (r_max - r_bs) / (2.0 * r_max)
    return hitting_time_from_probabilities(delta, factor * eps_min, factor * eps_bs)


@dataclass(frozen=True)
class HittingEstimate:
    probability: float
    first_hit_probability: float
    stderr: float
    trials: int
    steps: int

    def __float__(self):
        return self.probability

    def to_dict(self):
        return {
            "probability": self.probability,
            "first_hit_probability": self.first_hit_probability,
            "stderr": self.stderr,
            "trials": self.trials,
            "steps": self.steps,
        }


def _check_reachability(mdp, policy, steps):
    for k in range(min(steps, policy.horizon)):
        chain = np.einsum("sa,sap->sp", policy.table[k], mdp.transition)
        if np.any(chain <= 0.0):
            s, s_next = np.argwhere(chain <= 0.0)[0]
            raise ReachabilityViolated(f"state {s_next} is unreachable from state {s} in one step at t={k}")


def monte_carlo_hitting(mdp, policy, events, t, trials, seed, start_state=0):
    """
    Estimate the probability of meeting an event within ``t`` steps

    Trajectories take actions at steps 0..t-1; beyond the policy horizon the
    last policy row is reused.

    Args:
        mdp (Mdp): Process
        policy (Policy): Policy
        events (set): (s, a) pairs
        t (int): Number of steps
        trials (int): Number of trajectories
        seed (int): Seed
        start_state (int, optional): Initial state. Defaults to 0.

    Returns:
        HittingEstimate: Hit-by-t and first-hit-at-t probabilities with the
            binomial standard error of the former

    Raises:
        ReachabilityViolated: If some state cannot reach another in one step
    """
    if not events:
        return HittingEstimate(0.0, 0.0, 0.0, trials, t)
    _check_reachability(mdp, policy, t)
    mask = np.zeros((mdp.n_states, mdp.n_actions), dtype=bool)
    for s, a in events:
        mask[s, a] = True

    rng = np.random.default_rng(seed)
    states = np.full(trials, start_state)
    hit = np.zeros(trials, dtype=bool)
    first_at_last = np.zeros(trials, dtype=bool)
    for k in range(t):
        row = policy.table[min(k, policy.horizon - 1)]
        actions = sample_categorical(rng, row[states])
        now = mask[states, actions]
        if k == t - 1:
            first_at_last = now & ~hit
        hit |= now
        states = sample_categorical(rng, mdp.transition[states, actions])

    p = float(hit.mean())
    return HittingEstimate(p, float(first_at_last.mean()), math.sqrt(p * (1.0 - p) / trials), trials, t)


def check_visitation_gap_lemma(mdp, perturbation_scale, policy, n_instances, seed, start_state=0, n_jobs=None):
    """
    Visitation gaps under perturbed transitions stay within their bounds

    Each instance mixes P with random Dirichlet rows so that the largest L1
    row change is at most ((1 - gamma)^2 / gamma) * perturbation_scale, then
    checks sum |P^pi - P_dagger^pi| <= perturbation_scale and, for every step
    t, the L1 gap of the step distributions <= t * eps_p, where eps_p is the
    realized largest row change.

    Returns:
        TheoremCheckResult: Metrics include the failures of each inequality
            and the largest gap-to-bound ratios

    Raises:
        BadDiscount: If gamma is not in (0, 1)
    """
    if not 0.0 < mdp.gamma < 1.0:
        raise BadDiscount(f"the visitation lemma needs gamma in (0, 1), got {mdp.gamma}")
    allowed = (1.0 - mdp.gamma) ** 2 / mdp.gamma * perturbation_scale
    base_occ = occupancy(mdp, policy, start_state).table
    base_steps = step_distributions(mdp, policy, start_state)

    def one(rng):
        target = rng.dirichlet(np.ones(mdp.n_states), size=(mdp.n_states, mdp.n_actions))
        spread = np.max(np.sum(np.abs(mdp.transition - target), axis=2))
        lam = rng.uniform(0.0, 1.0) * (min(1.0, allowed / spread) if spread > 0.0 else 0.0)
        perturbed = replace(mdp, transition=(1.0 - lam) * mdp.transition + lam * target)
        eps_p = float(np.max(np.sum(np.abs(mdp.transition - perturbed.transition), axis=2)))

        occ_gap = float(np.sum(np.abs(base_occ - occupancy(perturbed, policy, start_state).table)))
        step_gaps = np.sum(np.abs(base_steps - step_distributions(perturbed, policy, start_state)), axis=(1, 2))
        step_bounds = np.arange(mdp.horizon) * eps_p
        occ_bad = occ_gap > perturbation_scale + LEMMA_SLACK
        step_bad = bool(np.any(step_gaps > step_bounds + LEMMA_SLACK))
        ratios = (
            occ_gap / perturbation_scale if perturbation_scale > 0 else 0.0,
            float(np.max(step_gaps[1:] / step_bounds[1:])) if eps_p > 0 and mdp.horizon > 1 else 0.0,
        )
        detail = None
        if occ_bad or step_bad:
            detail = {"lambda": lam, "eps_p": eps_p, "occupancy_gap": occ_gap, "step_gaps": step_gaps.tolist()}
        return occ_bad, step_bad, ratios, detail

    outcomes = _run_instances(one, n_instances, seed, n_jobs)
    occ_failures = sum(1 for o in outcomes if o[0])
    step_failures = sum(1 for o in outcomes if o[1])
    failures = sum(1 for o in outcomes if o[0] or o[1])
    witness = next((o[3] for o in outcomes if o[3] is not None), None)
    metrics = {
        "occupancy_failures": occ_failures,
        "step_failures": step_failures,
        "max_occupancy_ratio": max((o[2][0] for o in outcomes), default=0.0),
        "max_step_ratio": max((o[2][1] for o in outcomes), default=0.0),
        "allowed_row_change": allowed,
    }
    logger.info("visitation lemmas: %d/%d instances violated", failures, len(outcomes))
    return TheoremCheckResult(TheoremId.VISITATION_GAP_LEMMA, len(outcomes), failures, witness, metrics)


def check_dkw_convergence(reward_dist, model, config, n_grid, repetitions, seed):
    """
    Empirical exceedance of CPT estimation errors against the DKW bound

    For each sample size n, ``repetitions`` independent EDF estimates of the
    (unnormalized) CPT value are compared with the exact value; the fraction
    with error above ``config.epsilon`` must not exceed
    4 exp(-n eps^2 / (2 c^2)) plus three binomial standard deviations, and
    the median error must strictly decrease as n grows.

    Args:
        reward_dist (RewardDistribution): True reward law
        model (DistortionModel): Perception
        config (DkwConfig): Bound constants
        n_grid (list): Sample sizes
        repetitions (int): Estimates per sample size, at least 100
        seed (int): Root seed

    Returns:
        TheoremCheckResult: Per-n exceedance, bound and median error metrics
    """
    if repetitions < 100:
        raise InvalidParameter(f"repetitions must be at least 100, got {repetitions}")
    exact = cpt_value(reward_dist, model, 1.0)
    metrics = {"epsilon": config.epsilon, "scale": config.scale}
    failures = 0
    witness = None
    for n, child in zip(n_grid, np.random.SeedSequence(seed).spawn(len(n_grid))):
        seeds = child.generate_state(repetitions)
        errors = np.array(
            [
                abs(estimate_hemdp(sample_rewards(reward_dist, n, int(s)), model, 1.0).cpt_value_estimate - exact)
                for s in seeds
            ]
        )
        exceedance = float(np.mean(errors > config.epsilon))
        bound = config.bound(n)
        slack = 3.0 * math.sqrt(bound * (1.0 - bound) / repetitions)
        metrics[f"exceedance_n{n}"] = exceedance
        metrics[f"bound_n{n}"] = bound
        metrics[f"median_error_n{n}"] = float(np.median(errors))
        if exceedance > bound + slack:
            failures += 1
            if witness is None:
                witness = {"n": n, "exceedance": exceedance, "bound": bound}
    ordered = sorted(n_grid)
    medians = [metrics[f"median_error_n{n}"] for n in ordered]
    decreasing = all(later < earlier for earlier, later in zip(medians, medians[1:]))
    metrics["median_error_decreasing"] = decreasing
    if not decreasing:
        failures += 1
        if witness is None:
            witness = {"n_grid": ordered, "median_errors": medians}
    return TheoremCheckResult(TheoremId.DKW_CONVERGENCE, len(n_grid), failures, witness, metrics)
