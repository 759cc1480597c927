"""Command-line front end.

Subcommands: validate, solve, perceive, detect, estimate, verify, hitting.
Reports are deterministic JSON (stdout, or ``--out``); curve data is CSV.
Exit status is 0 on success, 2 when an input is rejected and 3 when a
theorem check does not pass.
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

import utils
from blackswan import ETA_FLAT, detect
from distortion import load_model
from errors import CertificateFailed, NonInjectiveReward, SbsError, TheoremCheckError, ValidationError
from mdp_core import (
    Policy,
    Trajectory,
    build_mdp,
    occupancy,
    optimal_policy,
    sample_trajectories,
    value_function,
)
from perception import (
    build_hmdp,
    cpt_value,
    estimate_hemdp,
    perceive_trajectories,
    reward_distribution,
    state_distortion_map,
)
from verify import (
    DETECTION_MODEL_SPEC,
    SEARCH_BUDGET,
    STANDARD_MODEL_SPECS,
    DkwConfig,
    TheoremCheckResult,
    TheoremId,
    black_swan_chain,
    check_dkw_convergence,
    check_one_step,
    check_two_state,
    check_value_gap_sweep,
    check_visitation_gap_lemma,
    construct_three_state_counterexample,
    hitting_chain,
    hitting_time_bound,
    hitting_time_from_probabilities,
    mdp_family,
    monte_carlo_hitting,
    random_mdp,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = TheoremCheckError.exit_code

VALUE_GAP_C_RANGE = (60.0, 140.0)

DEFAULT_INSTANCES = {
    TheoremId.ONE_STEP: 1000,
    TheoremId.TWO_STATE: 1000,
    TheoremId.THREE_STATE_COUNTEREXAMPLE: SEARCH_BUDGET,
    TheoremId.VALUE_GAP_LOWER_BOUND: 5,
    TheoremId.HITTING_TIME: 10**5,
    TheoremId.VISITATION_GAP_LEMMA: 500,
    TheoremId.STEP_VISITATION_LEMMA: 500,
    TheoremId.DKW_CONVERGENCE: 200,
}


@dataclass
class ExperimentConfig:
    """
    Validated settings for one run

    Attributes:
        mdp_path (str): MDP spec file, if the subcommand needs one
        distortion_path (str): Distortion file, if the subcommand needs one
        policy (str): "optimal" or a policy file
        c_bs (float): High-risk threshold
        eps_bs (float): Rarity threshold
        seed (int): Seed for stochastic subcommands
        output_path (str): Report destination; stdout when None
        start_state (int): Initial state
        options (dict): Subcommand-specific settings
    """

    mdp_path: str = None
    distortion_path: str = None
    policy: str = "optimal"
    c_bs: float = None
    eps_bs: float = None
    seed: int = None
    output_path: str = None
    start_state: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for path in (self.mdp_path, self.distortion_path):
            if path is not None and not os.path.isfile(path):
                raise ValidationError(f"file not found: {path}")
        if self.policy != "optimal" and not os.path.isfile(self.policy):
            raise ValidationError(f"policy must be 'optimal' or an existing file, got {self.policy!r}")
        if self.c_bs is not None and not self.c_bs > 0.0:
            raise ValidationError(f"--c-bs must be positive, got {self.c_bs}")
        if self.eps_bs is not None and not 0.0 < self.eps_bs < 1.0:
            raise ValidationError(f"--eps-bs must lie in (0, 1), got {self.eps_bs}")
        if self.output_path is not None:
            directory = os.path.dirname(self.output_path) or "."
            if not os.path.isdir(directory):
                raise ValidationError(f"output directory does not exist: {directory}")

    @classmethod
    def from_args(cls, args):
        known = {"mdp", "distortion", "policy", "c_bs", "eps_bs", "seed", "out", "start", "command", "verbose", "handler"}
        return cls(
            mdp_path=getattr(args, "mdp", None),
            distortion_path=getattr(args, "distortion", None),
            policy=getattr(args, "policy", "optimal") or "optimal",
            c_bs=getattr(args, "c_bs", None),
            eps_bs=getattr(args, "eps_bs", None),
            seed=getattr(args, "seed", None),
            output_path=getattr(args, "out", None),
            start_state=getattr(args, "start", 0) or 0,
            options={k: v for k, v in vars(args).items() if k not in known},
        )

    def load_mdp(self):
        return build_mdp(utils.load_json(self.mdp_path))

    def load_model(self):
        return load_model(utils.load_json(self.distortion_path))

    def load_policy(self, mdp):
        if self.policy == "optimal":
            return optimal_policy(mdp)
        spec = utils.load_json(self.policy)
        if "actions" in spec:
            return Policy.from_actions(spec["actions"], mdp.n_actions)
        if "table" in spec:
            return Policy(np.asarray(spec["table"], dtype=float))
        raise ValidationError(f"policy file {self.policy} needs an 'actions' or 'table' field")


def _emit(config, report):
    text = utils.dump_json(report, config.output_path)
    if config.output_path is None:
        sys.stdout.write(text)


def _policy_dict(policy):
    return {"table": policy.table.tolist(), "actions": policy.actions().tolist(), "deterministic": policy.deterministic}


# Subcommands

def cmd_validate(config, args):
    if config.mdp_path is None and config.distortion_path is None:
        raise ValidationError("validate needs --mdp and/or --distortion")
    report = {}
    if config.mdp_path is not None:
        mdp = config.load_mdp()
        report["mdp"] = {"valid": True, "n_states": mdp.n_states, "n_actions": mdp.n_actions, "horizon": mdp.horizon}
    if config.distortion_path is not None:
        try:
            model = config.load_model()
        except CertificateFailed as exc:
            report["distortion"] = {"valid": False, "certificate": exc.certificate.to_dict() if exc.certificate else None}
            _emit(config, report)
            raise
        report["distortion"] = {"valid": True, "kind": model.kind, "certificate": model.certificate.to_dict()}
        if args.curves:
            with open(args.curves, "w", encoding="utf-8") as handle:
                handle.write(utils.curves_csv(model, args.curve_points))
    _emit(config, report)
    return EXIT_OK


def cmd_solve(config, args):
    mdp = config.load_mdp()
    policy = optimal_policy(mdp)
    occ = occupancy(mdp, policy, config.start_state)
    _emit(
        config,
        {
            "policy": _policy_dict(policy),
            "value": value_function(mdp, policy, config.start_state),
            "occupancy": occ.table.tolist(),
            "normalizer": occ.normalizer,
            "start_state": config.start_state,
        },
    )
    return EXIT_OK


def cmd_perceive(config, args):
    mdp = config.load_mdp()
    model = config.load_model()
    policy = config.load_policy(mdp)
    pm = build_hmdp(mdp, policy, model, config.start_state)
    report = pm.to_dict()
    report["true_value"] = value_function(mdp, policy, config.start_state)
    report["cpt_value"] = cpt_value(reward_distribution(mdp, policy, config.start_state), model, mdp.normalizer)
    try:
        h = state_distortion_map(mdp, policy, model, config.start_state)
        report["distortion_map"] = {"support": h.support.tolist(), "h": h.mapped.tolist()}
    except NonInjectiveReward as exc:
        logger.warning("%s", exc)
        report["distortion_map"] = None
    _emit(config, report)
    return EXIT_OK


def cmd_detect(config, args):
    if config.c_bs is None or config.eps_bs is None:
        raise ValidationError("detect needs --c-bs and --eps-bs")
    mdp = config.load_mdp()
    model = config.load_model()
    policy = config.load_policy(mdp)
    report = detect(mdp, policy, model, config.c_bs, config.eps_bs, config.start_state, args.eta_flat)
    frame = report.to_frame(mdp.state_label, mdp.action_label)
    # JSON goes to --out when given, leaving stdout for the table
    _emit(config, report.to_dict())
    if config.output_path is not None:
        sys.stdout.write(utils.format_table(frame) + "\n")
    return EXIT_OK


def cmd_estimate(config, args):
    if config.seed is None:
        raise ValidationError("estimate needs --seed")
    mdp = config.load_mdp()
    model = config.load_model()
    policy = config.load_policy(mdp)
    states, actions, rewards = sample_trajectories(mdp, policy, config.start_state, args.samples, config.seed)
    weights = np.broadcast_to(mdp.gamma ** np.arange(mdp.horizon), rewards.shape)
    pairs = np.stack([states[:, :-1].ravel(), actions.ravel()], axis=1)
    reference = build_hmdp(mdp, policy, model, config.start_state)
    estimate = estimate_hemdp(rewards.ravel(), model, mdp.normalizer, reference, pairs, weights.ravel())
    report = estimate.to_dict()
    report["cpt_value"] = cpt_value(reward_distribution(mdp, policy, config.start_state), model, mdp.normalizer)
    if args.trajectories_out or args.perceived_out:
        trajectories = [
            Trajectory(tuple(map(int, s)), tuple(map(int, a)), tuple(map(float, r)), config.seed)
            for s, a, r in zip(states, actions, rewards)
        ]
    if args.trajectories_out:
        utils.dump_trajectories(trajectories, args.trajectories_out)
    if args.perceived_out:
        try:
            h = state_distortion_map(mdp, policy, model, config.start_state)
        except NonInjectiveReward as exc:
            logger.debug("%s", exc)
            h = None
        utils.dump_trajectories(perceive_trajectories(trajectories, model, h), args.perceived_out)
    _emit(config, report)
    return EXIT_OK


def _combine(theorem_id, results):
    metrics = {}
    for k, result in enumerate(results):
        for key, value in result.metrics.items():
            metrics[f"model{k}_{key}" if len(results) > 1 else key] = value
    witness = next((r.witness for r in results if r.witness is not None), None)
    return TheoremCheckResult(
        theorem_id,
        sum(r.instances_run for r in results),
        sum(r.failures for r in results),
        witness,
        metrics,
    )


def _models(config, default_specs):
    if config.distortion_path is not None:
        return [config.load_model()]
    return [load_model(spec) for spec in default_specs]


def _run_check(theorem, config, args):
    n = args.instances if args.instances is not None else DEFAULT_INSTANCES[theorem]
    seed = config.seed

    if theorem is TheoremId.ONE_STEP:
        results = [check_one_step(mdp_family(4, 3, 1, r_max=m.r_max), m, n, seed) for m in _models(config, STANDARD_MODEL_SPECS)]
        return _combine(theorem, results)

    if theorem is TheoremId.TWO_STATE:
        results = [
            check_two_state(mdp_family(2, 2, (2, 10), r_max=m.r_max), m, n, seed=seed)
            for m in _models(config, STANDARD_MODEL_SPECS)
        ]
        return _combine(theorem, results)

    if theorem is TheoremId.THREE_STATE_COUNTEREXAMPLE:
        model = _models(config, STANDARD_MODEL_SPECS[:1])[0]
        _, result = construct_three_state_counterexample(model, budget=n, seed=seed)
        return result

    if theorem is TheoremId.VALUE_GAP_LOWER_BOUND:
        model = _models(config, (DETECTION_MODEL_SPEC,))[0]
        mdp = black_swan_chain(0.01, r_max=model.r_max)
        policy = Policy.stationary([[0.0, 1.0]] * mdp.n_states, mdp.horizon)
        # thresholds stay inside the high-risk range of the insurance loss
        c_values = np.linspace(VALUE_GAP_C_RANGE[0], VALUE_GAP_C_RANGE[1], n).tolist()
        return check_value_gap_sweep(mdp, policy, model, c_values, config.eps_bs or 0.01, 0)

    if theorem is TheoremId.HITTING_TIME:
        t = hitting_time_from_probabilities(args.delta, args.p_min, args.p_max)
        mdp, policy, events = hitting_chain(0.5 * (args.p_min + args.p_max), horizon=1)
        estimate = monte_carlo_hitting(mdp, policy, events, t, n, seed)
        failures = int(estimate.probability < args.delta - 3.0 * estimate.stderr)
        metrics = {"t": t, **estimate.to_dict()}
        return TheoremCheckResult(theorem, 1, failures, {"t": t} if failures else None, metrics)

    if theorem in (TheoremId.VISITATION_GAP_LEMMA, TheoremId.STEP_VISITATION_LEMMA):
        mdp = random_mdp(np.random.default_rng(seed), 4, 2, 6, gamma=0.9)
        policy = Policy.stationary(np.full((4, 2), 0.5), mdp.horizon)
        result = check_visitation_gap_lemma(mdp, 0.1, policy, n, seed)
        if theorem is TheoremId.STEP_VISITATION_LEMMA:
            result = replace(result, theorem_id=theorem, failures=int(result.metrics["step_failures"]))
            if not result.failures:
                result = replace(result, witness=None)
        return result

    if theorem is TheoremId.DKW_CONVERGENCE:
        base = dict(STANDARD_MODEL_SPECS[0], r_max=1000.0)
        model = _models(config, (base,))[0]
        mdp = black_swan_chain(0.01, r_max=model.r_max)
        policy = Policy.stationary([[0.0, 1.0]] * mdp.n_states, mdp.horizon)
        n_grid = (100, 1000, 10000)
        dkw = DkwConfig.from_model(model, n=n_grid[-1])
        return check_dkw_convergence(reward_distribution(mdp, policy, 0), model, dkw, n_grid, n, seed)

    raise ValidationError(f"unknown theorem {theorem!r}")


def cmd_verify(config, args):
    if config.seed is None:
        raise ValidationError("verify needs --seed")
    theorem = TheoremId(args.theorem)
    result = _run_check(theorem, config, args)
    _emit(config, result.to_dict())
    if not result.passed:
        logger.error("%s check failed: %d failing instance(s)", theorem.value, result.failures)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_hitting(config, args):
    t = hitting_time_bound(args.delta, args.r_max, args.r_bs, args.eps_min, args.eps_bs)
    report = {"t": t, "delta": args.delta, "r_max": args.r_max, "r_bs": args.r_bs, "eps_min": args.eps_min, "eps_bs": args.eps_bs}
    if args.simulate:
        if config.seed is None:
            raise ValidationError("--simulate needs --seed")
        factor = (args.r_max - args.r_bs) / (2.0 * args.r_max)
        mdp, policy, events = hitting_chain(factor * args.eps_min, horizon=1)
        report["simulation"] = monte_carlo_hitting(mdp, policy, events, t, args.simulate, config.seed).to_dict()
    _emit(config, report)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sbs", description="s-black-swan analysis of CPT-perceived MDPs")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, mdp=False, distortion=False, policy=False, out=True):
        if mdp:
            p.add_argument("--mdp", required=mdp == "required", help="MDP spec (JSON)")
        if distortion:
            p.add_argument("--distortion", required=distortion == "required", help="distortion file (JSON)")
        if policy:
            p.add_argument("--policy", default="optimal", help="'optimal' or a policy file (JSON)")
            p.add_argument("--start", type=int, default=0, help="start state index")
        if out:
            p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("validate", help="validate an MDP and/or a distortion model")
    add_common(p, mdp=True, distortion=True)
    p.add_argument("--curves", help="write u/w curve samples to this CSV file")
    p.add_argument("--curve-points", type=int, default=201)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("solve", help="optimal policy, value and occupancy")
    add_common(p, mdp="required")
    p.add_argument("--start", type=int, default=0)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("perceive", help="build the Human MDP and its perception gaps")
    add_common(p, mdp="required", distortion="required", policy=True)
    p.set_defaults(handler=cmd_perceive)

    p = sub.add_parser("detect", help="detect s-black-swan pairs")
    add_common(p, mdp="required", distortion="required", policy=True)
    p.add_argument("--c-bs", type=float, required=True)
    p.add_argument("--eps-bs", type=float, required=True)
    p.add_argument("--eta-flat", type=float, default=ETA_FLAT, help="flatness tolerance of the rarity test")
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("estimate", help="EDF estimate of the perceived value from sampled trajectories")
    add_common(p, mdp="required", distortion="required", policy=True)
    p.add_argument("--samples", type=int, required=True, help="number of trajectories")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trajectories-out", help="write sampled trajectories as JSON lines")
    p.add_argument("--perceived-out", help="write the perceived trajectories as JSON lines")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("verify", help="run a theorem check")
    p.add_argument("--theorem", required=True, choices=[t.value for t in TheoremId])
    p.add_argument("--instances", type=int, help="instances, candidates, trials or repetitions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", dest="distortion", help="distortion file replacing the default models")
    p.add_argument("--eps-bs", type=float)
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--p-min", type=float, default=0.005)
    p.add_argument("--p-max", type=float, default=0.01)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("hitting", help="hitting-time bound for s-black swans")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--r-max", type=float, required=True)
    p.add_argument("--r-bs", type=float, required=True)
    p.add_argument("--eps-min", type=float, required=True)
    p.add_argument("--eps-bs", type=float, required=True)
    p.add_argument("--simulate", type=int, metavar="TRIALS", help="also estimate by Monte Carlo")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_hitting)
    return parser


def run(argv):
    """
    Parse ``argv`` and execute one subcommand

    Returns:
        int: 0 on success, 2 for rejected input, 3 for a failed theorem check
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = ExperimentConfig.from_args(args)
        return args.handler(config, args)
    except SbsError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
