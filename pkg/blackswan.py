"""s-black-swan detection.

A reachable pair is an s-black swan when it is

* high-risk: its reward is a loss that u_minus understates by more than
  ``c_bs``, i.e. R - u_minus(R) < -c_bs, and
* rare: its true occupancy lies in (0, eps_bs) while w_minus gives it no
  weight, i.e. w_minus is flat between the cumulative occupancies just before
  and at the pair in ascending-occupancy order.

The flatness test uses an absolute tolerance ``eta_flat``; the exact equality
is only attainable with an exactly flat w_minus (see
``distortion.flat_region_model``).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from errors import AssumptionViolated, EventOutOfRange, InvalidParameter, NoIntersection
from mdp_core import occupancy

logger = logging.getLogger(__name__)

ETA_FLAT = 1e-12
# w_minus is applied to cumulative sums over the whole occupancy ordering,
# positive-reward pairs included
CUMULATION = "full_ordering"
INTERSECTION_GRID = 4096

__all__ = [
    "PairDiagnostics",
    "BlackSwanReport",
    "Verdict",
    "EventClassification",
    "detect",
    "detect_in_distribution",
    "compute_r_bs",
    "check_prop1",
    "classify_temporal",
    "eps_bs_min",
]


@dataclass(frozen=True)
class PairDiagnostics:
    pair: tuple
    reward: float
    distorted_reward: float
    reward_gap: float
    occupancy: float
    cumulative: float
    highrisk_condition_met: bool
    rare_condition_met: bool

    @property
    def is_event(self):
        return self.highrisk_condition_met and self.rare_condition_met

    def to_dict(self):
        return {
            "pair": list(self.pair),
            "reward": self.reward,
            "distorted_reward": self.distorted_reward,
            "reward_gap": self.reward_gap,
            "occupancy": self.occupancy,
            "cumulative": self.cumulative,
            "highrisk_condition_met": self.highrisk_condition_met,
            "rare_condition_met": self.rare_condition_met,
        }


@dataclass(frozen=True)
class BlackSwanReport:
    """
    Outcome of a detection run

    Attributes:
        events (tuple): Detected pairs, in the order they were scanned
        diagnostics (tuple): One PairDiagnostics per reachable pair
        eps_bs_min (float): Smallest occupancy among events, 0 if none
        r_bs (float): Magnitude of the u_minus intersection; r_max when
            u_minus never deviates by c_bs
        c_bs (float): High-risk threshold used
        eps_bs (float): Rarity threshold used
        eta_flat (float): Flatness tolerance used
        r_max (float): Reward bound
    """

    events: tuple
    diagnostics: tuple
    eps_bs_min: float
    r_bs: float
    c_bs: float
    eps_bs: float
    eta_flat: float
    r_max: float
    cumulation: str = CUMULATION
    intersection_found: bool = True

    def to_dict(self):
        return {
            "events": [list(event) for event in self.events],
            "diagnostics": [diag.to_dict() for diag in self.diagnostics],
            "eps_bs_min": self.eps_bs_min,
            "r_bs": self.r_bs,
            "intersection_found": self.intersection_found,
            "c_bs": self.c_bs,
            "eps_bs": self.eps_bs,
            "eta_flat": self.eta_flat,
            "r_max": self.r_max,
            "cumulation": self.cumulation,
        }

    def to_frame(self, state_label=str, action_label=str):
        """
        Tabulate the diagnostics

        Returns:
            pandas.DataFrame: One row per reachable pair
        """
        rows = []
        for diag in self.diagnostics:
            s = diag.pair[0]
            a = diag.pair[1] if len(diag.pair) > 1 else None
            rows.append(
                {
                    "s": state_label(s),
                    "a": "" if a is None else action_label(a),
                    "R": diag.reward,
                    "u-(R)": diag.distorted_reward,
                    "P": diag.occupancy,
                    "high_risk": diag.highrisk_condition_met,
                    "rare": diag.rare_condition_met,
                    "verdict": "s-black-swan" if diag.is_event else "-",
                }
            )
        return pd.DataFrame(rows, columns=["s", "a", "R", "u-(R)", "P", "high_risk", "rare", "verdict"])


def _check_thresholds(c_bs, eps_bs, eta_flat):
    if not c_bs > 0.0:
        raise InvalidParameter(f"c_bs must be positive, got {c_bs}")
    if not 0.0 < eps_bs < 1.0:
        raise InvalidParameter(f"eps_bs must lie in (0, 1), got {eps_bs}")
    if not eta_flat >= 0.0:
        raise InvalidParameter(f"eta_flat must be non-negative, got {eta_flat}")


def _r_bs_or_max(model, c_bs, r_max):
    try:
        return compute_r_bs(model, c_bs, r_max), True
    except NoIntersection:
        return float(r_max), False


def _scan(pairs, rewards, probs, model, c_bs, eps_bs, eta_flat):
    order = np.lexsort((np.arange(probs.size), probs))
    cum = np.clip(np.cumsum(probs[order]), 0.0, 1.0)
    prev = np.concatenate(([0.0], cum[:-1]))
    jump = np.abs(model.w_minus(cum) - model.w_minus(prev))

    diagnostics = []
    for k, idx in enumerate(order):
        p = float(probs[idx])
        if p <= 0.0:
            continue
        r = float(rewards[idx])
        distorted = float(model.u(r))
        gap = r - distorted
        high = r < 0.0 and gap < -c_bs
        rare = bool(jump[k] <= eta_flat) and 0.0 < p < eps_bs
        diagnostics.append(PairDiagnostics(pairs[idx], r, distorted, gap, p, float(cum[k]), high, rare))
    return tuple(diagnostics)


def _report(diagnostics, model, c_bs, eps_bs, eta_flat, r_max):
    events = tuple(diag.pair for diag in diagnostics if diag.is_event)
    event_probs = [diag.occupancy for diag in diagnostics if diag.is_event]
    r_bs, found = _r_bs_or_max(model, c_bs, r_max)
    report = BlackSwanReport(
        events,
        diagnostics,
        float(min(event_probs)) if event_probs else 0.0,
        r_bs,
        float(c_bs),
        float(eps_bs),
        float(eta_flat),
        float(r_max),
        intersection_found=found,
    )
    for diag in diagnostics:
        if diag.is_event and not -r_max <= diag.reward <= -r_bs + 1e-9 * max(1.0, r_max):
            logger.warning("event %s with reward %.6g lies outside [-r_max, -r_bs]", diag.pair, diag.reward)
    logger.info("detected %d s-black-swan event(s) among %d reachable pairs", len(events), len(diagnostics))
    return report


def detect(mdp, policy, model, c_bs, eps_bs, start_state, eta_flat=ETA_FLAT):
    """
    Scan every reachable pair for the s-black-swan conditions

    Args:
        mdp (Mdp): Ground-truth process
        policy (Policy): Policy
        model (DistortionModel): Usable perception
        c_bs (float): High-risk threshold, > 0
        eps_bs (float): Rarity threshold in (0, 1)
        start_state (int): Initial state
        eta_flat (float, optional): Flatness tolerance. Defaults to 1e-12.

    Returns:
        BlackSwanReport: Events, diagnostics, eps_bs_min and r_bs

    Raises:
        CertificateFailed: If the model is not usable
    """
    _check_thresholds(c_bs, eps_bs, eta_flat)
    model.require_usable()
    occ = occupancy(mdp, policy, start_state)
    pairs = [(s, a) for s in range(mdp.n_states) for a in range(mdp.n_actions)]
    diagnostics = _scan(pairs, mdp.reward.ravel(), occ.table.ravel(), model, c_bs, eps_bs, eta_flat)
    return _report(diagnostics, model, c_bs, eps_bs, eta_flat, mdp.r_max)


def detect_in_distribution(reward_dist, model, c_bs, eps_bs, eta_flat=ETA_FLAT):
    """Same scan over the atoms of a reward distribution; pairs are ``(atom_index,)``."""
    _check_thresholds(c_bs, eps_bs, eta_flat)
    model.require_usable()
    pairs = [(i,) for i in range(reward_dist.support.size)]
    diagnostics = _scan(pairs, reward_dist.support, reward_dist.probabilities, model, c_bs, eps_bs, eta_flat)
    return _report(diagnostics, model, c_bs, eps_bs, eta_flat, model.r_max)


def compute_r_bs(model, c_bs, r_max, grid_size=INTERSECTION_GRID):
    """
    Locate where u_minus departs from the identity by exactly c_bs

    The deviation g(r) = u_minus(r) - r is taken on the side it has at
    -r_max (understated losses give g > 0, amplified losses g < 0), and the
    first crossing of |g| = c_bs when moving up from -r_max is bracketed on a
    grid and refined with Brent's method.

    Args:
        model (DistortionModel): Perception
        c_bs (float): Threshold, > 0
        r_max (float): Reward bound

    Returns:
        float: R_bs > 0 with the crossing at r = -R_bs

    Raises:
        NoIntersection: If the deviation never reaches c_bs on [-r_max, 0]
    """
    if not c_bs > 0.0:
        raise InvalidParameter(f"c_bs must be positive, got {c_bs}")
    end = float(model.u_minus(-r_max)) + r_max
    sign = 1.0 if end >= 0.0 else -1.0

    def excess(r):
        return sign * (model.u_minus(r) - r) - c_bs

    grid = np.linspace(-r_max, 0.0, grid_size)
    values = excess(grid)
    if values[0] <= 0.0:
        raise NoIntersection(
            f"|u_minus(r) - r| stays below c_bs={c_bs} at -r_max; no s-black swan can exist"
        )
    idx = int(np.argmax(values <= 0.0))
    if values[idx] == 0.0:
        root = grid[idx]
    else:
        root = brentq(lambda r: float(excess(r)), grid[idx - 1], grid[idx], xtol=1e-13, maxiter=500)
    return float(-root)


def check_prop1(r, model, c_bs, eps_bs, reward_dist, eta_flat=ETA_FLAT):
    """
    Reward-space s-black-swan test

    True iff r - u_minus(r) < -c_bs, w_minus(F(r)) = 0 (within eta_flat) and
    0 < F(r) < eps_bs.

    Raises:
        AssumptionViolated: If the test passes at a reward outside
            [-r_max, -R_bs], which a valid u_minus cannot produce
    """
    if r > 0.0:
        return False
    high = r - float(model.u_minus(r)) < -c_bs
    f = reward_dist.cdf_at(r)
    rare = abs(float(model.w_minus(f))) <= eta_flat and 0.0 < f < eps_bs
    if not (high and rare):
        return False
    try:
        r_bs = compute_r_bs(model, c_bs, model.r_max)
    except NoIntersection as exc:
        raise AssumptionViolated(f"reward {r} is high-risk but u_minus never crosses r + c_bs") from exc
    if not -model.r_max <= r <= -r_bs + 1e-9 * max(1.0, model.r_max):
        raise AssumptionViolated(f"reward {r} is flagged outside [-r_max, -R_bs] = [{-model.r_max}, {-r_bs}]")
    return True


class Verdict(str, Enum):
    S_BLACK_SWAN = "SBlackSwan"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class EventClassification:
    event: tuple
    verdict: Verdict
    stationary_interval: tuple = field(default=None)

    def to_dict(self):
        return {
            "event": list(self.event),
            "verdict": self.verdict.value,
            "stationary_interval": None if self.stationary_interval is None else list(self.stationary_interval),
        }


def _same_dynamics(left, right):
    return np.array_equal(np.asarray(left[0]), np.asarray(right[0])) and np.array_equal(
        np.asarray(left[1]), np.asarray(right[1])
    )


def classify_temporal(sequence, flagged, event):
    """
    Classify a flagged event in a piecewise-stationary sequence

    Args:
        sequence (list): (P_t, R_t) tables for t = 0..T-1
        flagged (callable): flagged(s, a, t) -> bool
        event (tuple): (s, a, t_bs)

    Returns:
        EventClassification: SBlackSwan with the maximal constant-dynamics
            interval around t_bs when the event is flagged throughout it,
            otherwise Indeterminate

    Raises:
        EventOutOfRange: If t_bs is not a valid step
    """
    s, a, t_bs = event
    if not 0 <= t_bs < len(sequence):
        raise EventOutOfRange(f"t_bs={t_bs} outside a sequence of length {len(sequence)}")
    t1 = t_bs
    while t1 > 0 and _same_dynamics(sequence[t1 - 1], sequence[t_bs]):
        t1 -= 1
    t2 = t_bs
    while t2 + 1 < len(sequence) and _same_dynamics(sequence[t2 + 1], sequence[t_bs]):
        t2 += 1
    if all(flagged(s, a, t) for t in range(t1, t2 + 1)):
        return EventClassification(tuple(event), Verdict.S_BLACK_SWAN, (t1, t2))
    return EventClassification(tuple(event), Verdict.INDETERMINATE, None)


def eps_bs_min(report):
    """Smallest occupancy among detected events, 0 when there are none."""
    return report.eps_bs_min
