import io
import json
import logging
import os

import numpy as np
import pandas as pd

from errors import ValidationError

logger = logging.getLogger(__name__)

THREADS_ENV = "SBS_THREADS"


def thread_limit():
    """
    Worker count for parallel checks, read from SBS_THREADS

    Returns:
        int: Positive worker count, 1 when unset or invalid
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1
    if value < 1:
        logger.warning("ignoring non-positive %s=%r", THREADS_ENV, raw)
        return 1
    return value


def to_jsonable(obj):
    """
    Convert numpy scalars/arrays and tuples to plain JSON types

    Args:
        obj: Any nesting of dicts, lists, tuples, numpy values

    Returns:
        object: Structure made of dict, list, str, int, float, bool, None
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_json(obj, path=None):
    """
    Serialize deterministically: sorted keys, fixed indent, trailing newline

    Args:
        obj: Report structure
        path (str, optional): Destination file. Defaults to None (no file).

    Returns:
        str: The JSON text
    """
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    return text


def load_json(path):
    """
    Read a JSON document

    Raises:
        ValidationError: If the file is missing or not valid JSON
    """
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def curve_frame(model, n_points=201):
    """
    Sample u and w for plotting

    Args:
        model (DistortionModel): Perception
        n_points (int, optional): Samples per curve. Defaults to 201.

    Returns:
        pandas.DataFrame: Columns x, u (on [-r_max, r_max]) and p, w_plus,
            w_minus (on [0, 1])
    """
    x = np.linspace(-model.r_max, model.r_max, n_points)
    p = np.linspace(0.0, 1.0, n_points)
    return pd.DataFrame(
        {
            "x": x,
            "u": model.u(x),
            "p": p,
            "w_plus": model.w_plus(p),
            "w_minus": model.w_minus(p),
        }
    )


def curves_csv(model, n_points=201):
    """CSV text of :func:`curve_frame`."""
    csv_buffer = io.StringIO()
    curve_frame(model, n_points).to_csv(csv_buffer, index=False, float_format="%.12g")
    return csv_buffer.getvalue()


def trajectories_frame(trajectories):
    """
    One row per step: trajectory, seed, t, s, a, r, s_next

    Perceived trajectories that carry distorted levels get an extra ``h``
    column; their ``r`` is the perceived reward.
    """
    with_levels = any(getattr(traj, "levels", ()) for traj in trajectories)
    columns = ["trajectory", "seed", "t", "s", "a", "r", "s_next"] + (["h"] if with_levels else [])
    rows = []
    for k, traj in enumerate(trajectories):
        for t, (s, a, r) in enumerate(zip(traj.states, traj.actions, traj.rewards)):
            row = {"trajectory": k, "seed": traj.seed, "t": t, "s": s, "a": a, "r": r, "s_next": traj.states[t + 1]}
            if with_levels:
                row["h"] = traj.levels[t]
            rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def dump_trajectories(trajectories, path):
    """Write trajectories as JSON lines."""
    trajectories_frame(trajectories).to_json(path, orient="records", lines=True, double_precision=15)


def load_trajectories(path):
    """
    Read trajectories written by :func:`dump_trajectories`

    Returns:
        list: Trajectory objects in file order
    """
    from mdp_core import Trajectory

    try:
        frame = pd.read_json(path, orient="records", lines=True)
    except ValueError as exc:
        raise ValidationError(f"{path} is not a trajectory file: {exc}") from exc
    trajectories = []
    for _, steps in frame.sort_values(["trajectory", "t"]).groupby("trajectory", sort=True):
        states = tuple(int(s) for s in steps["s"]) + (int(steps["s_next"].iloc[-1]),)
        trajectories.append(
            Trajectory(
                states,
                tuple(int(a) for a in steps["a"]),
                tuple(float(r) for r in steps["r"]),
                int(steps["seed"].iloc[0]),
            )
        )
    return trajectories


def format_table(frame):
    """Render a DataFrame for the terminal."""
    return frame.to_string(index=False, float_format=lambda v: f"{v:.6g}")
