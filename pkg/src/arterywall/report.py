"""Report directories: CSV export of trajectories, metrics, profiles,
bound estimates and feasibility tables.

A run produces one directory holding ``config.echo`` (the resolved
key = value parameter set), ``trajectory.csv`` and ``metrics.csv``;
validation adds ``trajectory_reference.csv``, control adds
``profiles.csv``, sweeps add ``bounds.csv`` and feasibility adds
``feasibility.csv``.  Floats are written with shortest round-trip
formatting, so identical runs produce byte-identical files and every
recomputable metric can be checked against the stored trajectory.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .controller import BoundEstimates, FeasibilityResult
from .errors import ConfigError
from .integrate import Trajectory

TRAJECTORY_HEADER = ["time_s", "node", "layer", "y_mgdl", "z_ugml", "n_ugml",
                     "u_molps", "s_value"]


def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory(path: Path, traj: Trajectory):
    q = traj.y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k, t in enumerate(traj.times):
            for i in range(q):
                w.writerow([_fmt(t), i + 1, int(traj.layers[i]), _fmt(traj.y[k, i]),
                            _fmt(traj.z[k, i]), _fmt(traj.n[k, i]),
                            _fmt(traj.u[k, i]), _fmt(traj.s[k, i])])


def read_trajectory(path: Path) -> Trajectory:
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    rows = np.atleast_2d(rows)
    times = np.unique(rows[:, 0])
    q = int(rows[:, 1].max())
    if rows.shape[0] != len(times) * q:
        raise ConfigError(f"malformed trajectory file {path}")
    layers = rows[:q, 2].astype(np.int8)
    shape = (len(times), q)
    return Trajectory(times, rows[:, 3].reshape(shape), rows[:, 4].reshape(shape),
                      rows[:, 5].reshape(shape), rows[:, 6].reshape(shape),
                      rows[:, 7].reshape(shape), layers, {"source": str(path)})


def write_metrics(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "layer", "value", "units"])
        for metric, layer, value, units in rows:
            w.writerow([metric, layer, _fmt(value), units])


def read_metrics(path: Path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[(row["metric"], row["layer"])] = float(row["value"])
    return out


def write_profiles(path: Path, layers, uncontrolled, desired, final_y, final_s):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "layer", "y_uncontrolled", "y_desired", "y_final", "s_final"])
        for i in range(len(layers)):
            w.writerow([i + 1, int(layers[i]), _fmt(uncontrolled[i]), _fmt(desired[i]),
                        _fmt(final_y[i]), _fmt(final_s[i])])


def write_bounds(path: Path, layers, bounds: BoundEstimates):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "layer", "f_bar", "g_bar", "y_bar", "z_bar", "b_ss"])
        for i in range(len(layers)):
            w.writerow([i + 1, int(layers[i]), _fmt(bounds.f_bar[i]), _fmt(bounds.g_bar[i]),
                        _fmt(bounds.y_bar[i]), _fmt(bounds.z_bar[i]), _fmt(bounds.b_ss[i])])


def write_feasibility(path: Path, layers, result: FeasibilityResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "layer", "required_uc", "pass"])
        for k, node in enumerate(result.nodes()):
            req = result.required[k]
            req_text = _fmt(req) if np.isfinite(req) else "inf"
            w.writerow([node, int(layers[node - 1]), req_text,
                        "true" if result.feasible[k] else "false"])


def write_config_echo(path: Path, echo: str):
    Path(path).write_text(echo)


def verify_report_consistency(report_dir: Path, atol: float = 1e-12) -> list[str]:
    """Recompute recomputable metrics from the stored trajectory and compare.

    Returns a list of mismatch descriptions (empty when consistent).
    Reachability counts need the model's io terms and are not recomputable
    from the trajectory alone, so they are skipped.
    """
    from .experiments import auc_hours, reduction_rate, layer_slices_from
    from .params import LAYER_NAMES

    report_dir = Path(report_dir)
    problems = []
    metrics = read_metrics(report_dir / "metrics.csv")
    traj = read_trajectory(report_dir / "trajectory.csv")

    if ("drug_auc", "all") in metrics:
        auc = auc_hours(traj.times, traj.mean_drug_series())
        if abs(auc - metrics[("drug_auc", "all")]) > atol * max(1.0, abs(auc)):
            problems.append(f"drug_auc mismatch: {auc!r} vs {metrics[('drug_auc', 'all')]!r}")
    profiles_path = report_dir / "profiles.csv"
    if profiles_path.exists():
        rows = np.loadtxt(profiles_path, delimiter=",", skiprows=1)
        uncontrolled = rows[:, 2]
        final = rows[:, 4]
        if np.max(np.abs(final - traj.y[-1])) > atol:
            problems.append("profiles.csv final LDL differs from the trajectory's last sample")
        sl = layer_slices_from(traj.layers)
        for name in LAYER_NAMES:
            if ("reduction", name) not in metrics:
                continue
            pct, _ = reduction_rate(uncontrolled, final, sl[name])
            if abs(pct - metrics[("reduction", name)]) > atol * max(1.0, abs(pct)):
                problems.append(f"reduction mismatch in {name}: {pct!r} "
                                f"vs {metrics[('reduction', name)]!r}")
    ref_path = report_dir / "trajectory_reference.csv"
    if ref_path.exists():
        ref = read_trajectory(ref_path)
        for sp, attr in (("ldl", "y"), ("drug", "z"), ("carrier", "n")):
            key = (f"mae_{sp}", "all")
            if key not in metrics:
                continue
            err = float(np.abs(getattr(traj, attr) - getattr(ref, attr)).mean())
            if abs(err - metrics[key]) > atol * max(1.0, err):
                problems.append(f"mae_{sp} mismatch: {err!r} vs {metrics[key]!r}")
    return problems
