"""Command-line entry point.

Subcommands: validate, control, feasibility, sweep, equilibrium.  Every
run reads a key = value parameter file (the packaged default when
--config is omitted), applies --set overrides, writes a report directory
and prints a one-page summary.  Exit codes: 0 success, 1 configuration
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .errors import ConfigError, SimulationError
from .experiments import run_control, run_feasibility, run_validation, estimate_bounds
from .model import WallModel
from .params import LAYER_NAMES, default_params_path, load_params
from .wall import layer_slices


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arterywall",
        description="Lumped arterial-wall transport simulation with a sliding "
                    "nanoparticle drug-release controller")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="parameter file (default: packaged params.default)")
    common.add_argument("--out", type=Path, default=Path("report"),
                        help="output report directory")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--set", dest="overrides", metavar="KEY=VALUE",
                        action="append", default=[],
                        help="override a parameter (repeatable)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary")

    sub.add_parser("validate", parents=[common],
                   help="compare the lumped model against the fine reference solver")
    sub.add_parser("control", parents=[common],
                   help="run the closed-loop release-controller scenario")
    sub.add_parser("feasibility", parents=[common],
                   help="estimate uncertainty bounds and check the release capacity")
    sub.add_parser("sweep", parents=[common],
                   help="estimate uncertainty bounds only")
    eq = sub.add_parser("equilibrium", parents=[common],
                        help="write the drug-free steady LDL profile")
    eq.add_argument("--lumen-ldl", type=float, default=None,
                    help="lumen LDL level of the profile (mg/dL)")
    return parser


def _resolve_params(args):
    if args.config is not None and not Path(args.config).exists():
        raise ConfigError(f"parameter file not found: {args.config}")
    params = load_params(args.config)
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if overrides:
        params = params.with_overrides(overrides)
    return params


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, text=""):
    if not args.quiet:
        print(text)


def cmd_validate(args) -> int:
    params = _resolve_params(args)
    out = _prepare_out(args)
    result = run_validation(params)
    rpt.write_config_echo(out / "config.echo", result.config_echo)
    rpt.write_trajectory(out / "trajectory.csv", result.trajectory)
    rpt.write_trajectory(out / "trajectory_reference.csv", result.reference)
    rpt.write_metrics(out / "metrics.csv", result.metrics_rows())
    _say(args, "model validation against the fine reference solver")
    _say(args, f"  horizon {params.validation.horizon:.0f} s, refinement "
               f"x{params.validation.refine}, seed {result.seed}")
    _say(args, f"  {'species':<9} {'MAE':>12} {'% of max':>10}")
    for sp, unit in (("ldl", "mg/dL"), ("drug", "ug/mL"), ("carrier", "ug/mL")):
        _say(args, f"  {sp:<9} {result.mae_abs[sp]:>9.5f} {unit:<6}"
                   f" {result.mae_pct[sp]:>8.2f}%")
    _say(args, f"report written to {out}")
    return 0


def cmd_control(args) -> int:
    params = _resolve_params(args)
    out = _prepare_out(args)
    result = run_control(params)
    traj = result.trajectory
    rpt.write_config_echo(out / "config.echo", result.config_echo)
    rpt.write_trajectory(out / "trajectory.csv", traj)
    rpt.write_metrics(out / "metrics.csv", result.metrics_rows())
    rpt.write_profiles(out / "profiles.csv", traj.layers, result.uncontrolled,
                       result.desired, traj.y[-1], traj.s[-1])
    sl = layer_slices(params.geometry)
    _say(args, f"closed-loop release control over {params.control.horizon / 3600:.0f} h "
               f"(lumen LDL {params.env.lumen_ldl:g} mg/dL, seed {result.seed})")
    _say(args, f"  {'layer':<12} {'reduction %':>12} {'final mean LDL':>16}")
    final = traj.y[-1]
    for name in LAYER_NAMES:
        _say(args, f"  {name:<12} {result.reductions[name]:>11.1f} "
                   f"{final[sl[name]].mean():>13.3f} mg/dL")
    _say(args, f"  mean released-drug exposure: {result.drug_auc:.5f} ug*h/mL")
    _say(args, f"  sliding condition held at {100 * result.reachability.fraction:.2f}% "
               f"of {result.reachability.total} monitored samples")
    _say(args, f"report written to {out}")
    return 0


def cmd_feasibility(args) -> int:
    params = _resolve_params(args)
    out = _prepare_out(args)
    bounds, feas = run_feasibility(params)
    layers = WallModel.from_params(params).layers
    rpt.write_config_echo(out / "config.echo", params.echo())
    rpt.write_bounds(out / "bounds.csv", layers, bounds)
    rpt.write_feasibility(out / "feasibility.csv", layers, feas)
    verdict = "PASS" if feas.passed else "FAIL"
    _say(args, f"release capacity u_max = {params.controller.u_max:g} molecule/s over "
               f"nodes [{feas.node_start}, {feas.node_end}]: {verdict}")
    _say(args, f"  max required capacity: {feas.max_required:.3f} molecule/s")
    undefined = int(np.count_nonzero(~feas.defined))
    if undefined:
        _say(args, f"  {undefined} node(s) in range have no defined requirement")
    _say(args, f"report written to {out}")
    return 0


def cmd_sweep(args) -> int:
    params = _resolve_params(args)
    out = _prepare_out(args)
    bounds = estimate_bounds(params)
    layers = WallModel.from_params(params).layers
    rpt.write_config_echo(out / "config.echo", params.echo())
    rpt.write_bounds(out / "bounds.csv", layers, bounds)
    _say(args, f"uncertainty sweep: {bounds.provenance['samples']} draws, "
               f"+/-{100 * bounds.provenance['relative_range']:.0f}% parameter range")
    _say(args, f"  max f bound {bounds.f_bar.max():.3e}, max g bound {bounds.g_bar.max():.3e}")
    _say(args, f"report written to {out}")
    return 0


def cmd_equilibrium(args) -> int:
    params = _resolve_params(args)
    out = _prepare_out(args)
    model = WallModel.from_params(params)
    profile = model.ldl_equilibrium(args.lumen_ldl)
    rpt.write_config_echo(out / "config.echo", params.echo())
    path = out / "equilibrium.csv"
    with open(path, "w", newline="") as fh:
        fh.write("node,layer,y_mgdl\n")
        for i in range(model.q):
            fh.write(f"{i + 1},{int(model.layers[i])},{profile[i]!r}\n")
    lumen = params.env.lumen_ldl if args.lumen_ldl is None else args.lumen_ldl
    sl = layer_slices(params.geometry)
    _say(args, f"drug-free steady LDL profile at lumen {lumen:g} mg/dL")
    for name in LAYER_NAMES:
        _say(args, f"  {name:<12} mean {profile[sl[name]].mean():>10.4f} mg/dL")
    _say(args, f"profile written to {path}")
    return 0


COMMANDS = {"validate": cmd_validate, "control": cmd_control,
            "feasibility": cmd_feasibility, "sweep": cmd_sweep,
            "equilibrium": cmd_equilibrium}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
