"""``dualctl`` command-line front end.

Every subcommand reads one JSON config, writes its outputs atomically into
the output directory and reports through the exit code:
0 pass, 1 check failure, 2 config error, 3 infeasible input.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .cost import green_condition_check
from .duality import (
    build_lower_curve,
    build_upper_curve,
    check_duality,
    greedy_pivots,
    lsc_diagnostic,
)
from .dynamics import PiecewiseControl, integrate, trajectory_metrics
from .exceptions import ConfigError, DomainError, InfeasibleError
from .geometry import RegionTag, b_bound, classify, phi_inv_boundary, psi_viab_boundary
from .greedy import GreedyConfig, greedy_u, simulate_greedy
from .oracle import (
    INFINITE,
    brute_force_lower_value,
    brute_force_upper_value,
    control_transfer_check,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3
KERNEL_GRID = (0.01, 1.0, 991)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        return ("inf" if v > 0 else "-inf") if math.isinf(v) else v
    return obj


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def write_json(path: Path, payload):
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


# subcommands --------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, mode=None):
    out = cfg.ensure_output_dir()
    mode = mode or cfg.simulate.mode
    p, lam, sim = cfg.params, cfg.lam, cfg.simulate
    if mode == "greedy":
        gcfg = GreedyConfig(cfg.istar, step=sim.step, horizon=sim.horizon)
        traj = simulate_greedy(cfg.x0, gcfg, p, lam)
        last_u = greedy_u(traj.final_state, gcfg, p)
    else:
        if not sim.levels:
            raise ConfigError("open_loop simulation needs simulate.levels")
        control = PiecewiseControl(sim.horizon, tuple(sim.levels))
        control.check(p)
        traj = integrate(cfg.x0, control, sim.horizon, sim.step, p, lam)
        last_u = control(float(traj.times[-1]))
        write_csv(out / "control.csv", ("t_start", "level"), zip(control.breakpoints[:-1], control.levels))
    us = list(traj.controls) + [last_u]
    write_csv(out / "trajectory.csv", ("t", "s", "i", "z", "u"), zip(traj.times, traj.s, traj.i, traj.z, us))
    m = trajectory_metrics(traj)
    print(f"simulate[{mode}]: peak i = {m.peak_i:.12g}, total cost = {m.total_cost:.12g}, steps = {len(traj) - 1}")
    if "phases" in traj.meta:
        print("phases: " + " -> ".join(f"{name}@{t:.6g}" for name, t in traj.meta["phases"]))
    return EXIT_OK


def kernel_rows(cfg: RunConfig, istar=None):
    istar = cfg.istar if istar is None else istar
    p = cfg.params
    s = np.union1d(np.linspace(*KERNEL_GRID), [p.s_herd, p.s_herd_bar])
    return zip(s, psi_viab_boundary(s, istar, p), phi_inv_boundary(s, istar, p), b_bound(s, istar, p))


def cmd_kernel(cfg: RunConfig, istar=None):
    out = cfg.ensure_output_dir()
    write_csv(out / "kernel.csv", ("s", "psi", "phi", "b_bound"), kernel_rows(cfg, istar))
    print(f"kernel: wrote {out / 'kernel.csv'}")
    return EXIT_OK


def _default_budget_grid(cfg, lower):
    if cfg.budget_grid is not None:
        return cfg.budget_grid.values()
    finite = lower.values[np.isfinite(lower.values)]
    top = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
    return np.linspace(0.0, top, cfg.peak_grid.num)


def _curves(cfg: RunConfig, lower_source="explicit"):
    lower = build_lower_curve(cfg.x0, cfg.peak_grid.values(), cfg.params, cfg.lam, lower_source, cfg.oracle_cfg)
    upper = build_upper_curve(
        cfg.x0, _default_budget_grid(cfg, lower), cfg.params, cfg.lam, "inverse_of_lower", lower=lower
    )
    return lower, upper


def cmd_curve(cfg: RunConfig, which=None, source=None):
    out = cfg.ensure_output_dir()
    which = which or cfg.curve_which
    source = source or (cfg.curve_source if which == cfg.curve_which else None)
    if which == "lower":
        curve = build_lower_curve(
            cfg.x0, cfg.peak_grid.values(), cfg.params, cfg.lam, source or "explicit", cfg.oracle_cfg
        )
    else:
        lower = build_lower_curve(cfg.x0, cfg.peak_grid.values(), cfg.params, cfg.lam)
        curve = build_upper_curve(
            cfg.x0,
            _default_budget_grid(cfg, lower),
            cfg.params,
            cfg.lam,
            source or "inverse_of_lower",
            lower=lower,
            oracle_cfg=cfg.oracle_cfg,
        )
    write_csv(out / "curve.csv", ("knot", "value", "is_infinite"), curve.rows())
    print(f"curve[{which}/{curve.provenance}]: {curve.knots.size} knots, {int(curve.is_infinite.sum())} infinite")
    return EXIT_OK


def _oracle_agreement(cfg, lower, upper, tol_peak):
    n = cfg.duality.oracle_upper_knots
    if n == 0:
        return {"tested": 0, "agree_fraction": None, "ok": True, "rows": []}
    idx = np.unique(np.linspace(0, upper.knots.size - 1, n).round().astype(int))
    rows, agree = [], 0
    for k in idx:
        g = float(upper.knots[k])
        inv = float(upper.values[k])
        res = brute_force_upper_value(cfg.x0, g, cfg.params, cfg.lam, cfg.oracle_cfg)
        ok = abs(res.value - inv) <= max(tol_peak, cfg.tolerances.oracle_gap * inv)
        agree += ok
        rows.append({"budget": g, "inverse": inv, "oracle": res.value, "ok": ok})
    frac = agree / len(idx)
    return {"tested": len(idx), "agree_fraction": frac, "ok": frac >= 0.95, "rows": rows}


def cmd_duality(cfg: RunConfig):
    out = cfg.ensure_output_dir()
    p, lam, x0, tol = cfg.params, cfg.lam, cfg.x0, cfg.tolerances
    lower, upper = _curves(cfg)
    viable = classify(x0, cfg.istar, p) is not RegionTag.Outside
    pivots = greedy_pivots(x0, [cfg.istar], p, lam, cfg.duality.greedy_step) if viable else []
    report = check_duality(lower, upper, tol.duality, pivots)
    # the output location is not part of the experiment; leaving it out keeps reports relocatable
    experiment = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    payload = {
        "config": experiment,
        "seed": cfg.seed,
        "tolerances": {
            "duality_multiple": tol.duality,
            "peak_tol": tol.duality * report.resolution_peak,
            "budget_tol": tol.duality * report.resolution_budget,
        },
        "duality": report.to_dict(),
    }
    passed = report.passed
    notes = list(report.notes)

    if report.empty_domain or not viable:
        notes.append(f"x0 is outside the viability kernel at istar={cfg.istar}; oracle and lsc checks skipped")
    else:
        agreement = _oracle_agreement(cfg, lower, upper, tol.duality * report.resolution_peak)
        payload["oracle_agreement"] = agreement
        passed &= agreement["ok"]
        if cfg.duality.transfer_check:
            transfer = control_transfer_check(
                x0, cfg.istar, p, lam, cfg.oracle_cfg, cfg.duality.greedy_step, tol.oracle_gap, tol.oracle_slack
            )
            payload["transfer"] = transfer.to_dict()
            passed &= transfer.passed
        if cfg.duality.lsc:
            lsc = lsc_diagnostic(
                x0,
                cfg.istar,
                p,
                lam,
                cfg.duality.q_grid,
                GreedyConfig(cfg.istar, step=cfg.duality.greedy_step),
                seed=cfg.seed,
            )
            lsc_ok = lsc.min_running_cost_on_L == 0 and abs(lsc.envelope_gap) <= tol.envelope
            payload["lsc"] = {**lsc.to_dict(), "ok": lsc_ok}
            passed &= lsc_ok
    payload["notes"] = notes
    payload["passed"] = bool(passed)
    write_json(out / "duality_report.json", payload)
    print(
        f"duality: round-trip errors {report.max_roundtrip_error_lower:.3g} (budget) / "
        f"{report.max_roundtrip_error_upper:.3g} (peak), monotone={report.monotonicity_ok}, "
        f"passed={bool(passed)}"
    )
    return EXIT_OK if passed else EXIT_CHECK


def cmd_green_check(cfg: RunConfig):
    out = cfg.ensure_output_dir()
    report = green_condition_check(cfg.lam, cfg.params, tol=cfg.tolerances.green, seed=cfg.seed)
    write_json(out / "green_report.json", report.to_dict())
    print(f"green-check: max curl = {report.max_value:.6g} at (s, i) = {report.argmax}, holds = {report.holds}")
    return EXIT_OK if report.holds else EXIT_CHECK


def cmd_oracle(cfg: RunConfig, problem=None):
    out = cfg.ensure_output_dir()
    problem = problem or cfg.oracle_problem
    if problem == "lower":
        res = brute_force_lower_value(cfg.x0, cfg.istar, cfg.params, cfg.lam, cfg.oracle_cfg)
    else:
        if cfg.budget is None:
            raise ConfigError("oracle upper problem needs a top-level 'budget'")
        res = brute_force_upper_value(cfg.x0, cfg.budget, cfg.params, cfg.lam, cfg.oracle_cfg)
    write_json(out / "oracle_report.json", {"problem": problem, **res.to_dict()})
    if res.best is None or res.value == INFINITE:
        print(f"oracle[{problem}]: no feasible control in the searched family")
        return EXIT_INFEASIBLE
    ctl = res.best
    write_csv(out / "control.csv", ("t_start", "level"), zip(ctl.breakpoints[:-1], ctl.levels))
    print(f"oracle[{problem}]: value = {res.value:.12g} (peak {res.peak:.9g}, cost {res.cost:.9g}), seed {res.seed}")
    return EXIT_OK


# entry point ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dualctl", description="Peak/budget duality experiments for confined SIR.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (overrides config and env)")
        sp.add_argument("--seed", type=int, default=None, help="random seed (overrides config and env)")
        return sp

    add("simulate", "write trajectory.csv").add_argument("--mode", choices=("greedy", "open_loop"))
    add("kernel", "write kernel.csv").add_argument("--istar", type=float)
    sp = add("curve", "write curve.csv")
    sp.add_argument("--which", choices=("lower", "upper"))
    sp.add_argument("--source", choices=("explicit", "oracle", "inverse_of_lower"))
    add("duality", "run the duality checks and write duality_report.json")
    add("green-check", "test the curl sign condition")
    add("oracle", "brute-force search; writes control.csv").add_argument("--problem", choices=("lower", "upper"))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config).with_overrides(args.out, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.mode)
        if args.command == "kernel":
            return cmd_kernel(cfg, args.istar)
        if args.command == "curve":
            return cmd_curve(cfg, args.which, args.source)
        if args.command == "duality":
            return cmd_duality(cfg)
        if args.command == "green-check":
            return cmd_green_check(cfg)
        return cmd_oracle(cfg, args.problem)
    except InfeasibleError as exc:
        print(f"dualctl: infeasible input: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, DomainError) as exc:
        print(f"dualctl: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
