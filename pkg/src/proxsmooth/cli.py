"""Command-line harness.

Subcommands: ``run`` (seed sweep at one iteration count), ``sweep``
(multiple iteration counts), ``verify`` (invariant suite), ``diagnose``
(recompute the stationarity measure along a stored trajectory), and
``report`` (render figures from emitted CSVs).

A flat ``key=value`` config file can supply any flag (keys mirror flag
names without dashes); explicit flags win.  Exit codes: 0 success,
1 verification failure, 2 invalid configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ProxSmoothError, UnknownProblem
from .harness import (
    build_schedule,
    c_squared_at,
    run_seed_sweep,
    run_tag,
    write_summary_csv,
    write_sweep_summary_csv,
)
from .problems import get_problem, fresh_problem, problem_ids

FAMILIES = ("proxpoint", "subgrad", "clipped", "proxlin")
APPROXES = ("identity", "tangent", "inner-exact", "inner-linear")
SCHEDULES = ("thm41", "thm61", "custom")


class ConfigError(Exception):
    pass


def _load_config(path: str) -> dict[str, str]:
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config lines must be key=value, got {line!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _merged(args, cfg: dict, key: str, default=None, cast=str):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in cfg:
        return cast(cfg[key])
    return default


def _parse_seeds(spec: str) -> list[int]:
    if "," in spec:
        return [int(s) for s in spec.split(",") if s.strip() != ""]
    return list(range(int(spec)))


def _parse_t_list(spec: str) -> list[int]:
    return [int(s) for s in str(spec).split(",") if s.strip() != ""]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=None, help="registered problem id")
    p.add_argument("--alg", choices=("1", "2"), help="1 direct, 2 retracted")
    p.add_argument("--model", choices=FAMILIES)
    p.add_argument("--approx", choices=APPROXES)
    p.add_argument("-T", dest="T", help="iteration count (comma list for sweep)")
    p.add_argument("--seeds", help="seed count or comma-separated list")
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--rho-bar", dest="rho_bar", type=float)
    p.add_argument("--betas", help="comma list, custom schedule only")
    p.add_argument("--out")
    p.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxsmooth",
        description="stochastic model-based minimization over proximally smooth sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one iteration count over seeds")
    _add_run_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run several iteration counts")
    _add_run_flags(p_sweep)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    p_verify.add_argument("--problem")
    p_verify.add_argument("--check")
    p_verify.add_argument("--samples", type=int, default=400)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--override", action="append", default=[],
                          help="constant override key=value (debugging aid)")

    p_diag = sub.add_parser("diagnose", help="recompute C along a trajectory")
    p_diag.add_argument("--trajectory", required=True)
    p_diag.add_argument("--problem", required=True)
    p_diag.add_argument("--rho-bar", dest="rho_bar", type=float)
    p_diag.add_argument("--resolution", type=float)
    p_diag.add_argument("--out")

    p_rep = sub.add_parser("report", help="render figures from run CSVs")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--out")
    return parser


def _resolve_run_config(args) -> dict:
    cfg = _load_config(args.config) if args.config else {}
    problem = _merged(args, cfg, "problem")
    if problem is None:
        raise ConfigError("--problem is required")
    try:
        bundle = get_problem(problem)
    except UnknownProblem as exc:
        raise ConfigError(str(exc)) from exc
    alg = int(_merged(args, cfg, "alg", default="1"))
    if alg not in (1, 2):
        raise ConfigError("--alg must be 1 or 2")
    family = _merged(args, cfg, "model", default="subgrad")
    if family not in FAMILIES:
        raise ConfigError(f"--model must be one of {FAMILIES}")
    if family not in bundle.families:
        raise ConfigError(f"problem {problem!r} does not register family {family!r}")
    approx = _merged(args, cfg, "approx")
    if alg == 2 and approx is None:
        raise ConfigError("--alg 2 requires --approx")
    if approx is not None and approx not in bundle.approximations:
        raise ConfigError(f"problem {problem!r} has no approximation {approx!r}")
    schedule = _merged(args, cfg, "schedule",
                       default=("thm61" if alg == 2 else "thm41"))
    if schedule not in SCHEDULES:
        raise ConfigError(f"--schedule must be one of {SCHEDULES}")
    if schedule == "thm61" and approx is None:
        raise ConfigError("schedule thm61 needs an approximation kind")
    t_spec = _merged(args, cfg, "T", default="100")
    seeds = _parse_seeds(_merged(args, cfg, "seeds", default="1"))
    betas_spec = _merged(args, cfg, "betas")
    betas = None
    if betas_spec is not None:
        betas = [float(s) for s in str(betas_spec).split(",") if s.strip()]
    if schedule == "custom" and betas is None:
        raise ConfigError("custom schedule requires --betas")
    out = _merged(args, cfg, "out", default="runs")
    return {
        "bundle": bundle, "alg": alg, "family": family, "approx": approx,
        "schedule": schedule, "t_list": _parse_t_list(t_spec), "seeds": seeds,
        "alpha": _merged(args, cfg, "alpha", cast=float),
        "delta": _merged(args, cfg, "delta", cast=float),
        "rho_bar": _merged(args, cfg, "rho_bar", cast=float),
        "betas": betas, "out": out,
    }


def _write_metadata(bundle, out: Path) -> None:
    meta = bundle.metadata()
    meta["constants"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                         for k, v in meta["constants"].items()}
    (out / f"{bundle.id}_metadata.txt").write_text(
        json.dumps(meta, indent=2, default=float) + "\n")


def cmd_run(args) -> int:
    rc = _resolve_run_config(args)
    if len(rc["t_list"]) != 1:
        raise ConfigError("run takes a single -T; use sweep for several")
    T = rc["t_list"][0]
    out = Path(rc["out"])
    summaries, _ = run_seed_sweep(
        rc["bundle"], rc["alg"], rc["family"], rc["approx"], rc["schedule"],
        T, rc["seeds"], out_dir=out, alpha=rc["alpha"], delta=rc["delta"],
        rho_bar=rc["rho_bar"], betas=rc["betas"])
    _write_metadata(rc["bundle"], out)
    mean_c2 = float(np.mean([s.c2_est for s in summaries]))
    print(f"{run_tag(rc['bundle'], rc['alg'], rc['family'], rc['approx'], T)}: "
          f"{len(summaries)} seeds, mean C^2 = {mean_c2:.6g}, "
          f"bound = {summaries[0].bound_rhs:.6g}")
    return 0


def cmd_sweep(args) -> int:
    rc = _resolve_run_config(args)
    out = Path(rc["out"])
    rows = []
    for T in rc["t_list"]:
        summaries, _ = run_seed_sweep(
            rc["bundle"], rc["alg"], rc["family"], rc["approx"], rc["schedule"],
            T, rc["seeds"], out_dir=out, alpha=rc["alpha"], delta=rc["delta"],
            rho_bar=rc["rho_bar"], betas=rc["betas"])
        mean_c2 = float(np.mean([s.c2_est for s in summaries]))
        rows.append({"T": T, "seeds": len(summaries), "mean_c2": mean_c2,
                     "bound": summaries[0].bound_rhs})
        print(f"T={T}: mean C^2 = {mean_c2:.6g}, bound = {summaries[0].bound_rhs:.6g}")
    tag = run_tag(rc["bundle"], rc["alg"], rc["family"], rc["approx"], 0)
    write_sweep_summary_csv(out / f"{tag.rsplit('_T', 1)[0]}_sweep_summary.csv", rows)
    _write_metadata(rc["bundle"], out)
    return 0


def _apply_overrides(bundle, overrides: list[str]):
    import dataclasses

    if not overrides:
        return bundle
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        k, v = item.split("=", 1)
        updates[k.strip()] = float(v)
    bundle.constants.update(updates)
    known = {f.name for f in dataclasses.fields(bundle.objective.constants)}
    obj_updates = {k: v for k, v in updates.items() if k in known}
    if obj_updates:
        bundle.objective.constants = dataclasses.replace(
            bundle.objective.constants, **obj_updates)
    return bundle


def cmd_verify(args) -> int:
    from .verification import default_suite

    if args.override:
        if not args.problem:
            raise ConfigError("--override requires --problem")
        bundle = _apply_overrides(fresh_problem(args.problem), args.override)
        from .verification import validate_constants
        results = validate_constants(bundle, samples=args.samples, seed=args.seed)
    else:
        results = default_suite(problem=args.problem, check=args.check,
                                samples=args.samples, seed=args.seed)
    if not results:
        print("no checks matched the given filters", file=sys.stderr)
        return 2
    failed = 0
    for r in results:
        print(r.row())
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_diagnose(args) -> int:
    traj_path = Path(args.trajectory)
    if not traj_path.exists():
        print(f"trajectory file not found: {traj_path}", file=sys.stderr)
        return 2
    iter_path = Path(str(traj_path).replace("_trajectory.csv", "_iterates.csv"))
    if not iter_path.exists():
        print(f"iterates file not found: {iter_path}", file=sys.stderr)
        return 2
    bundle = get_problem(args.problem)
    data = np.genfromtxt(iter_path, delimiter=",", skip_header=1)
    iterates = np.atleast_2d(data)[:, 1:]
    T = iterates.shape[0] - 2
    if args.rho_bar is not None:
        rho_bar = args.rho_bar
    else:
        c = bundle.constants
        curv = 0.0 if math.isinf(c["R"]) else 3.0 * c["L"] / c["R"]
        rho_bar = 2.0 * (c["eta"] + c["mu"] + curv)
    lam = 1.0 / rho_bar
    oracle = bundle.prox_oracle(args.resolution)
    step = max(1, (T + 1) // 100)
    rows = {}
    for t in range(0, T + 2, step):
        res = oracle.solve(lam, iterates[t])
        c_est = float(np.linalg.norm(iterates[t] - res.prox_point)) / lam
        rows[t] = (c_est, res.position_error / lam)
    out_path = Path(args.out) if args.out else Path(
        str(traj_path).replace("_trajectory.csv", "_diagnosed.csv"))
    lines = traj_path.read_text().splitlines()
    with open(out_path, "w", newline="\n") as fh:
        fh.write(lines[0] + ",C_lambda_est,oracle_err\n")
        for line in lines[1:]:
            t = int(line.split(",", 1)[0])
            if t in rows:
                c_est, err = rows[t]
                fh.write(f"{line},{format(c_est, '.17g')},{format(err, '.17g')}\n")
            else:
                fh.write(line + ",,\n")
    print(f"wrote {out_path} ({len(rows)} diagnostic points, rho_bar={rho_bar:.6g})")
    return 0


def cmd_report(args) -> int:
    from .report import render_run_dir

    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        print(f"run directory not found: {run_dir}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else run_dir / "figures"
    written = render_run_dir(run_dir, out)
    for p in written:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        if args.command == "report":
            return cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ProxSmoothError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
