"""Seed sweeps: run, estimate the stationarity measure at t*, summarize.

The harness fans seeds out across a thread pool (capped by the
``PROXSMOOTH_THREADS`` environment variable), writes one trajectory CSV and
one iterates CSV per run, and aggregates a per-seed summary whose
``bound_rhs`` column equals the schedule's guarantee.  All floating-point
output uses 17 significant digits so repeated invocations are
byte-identical.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .driver import RunLog, run_algorithm1, run_algorithm2, theorem_bound, theorem_schedule
from .problems import ProblemBundle


@dataclass(frozen=True)
class SeedSummary:
    seed: int
    t_star: int
    c2_est: float
    bound_rhs: float


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def max_workers(n_tasks: int) -> int:
    cap = os.environ.get("PROXSMOOTH_THREADS", "")
    try:
        cap_n = max(1, int(cap))
    except ValueError:
        cap_n = os.cpu_count() or 1
    return max(1, min(cap_n, n_tasks))


def build_schedule(bundle: ProblemBundle, schedule_kind: str, T: int,
                   approx_kind: str | None = None, alpha: float | None = None,
                   delta: float | None = None, rho_bar: float | None = None,
                   betas=None):
    if schedule_kind == "custom":
        if betas is None:
            raise ValueError("custom schedule needs explicit stepsizes")
        c = bundle.schedule_constants(approx_kind, alpha, delta, rho_bar)
        gamma = c["eta"]
        R = c["R"]
        if approx_kind is not None:
            gamma = c["eta"] + 3.0 * c["L"] * c["params"].nu()
        elif math.isfinite(R):
            gamma = c["eta"] + 3.0 * c["L"] / R
        rb = rho_bar if rho_bar is not None else 2.0 * (gamma + c["mu"])
        return theorem_schedule("custom", {"betas": betas, "gamma": gamma,
                                           "rho_bar": rb}, T)
    consts = bundle.schedule_constants(approx_kind, alpha, delta, rho_bar)
    return theorem_schedule(schedule_kind, consts, T)


def schedule_bound(bundle: ProblemBundle, schedule_kind: str, T: int,
                   approx_kind: str | None = None, alpha: float | None = None,
                   delta: float | None = None, rho_bar: float | None = None) -> float:
    if schedule_kind == "custom":
        return math.nan
    consts = bundle.schedule_constants(approx_kind, alpha, delta, rho_bar)
    return theorem_bound(schedule_kind, consts, T)


def c_squared_at(bundle: ProblemBundle, log: RunLog,
                 oracle_resolution: float | None = None) -> float:
    """Squared stationarity measure at the sampled iterate, by oracle."""
    oracle = bundle.prox_oracle(oracle_resolution)
    lam = 1.0 / log.rho_bar
    res = oracle.solve(lam, log.x_tstar())
    dist = float(np.linalg.norm(log.x_tstar() - res.prox_point))
    return (dist / lam) ** 2


def run_single(bundle: ProblemBundle, alg: int, family: str,
               approx_kind: str | None, schedule, seed: int,
               x0=None) -> RunLog:
    x0 = bundle.x0 if x0 is None else x0
    if alg == 1:
        return run_algorithm1(bundle.objective, bundle.xset, schedule, x0,
                              seed, family)
    approx = bundle.approximations[approx_kind]
    return run_algorithm2(bundle.objective, approx, schedule, x0, seed, family)


def run_tag(bundle: ProblemBundle, alg: int, family: str,
            approx_kind: str | None, T: int) -> str:
    approx = approx_kind or "none"
    return f"{bundle.id}_alg{alg}_{family}_{approx}_T{T}"


def run_seed_sweep(bundle: ProblemBundle, alg: int, family: str,
                   approx_kind: str | None, schedule_kind: str, T: int,
                   seeds, out_dir: str | Path | None = None,
                   alpha: float | None = None, delta: float | None = None,
                   rho_bar: float | None = None, betas=None,
                   oracle_resolution: float | None = None,
                   ) -> tuple[list[SeedSummary], list[RunLog]]:
    """Run every seed, optionally writing CSVs, and summarize each run."""
    seeds = list(seeds)
    schedule = build_schedule(bundle, schedule_kind, T, approx_kind, alpha,
                              delta, rho_bar, betas)
    bound = schedule_bound(bundle, schedule_kind, T, approx_kind, alpha,
                           delta, rho_bar)
    tag = run_tag(bundle, alg, family, approx_kind, T)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def work(seed: int) -> RunLog:
        log = run_single(bundle, alg, family, approx_kind, schedule, seed)
        if out is not None:
            log.write_trajectory_csv(out / f"{tag}_seed{seed}_trajectory.csv")
            log.write_iterates_csv(out / f"{tag}_seed{seed}_iterates.csv")
        return log

    if len(seeds) == 1:
        logs = [work(seeds[0])]
    else:
        with ThreadPoolExecutor(max_workers=max_workers(len(seeds))) as pool:
            logs = list(pool.map(work, seeds))

    summaries = []
    for seed, log in zip(seeds, logs):
        c2 = c_squared_at(bundle, log, oracle_resolution)
        summaries.append(SeedSummary(seed, log.t_star, c2, bound))
    if out is not None:
        write_summary_csv(out / f"{tag}_summary.csv", summaries)
    return summaries, logs


def write_summary_csv(path, summaries: list[SeedSummary]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("seed,t_star,C_lambda_sq_est,bound_rhs\n")
        for s in summaries:
            fh.write(f"{s.seed},{s.t_star},{_fmt(s.c2_est)},{_fmt(s.bound_rhs)}\n")


def write_sweep_summary_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("T,seeds,mean_C_lambda_sq,bound_rhs\n")
        for r in rows:
            fh.write(f"{r['T']},{r['seeds']},{_fmt(r['mean_c2'])},{_fmt(r['bound'])}\n")
