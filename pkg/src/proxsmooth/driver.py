"""Algorithm drivers: stepsize schedules, run loop, and run logging.

Two schedules are provided.  The ``thm41`` schedule is the constant
stepsize ``max(gamma, sqrt(rho_bar L^2 (T+1) / (2 Delta)))`` with
``gamma = eta + 3L/R`` and ``rho_bar = 2(eta + mu + 3L/R)``, suited to
direct minimization over the constraint set.  The ``thm61`` schedule is
``gamma + sqrt(T+1)/alpha`` with ``gamma = eta + 3 L nu`` and
``nu = R/(2(R - r1)^2)`` from the set-approximation parameters, suited to
the retracted variant.  Both carry the matching upper bound on the
expected squared stationarity measure at a randomly sampled iterate
``t*``, drawn with probabilities proportional to ``1/(beta_t - gamma)``.

Randomness is counter-based: draw t of a run seeded with ``s`` uses the
Philox stream keyed ``[s, t]``, so trajectories are reproducible and
independent of execution order; ``t*`` uses key ``[s, T+1]``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .approximations import ApproxParams, IdentityApprox, SetApproximation
from .errors import FeasibilityError, InvalidConstants, InvalidSchedule, InvalidWeights
from .geometry import ProxSmoothSet, as_vector
from .models import ModelFamily, StochasticObjective
from .subsolver import solve_subproblem

THM41 = "thm41"
THM61 = "thm61"
CUSTOM = "custom"


def _philox_uniform(seed: int, index: int) -> float:
    gen = np.random.Generator(np.random.Philox(key=[seed, index]))
    return float(gen.random())


@dataclass(frozen=True)
class StepSchedule:
    """Per-iteration stepsizes plus the constants the guarantees need."""

    kind: str
    betas: np.ndarray
    gamma: float
    rho_bar: float
    constants: dict

    @property
    def T(self) -> int:
        return self.betas.shape[0] - 1

    def validate_positive(self) -> None:
        if not np.all(np.isfinite(self.betas)) or np.any(self.betas <= 0):
            raise InvalidSchedule("all stepsizes must be finite and positive")


def theorem_schedule(kind: str, constants: dict, T: int) -> StepSchedule:
    """Build a schedule of length T+1 from declared problem constants.

    ``thm41`` needs eta, mu, L, R, delta; ``thm61`` needs eta, mu, L, delta,
    alpha and the approximation parameters (R, tau1, r1, tau2, r2), with an
    optional explicit rho_bar.  Raises :class:`InvalidConstants` on
    inconsistent inputs.
    """
    if T < 0:
        raise InvalidConstants("iteration count must be nonnegative")
    n = T + 1
    if kind == THM41:
        eta, mu, L = constants["eta"], constants["mu"], constants["L"]
        R, delta = constants["R"], constants["delta"]
        _require(eta >= 0 and mu >= 0 and L >= 0, "eta, mu, L must be nonnegative")
        _require(R > 0, "R must be positive")
        _require(delta > 0, "delta must be positive")
        curv = 0.0 if math.isinf(R) else 3.0 * L / R
        gamma = eta + curv
        rho_bar = 2.0 * (eta + mu + curv)
        beta = max(gamma, math.sqrt(rho_bar * L * L * n / (2.0 * delta)))
        return StepSchedule(THM41, np.full(n, beta), gamma, rho_bar,
                            dict(constants))
    if kind == THM61:
        eta, mu, L = constants["eta"], constants["mu"], constants["L"]
        delta, alpha = constants["delta"], constants["alpha"]
        params: ApproxParams = constants["params"]
        _require(eta >= 0 and mu >= 0 and L >= 0, "eta, mu, L must be nonnegative")
        _require(delta > 0, "delta must be positive")
        _require(alpha > 0, "alpha must be positive")
        gamma = eta + 3.0 * L * params.nu()
        if math.isfinite(params.r2):
            slack = 2.0 * L - gamma * params.r2
            if slack > 0 and alpha >= params.r2 / slack:
                raise InvalidConstants(
                    f"alpha must be below {params.r2 / slack:.6g} for r2={params.r2}"
                )
        beta = gamma + math.sqrt(n) / alpha
        r1 = params.effective_r1()
        floor = max(2.0 * L / r1 if math.isfinite(r1) else 0.0,
                    gamma + mu + 3.0 * params.tau1 * L)
        rho_bar = constants.get("rho_bar") or 2.0 * floor
        _require(rho_bar > floor,
                 f"rho_bar must exceed max(2L/r1, gamma+mu+3*tau1*L) = {floor:.6g}")
        lower = max(2.0 * L / params.r2 if math.isfinite(params.r2) else 0.0, gamma)
        _require(beta > lower, "stepsize fell below the schedule's admissible floor")
        out = dict(constants)
        out["rho_bar"] = rho_bar
        return StepSchedule(THM61, np.full(n, beta), gamma, rho_bar, out)
    if kind == CUSTOM:
        betas = np.asarray(constants["betas"], dtype=float)
        _require(betas.shape[0] == n, "custom schedule length must be T+1")
        return StepSchedule(CUSTOM, betas, float(constants["gamma"]),
                            float(constants["rho_bar"]), dict(constants))
    raise InvalidConstants(f"unknown schedule kind {kind!r}")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidConstants(msg)


def retraction_error_terms(beta: float, gamma: float, rho_bar: float,
                           tau2: float, L: float) -> float:
    """Per-step error coefficient ``a_t`` of the retracted guarantee."""
    base = 1.0 / (beta * (beta - gamma))
    ret1 = 8.0 * tau2 * L * (1.0 / rho_bar + 1.0 / beta) / beta**2
    ret2 = 4.0 * tau2**2 * L**2 / beta**4
    return base + ret1 + ret2


def theorem_bound(kind: str, constants: dict, T: int) -> float:
    """Upper bound on ``E[C^2]`` at the sampled iterate for the schedule."""
    n = T + 1
    if kind == THM41:
        sched = theorem_schedule(THM41, constants, T)
        rho_bar, L, delta = sched.rho_bar, constants["L"], constants["delta"]
        return max(rho_bar * delta / n,
                   L * math.sqrt(2.0 * rho_bar * delta / n))
    if kind == THM61:
        sched = theorem_schedule(THM61, constants, T)
        params: ApproxParams = constants["params"]
        L, mu, delta = constants["L"], constants["mu"], constants["delta"]
        rho_bar, gamma = sched.rho_bar, sched.gamma
        a_sum = float(sum(retraction_error_terms(b, gamma, rho_bar,
                                                 params.tau2, L)
                          for b in sched.betas))
        weight = float(sum((rho_bar - gamma - mu - 3.0 * params.tau1 * L)
                           / (b - gamma) for b in sched.betas))
        _require(weight > 0, "guarantee weight must be positive")
        return (2.0 * rho_bar * delta + rho_bar**2 * L**2 * a_sum) / weight
    raise InvalidConstants(f"no closed-form bound for schedule kind {kind!r}")


def tstar_weights(betas, gamma: float) -> np.ndarray:
    """Normalized sampling weights ``1/(beta_t - gamma)``."""
    betas = np.asarray(betas, dtype=float)
    gaps = betas - gamma
    if np.any(gaps <= 0):
        raise InvalidWeights("need beta_t > gamma for every step")
    w = 1.0 / gaps
    return w / w.sum()


def sample_tstar(betas, gamma: float, rng) -> int:
    """Draw the reporting iterate; ``rng`` is a Generator or a uniform."""
    probs = tstar_weights(betas, gamma)
    u = rng if isinstance(rng, float) else float(rng.random())
    return int(np.searchsorted(np.cumsum(probs), u, side="right"))


@dataclass
class RunLog:
    """Complete record of one run: trajectory, stepsizes, draws, and t*."""

    iterates: np.ndarray          # (T+2, d)
    betas: np.ndarray             # (T+1,)
    xi_indices: np.ndarray        # (T+1,) int
    f_values: np.ndarray          # (T+2,)
    dist_values: np.ndarray       # (T+2,)
    step_norms: np.ndarray        # (T+1,)
    cert_bounds: np.ndarray       # (T+1,)
    degenerate: np.ndarray        # (T+1,) bool
    wall_times: np.ndarray        # (T+1,)
    t_star: int
    gamma: float
    rho_bar: float
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.betas.shape[0] - 1

    def x_tstar(self) -> np.ndarray:
        return self.iterates[self.t_star]

    def write_trajectory_csv(self, path) -> None:
        """Rows t = 0..T with the per-step quantities; 17-digit floats."""
        with open(path, "w", newline="\n") as fh:
            fh.write("t,beta,f,dist_X,step_norm,xi_index\n")
            for t in range(self.T + 1):
                fh.write(
                    f"{t},{_fmt(self.betas[t])},{_fmt(self.f_values[t])},"
                    f"{_fmt(self.dist_values[t])},{_fmt(self.step_norms[t])},"
                    f"{int(self.xi_indices[t])}\n"
                )

    def write_iterates_csv(self, path) -> None:
        """Rows t = 0..T+1 with the iterate coordinates (diagnose input)."""
        d = self.iterates.shape[1]
        with open(path, "w", newline="\n") as fh:
            fh.write("t," + ",".join(f"x{j}" for j in range(d)) + "\n")
            for t in range(self.iterates.shape[0]):
                coords = ",".join(_fmt(v) for v in self.iterates[t])
                fh.write(f"{t},{coords}\n")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def run_algorithm2(objective: StochasticObjective, approx: SetApproximation,
                   schedule: StepSchedule, x0, seed: int, family,
                   tol: float = 1e-10, feasibility_tol: float = 1e-9) -> RunLog:
    """Sample, minimize the model over the local set, retract; log everything.

    Deterministic given (schedule, x0, seed, family); the t-th sample comes
    from the Philox stream keyed [seed, t].  Every post-retraction iterate
    must sit within ``feasibility_tol`` of the constraint set, otherwise a
    :class:`FeasibilityError` is raised.
    """
    family = ModelFamily.parse(family)
    schedule.validate_positive()
    X = approx.base_set
    x = as_vector(x0, objective.dim)
    T = schedule.T
    d = objective.dim

    iterates = np.empty((T + 2, d))
    f_values = np.empty(T + 2)
    dist_values = np.empty(T + 2)
    xi_indices = np.empty(T + 1, dtype=np.int64)
    step_norms = np.empty(T + 1)
    cert_bounds = np.empty(T + 1)
    degenerate = np.zeros(T + 1, dtype=bool)
    wall_times = np.empty(T + 1)

    iterates[0] = x
    f_values[0] = objective.expected_value(x)
    dist_values[0] = X.distance(x)

    for t in range(T + 1):
        tic = time.perf_counter()
        u = _philox_uniform(seed, t)
        k = objective.atom_index_from_uniform(u)
        local_set, retraction = approx.build(x)
        res = solve_subproblem(objective, family, x, objective.atoms[k],
                               local_set, float(schedule.betas[t]), tol=tol)
        x_next = retraction(res.x)
        dist = X.distance(x_next)
        if dist > feasibility_tol:
            raise FeasibilityError(
                f"iterate {t + 1} lies {dist:.3g} from the constraint set"
            )
        xi_indices[t] = k
        step_norms[t] = float(np.linalg.norm(x_next - x))
        cert_bounds[t] = res.certificate.bound
        degenerate[t] = res.certificate.degenerate
        wall_times[t] = time.perf_counter() - tic
        x = x_next
        iterates[t + 1] = x
        f_values[t + 1] = objective.expected_value(x)
        dist_values[t + 1] = dist

    u_star = _philox_uniform(seed, T + 1)
    t_star = sample_tstar(schedule.betas, schedule.gamma, u_star)
    return RunLog(iterates, schedule.betas.copy(), xi_indices, f_values,
                  dist_values, step_norms, cert_bounds, degenerate, wall_times,
                  t_star, schedule.gamma, schedule.rho_bar, int(seed),
                  meta={"family": family.value, "approx": approx.kind,
                        "schedule": schedule.kind})


def run_algorithm1(objective: StochasticObjective, xset: ProxSmoothSet,
                   schedule: StepSchedule, x0, seed: int, family,
                   tol: float = 1e-10, feasibility_tol: float = 1e-9) -> RunLog:
    """Direct variant: minimize the model over the constraint set itself.

    Identical to :func:`run_algorithm2` with the identity approximation, so
    the two produce bit-identical trajectories for the same seed.
    """
    log = run_algorithm2(objective, IdentityApprox(xset), schedule, x0, seed,
                         family, tol=tol, feasibility_tol=feasibility_tol)
    log.meta["approx"] = "identity"
    return log
