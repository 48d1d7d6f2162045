"""Named invariant checks over registered problems.

Each check samples aggressively, records the worst violation it saw, and
compares against a fixed tolerance; ``violation <= tolerance`` passes.
The suite doubles as the problems' constant validation (the declared
L/eta/mu/rho must survive every sampled inequality) and as the engine
behind the CLI ``verify`` subcommand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .approximations import (
    FunctionalInnerApprox,
    IdentityApprox,
    check_condition_i,
    check_condition_ii,
    check_inner_containment,
    check_two_sided_model,
)
from .diagnostics import check_one_step, check_three_point
from .driver import theorem_schedule
from .geometry import UnitSphere
from .models import (
    ModelFamily,
    expected_model_value,
    model_value,
    verify_one_sided_accuracy,
)
from .problems import (
    PARABOLAS_BASEPOINTS,
    ProblemBundle,
    circle_quartic_instance,
    get_problem,
)
from .subsolver import recording_solves, solve_subproblem


@dataclass(frozen=True)
class CheckResult:
    name: str
    problem: str
    max_violation: float
    tolerance: float
    samples: int
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status:<5} {self.name:<28} {self.problem:<16} "
                f"max_violation={self.max_violation: .3e} tol={self.tolerance:.1e} "
                f"n={self.samples}")


# ---------------------------------------------------------------------------
# model checks
# ---------------------------------------------------------------------------

def check_model_one_sided(bundle: ProblemBundle, family, samples: int,
                          rng: np.random.Generator) -> CheckResult:
    worst = -math.inf
    for _ in range(samples):
        x = bundle.sample_domain(rng)
        y = bundle.sample_domain(rng)
        worst = max(worst, verify_one_sided_accuracy(bundle.objective, family, x, y))
    return CheckResult("model-one-sided", f"{bundle.id}/{family}", worst, 1e-10, samples)


def check_model_exactness(bundle: ProblemBundle, family, samples: int,
                          rng: np.random.Generator) -> CheckResult:
    family = ModelFamily.parse(family)
    obj = bundle.objective
    worst = -math.inf
    used = 0
    for _ in range(samples):
        x = bundle.sample_domain(rng)
        if family is ModelFamily.CLIPPED:
            if min(obj.value(x, a) for a in obj.atoms) < 0.0:
                continue
        used += 1
        gap = abs(expected_model_value(obj, family, x, x) - obj.expected_value(x))
        worst = max(worst, gap)
    return CheckResult("model-exact-at-base", f"{bundle.id}/{family}",
                       worst if used else 0.0, 1e-12, used)


def check_model_weak_convexity(bundle: ProblemBundle, family, samples: int,
                               rng: np.random.Generator) -> CheckResult:
    obj = bundle.objective
    eta = obj.constants.eta
    worst = -math.inf
    for _ in range(samples):
        x = bundle.sample_domain(rng)
        atom = obj.atoms[int(rng.integers(obj.n_atoms))]
        y1 = bundle.sample_domain(rng)
        y2 = bundle.sample_domain(rng)
        mid = 0.5 * (y1 + y2)

        def F(y):
            return model_value(obj, family, x, y, atom) + 0.5 * eta * float(y @ y)

        worst = max(worst, F(mid) - 0.5 * (F(y1) + F(y2)))
    return CheckResult("model-weak-convexity", f"{bundle.id}/{family}",
                       worst, 1e-10, samples)


def check_model_lipschitz(bundle: ProblemBundle, family, samples: int,
                          rng: np.random.Generator) -> CheckResult:
    obj = bundle.objective
    L = obj.constants.L
    worst = -math.inf
    for _ in range(samples):
        x = bundle.sample_feasible(rng)
        atom = obj.atoms[int(rng.integers(obj.n_atoms))]
        y1 = bundle.sample_feasible(rng)
        y2 = bundle.sample_feasible(rng)
        diff = abs(model_value(obj, family, x, y1, atom)
                   - model_value(obj, family, x, y2, atom))
        worst = max(worst, diff - L * float(np.linalg.norm(y1 - y2)))
    return CheckResult("model-lipschitz", f"{bundle.id}/{family}", worst, 1e-10, samples)


def check_expected_subgradient(bundle: ProblemBundle, samples: int,
                               rng: np.random.Generator) -> CheckResult:
    """Secant test that the averaged oracle is a subgradient of f up to rho."""
    obj = bundle.objective
    rho = obj.constants.rho
    worst = -math.inf
    for _ in range(samples):
        x = bundle.sample_feasible(rng)
        y = bundle.sample_feasible(rng)
        g = obj.expected_subgrad(x)
        lower = (obj.expected_value(x) + float(g @ (y - x))
                 - 0.5 * rho * float((y - x) @ (y - x)))
        worst = max(worst, lower - obj.expected_value(y))
    return CheckResult("expected-subgradient", bundle.id, worst, 1e-10, samples)


# ---------------------------------------------------------------------------
# geometry checks
# ---------------------------------------------------------------------------

def check_lipschitz_projector(dim: int, r: float, samples: int,
                              rng: np.random.Generator) -> CheckResult:
    """Projection onto the unit sphere is R/(R-r)-Lipschitz on the r-tube."""
    sphere = UnitSphere(dim)
    R = sphere.proximal_radius
    ratio = R / (R - r)
    worst = -math.inf
    for _ in range(samples):
        u = sphere.random_point(rng) * (1.0 + rng.uniform(-r, r))
        v = sphere.random_point(rng) * (1.0 + rng.uniform(-r, r))
        lhs = float(np.linalg.norm(sphere.project(u) - sphere.project(v)))
        worst = max(worst, lhs - ratio * float(np.linalg.norm(u - v)))
    return CheckResult("lipschitz-projector", f"sphere-d{dim}", worst, 1e-10, samples)


# ---------------------------------------------------------------------------
# independent grid-based distance oracle (convex planar sets)
# ---------------------------------------------------------------------------

def _maxquad_batch(mq, P: np.ndarray) -> np.ndarray:
    vals = np.full(P.shape[0], -np.inf)
    for A, b, c in zip(mq.mats, mq.vecs, mq.consts):
        vals = np.maximum(vals, 0.5 * np.sum((P @ A) * P, axis=1) + P @ b + c)
    return vals


def refined_grid_distance(mq, y: np.ndarray, grid_size: int = 4096) -> float:
    """dist(y, {G <= 0}) by an angular boundary grid with local refinement.

    Independent of the dual-bisection projector: each positive-definite
    quadratic piece's zero level set is an ellipse, swept by a dense angular
    grid; grid points violating the other pieces are discarded, and the
    winning cell is polished by golden section over a bracket trimmed to
    the feasible arc (so corner minimizers become bracket endpoints).
    Accurate to ~1e-12 for the shipped inner approximations.
    """
    y = np.asarray(y, dtype=float)
    if _maxquad_batch(mq, y.reshape(1, -1))[0] <= 0.0:
        return 0.0
    best = math.inf
    theta = np.linspace(0.0, 2.0 * math.pi, grid_size, endpoint=False)
    others_tol = 1e-13
    for i in range(mq.n_pieces):
        A, b, c = mq.mats[i], mq.vecs[i], mq.consts[i]
        lam, U = np.linalg.eigh(A)
        if lam[0] <= 0:
            raise ValueError("boundary sweep requires positive-definite pieces")
        center = np.linalg.solve(A, -b)
        g = -(0.5 * center @ A @ center + b @ center + c)
        if g <= 0:
            continue
        axes = np.sqrt(2.0 * g / lam)

        def point(th):
            th = np.atleast_1d(th)
            local = np.column_stack([axes[0] * np.cos(th), axes[1] * np.sin(th)])
            return center + local @ U.T

        def feasible(th):
            vals = _maxquad_batch(mq, point(th))
            return vals <= others_tol

        pts = point(theta)
        d2 = np.sum((pts - y) ** 2, axis=1)
        ok = _maxquad_batch(mq, pts) <= others_tol
        if not np.any(ok):
            continue
        d2 = np.where(ok, d2, np.inf)
        j = int(np.argmin(d2))
        spacing = 2.0 * math.pi / grid_size
        lo, hi = theta[j] - spacing, theta[j] + spacing
        # trim the bracket to the feasible arc on each side
        for sign in (-1, 1):
            a, bnd = theta[j], (lo if sign < 0 else hi)
            if not feasible(bnd)[0]:
                for _ in range(60):
                    mid = 0.5 * (a + bnd)
                    if feasible(mid)[0]:
                        a = mid
                    else:
                        bnd = mid
                if sign < 0:
                    lo = a
                else:
                    hi = a

        def dist2(th):
            p = point(th)[0]
            return float((p - y) @ (p - y))

        inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
        a, bnd = lo, hi
        c1 = bnd - inv_phi * (bnd - a)
        c2 = a + inv_phi * (bnd - a)
        f1, f2 = dist2(c1), dist2(c2)
        for _ in range(120):
            if f1 < f2:
                bnd, c2, f2 = c2, c1, f1
                c1 = bnd - inv_phi * (bnd - a)
                f1 = dist2(c1)
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + inv_phi * (bnd - a)
                f2 = dist2(c2)
        cand = min(dist2(0.5 * (a + bnd)), dist2(lo), dist2(hi))
        best = min(best, math.sqrt(cand))
    if not math.isfinite(best):
        raise ValueError("angular sweep found no feasible boundary point")
    return best


# ---------------------------------------------------------------------------
# approximation checks
# ---------------------------------------------------------------------------

def check_tangent_conditions(dim: int, basepoints: int, samples: int,
                             rng: np.random.Generator) -> list[CheckResult]:
    from .approximations import TangentSphereApprox

    sphere = UnitSphere(dim)
    approx = TangentSphereApprox(sphere, r1=0.5)
    worst_i = -math.inf
    worst_ii = -math.inf
    for _ in range(basepoints):
        x = sphere.random_point(rng)
        worst_i = max(worst_i, check_condition_i(approx, x, samples, rng))
        worst_ii = max(worst_ii, check_condition_ii(approx, x, samples, rng))
    n = basepoints * samples
    return [
        CheckResult("approx-accuracy", f"tangent-d{dim}", worst_i, 1e-10, n),
        CheckResult("approx-retraction", f"tangent-d{dim}", worst_ii, 1e-10, n),
    ]


def check_parabolas_condition_i(approx_name: str, samples: int,
                                rng: np.random.Generator,
                                use_grid_oracle: bool = True) -> CheckResult:
    bundle = get_problem("parabolas2d")
    approx: FunctionalInnerApprox = bundle.approximations[approx_name]
    worst = -math.inf
    for x in PARABOLAS_BASEPOINTS:
        if use_grid_oracle:
            mq = approx._pieces_at(np.asarray(x, dtype=float))
            dist_fn = lambda y, _mq=mq: refined_grid_distance(_mq, y)
        else:
            dist_fn = None
        worst = max(worst, check_condition_i(approx, x, samples, rng,
                                             dist_fn=dist_fn))
    return CheckResult("approx-accuracy", f"parabolas2d/{approx_name}",
                       worst, 1e-8, 2 * samples,
                       note="grid oracle" if use_grid_oracle else "dual projector")


def check_parabolas_containment(approx_name: str, samples: int,
                                rng: np.random.Generator,
                                basepoints=None) -> CheckResult:
    bundle = get_problem("parabolas2d")
    approx: FunctionalInnerApprox = bundle.approximations[approx_name]
    pts = list(PARABOLAS_BASEPOINTS if basepoints is None else basepoints)
    worst = -math.inf
    for x in pts:
        worst = max(worst, check_inner_containment(approx, x, samples, rng))
    return CheckResult("inner-containment", f"parabolas2d/{approx_name}",
                       worst, 1e-9, len(pts) * samples)


def check_parabolas_two_sided(approx_name: str, samples: int,
                              rng: np.random.Generator) -> CheckResult:
    bundle = get_problem("parabolas2d")
    approx: FunctionalInnerApprox = bundle.approximations[approx_name]
    worst = -math.inf
    for x in PARABOLAS_BASEPOINTS:
        worst = max(worst, check_two_sided_model(approx, x, samples, rng))
    return CheckResult("two-sided-model", f"parabolas2d/{approx_name}",
                       worst, 1e-10, 2 * samples)


def random_boundary_basepoints(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Points on the two parabola arcs bounding the feasible lens."""
    out = []
    for _ in range(n):
        t = rng.uniform(-1.0, 1.0)
        if rng.random() < 0.5:
            out.append(np.array([t, t * t]))
        else:
            out.append(np.array([t, 0.2 * t * t + 0.8]))
    return out


# ---------------------------------------------------------------------------
# inequality sweeps
# ---------------------------------------------------------------------------

def check_three_point_quartic(instances: int, rng: np.random.Generator,
                              tolerance: float = 1e-8) -> CheckResult:
    """Randomized descent-inequality sweep on the interval problem.

    Solves go through the production subsolver (prox-point family equals
    the raw regularized subproblem), so the movement recorder sees them.
    """
    bundle = get_problem("quartic1d", sigma=0.0)
    obj = bundle.objective
    rho, L = obj.constants.rho, obj.constants.L
    worst = -math.inf
    for _ in range(instances):
        x = bundle.sample_feasible(rng)
        beta = rho + rng.uniform(0.5, 20.0)
        res = solve_subproblem(obj, "proxpoint", x, 0.0, bundle.xset, beta)
        x_t = res.x
        y = bundle.sample_feasible(rng)
        lhs = obj.expected_value(y) - obj.expected_value(x_t)
        rhs = (0.5 * (beta - rho) * float((y - x_t) @ (y - x_t))
               + 0.5 * beta * float((x - x_t) @ (x - x_t))
               - 0.5 * beta * float((y - x) @ (y - x)))
        worst = max(worst, rhs - lhs)
    return CheckResult("three-point", "quartic1d", worst, tolerance, instances)


def check_three_point_circle(instances: int, rng: np.random.Generator,
                             tolerance: float = 1e-8) -> CheckResult:
    """Same sweep on the circle, with the angular prox solver."""
    inst = circle_quartic_instance()
    rho, L, R = inst.rho, inst.L, inst.R
    angles = rng.uniform(0.0, 2.0 * math.pi, instances)
    radii = rng.uniform(0.5, 1.5, instances)
    X = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    betas = rho + 3.0 * L / R + rng.uniform(0.5, 20.0, instances)
    Xt = inst.prox_batch(X, betas)
    ya = rng.uniform(0.0, 2.0 * math.pi, instances)
    Y = np.column_stack([np.cos(ya), np.sin(ya)])

    def f(P):
        return np.abs(P[:, 0] ** 2 - 1.0)

    lhs = f(Y) - f(Xt)
    rhs = (0.5 * (betas - rho - 3.0 * L / R) * np.sum((Y - Xt) ** 2, axis=1)
           + 0.5 * betas * np.sum((X - Xt) ** 2, axis=1)
           - 0.5 * betas * np.sum((Y - X) ** 2, axis=1))
    worst = float(np.max(rhs - lhs))
    return CheckResult("three-point", "circle-quartic", worst, tolerance, instances)


def check_prox_movement(entries: list[dict]) -> CheckResult:
    """Movement bound over all recorded solves with feasible basepoints."""
    worst = -math.inf
    used = 0
    for e in entries:
        if not e["base_feasible"]:
            continue
        used += 1
        worst = max(worst, e["move"] - e["two_L"] - 10.0 * e["tol"] * e["beta"])
    return CheckResult("prox-movement", "all-solves", worst, 0.0, used)


def check_one_step_alg1(bundle: ProblemBundle, states: int,
                        rng: np.random.Generator, T: int = 100,
                        oracle_resolution: float = 1e-6) -> CheckResult:
    sched = theorem_schedule("thm41", bundle.schedule_constants(), T)
    oracle = bundle.prox_oracle(oracle_resolution)
    approx = IdentityApprox(bundle.xset)
    beta = float(sched.betas[0])
    worst = -math.inf
    for _ in range(states):
        x = bundle.sample_feasible(rng)
        rep = check_one_step(bundle.objective, "subgrad", approx, x, beta,
                             sched.rho_bar, sched.gamma, oracle,
                             position_error=oracle_resolution)
        worst = max(worst, rep.violation - rep.cushion)
    return CheckResult("one-step", f"{bundle.id}/alg1", worst, 1e-8, states)


def check_one_step_alg2(bundle: ProblemBundle, states: int,
                        rng: np.random.Generator) -> CheckResult:
    approx = bundle.approximations["tangent"]
    params = approx.params
    c = bundle.constants
    gamma = c["eta"] + 3.0 * c["L"] * params.nu()
    floor = max(2.0 * c["L"] / params.effective_r1(),
                gamma + c["mu"] + 3.0 * params.tau1 * c["L"])
    rho_bar = 2.0 * floor
    oracle = bundle.prox_oracle()
    worst = -math.inf
    for _ in range(states):
        x = bundle.sample_feasible(rng)
        beta = gamma + rng.uniform(10.0, 200.0)
        rep = check_one_step(bundle.objective, "subgrad", approx, x, beta,
                             rho_bar, gamma, oracle, tau1=params.tau1,
                             tau2=params.tau2, position_error=0.0)
        worst = max(worst, rep.violation - rep.cushion)
    return CheckResult("one-step", f"{bundle.id}/alg2", worst, 1e-8, states)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def validate_constants(bundle: ProblemBundle, samples: int = 2000,
                       seed: int = 0) -> list[CheckResult]:
    """Model-accuracy suite for every registered family of the bundle."""
    rng = np.random.default_rng(seed)
    out: list[CheckResult] = []
    for family in bundle.families:
        out.append(check_model_one_sided(bundle, family, samples, rng))
        out.append(check_model_exactness(bundle, family, samples, rng))
        out.append(check_model_weak_convexity(bundle, family, samples, rng))
        out.append(check_model_lipschitz(bundle, family, samples, rng))
    out.append(check_expected_subgradient(bundle, samples, rng))
    return out


def default_suite(problem: str | None = None, check: str | None = None,
                  samples: int = 1000, seed: int = 0) -> list[CheckResult]:
    """The standard verification battery used by the CLI."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def want(problem_id: str, check_name: str) -> bool:
        if problem is not None and problem not in problem_id:
            return False
        if check is not None and check not in check_name:
            return False
        return True

    for pid in ("quartic1d", "sphere-phase", "parabolas2d"):
        bundle = get_problem(pid)
        for family in bundle.families:
            if want(f"{pid}/{family}", "model"):
                results.append(check_model_one_sided(bundle, family, samples, rng))
                results.append(check_model_exactness(bundle, family, samples, rng))
                results.append(check_model_weak_convexity(bundle, family, samples, rng))
                results.append(check_model_lipschitz(bundle, family, samples, rng))
        if want(pid, "expected-subgradient"):
            results.append(check_expected_subgradient(bundle, samples, rng))

    if want("sphere", "lipschitz-projector"):
        results.append(check_lipschitz_projector(3, 0.5, samples, rng))

    if want("tangent", "approx"):
        for dim in (3, 10):
            results.extend(check_tangent_conditions(dim, 3, samples, rng))
    for name in ("inner-exact", "inner-linear"):
        if want(f"parabolas2d/{name}", "approx-accuracy"):
            results.append(check_parabolas_condition_i(name, max(200, samples // 5), rng))
        if want(f"parabolas2d/{name}", "inner-containment"):
            results.append(check_parabolas_containment(name, samples, rng))
        if want(f"parabolas2d/{name}", "two-sided"):
            results.append(check_parabolas_two_sided(name, samples, rng))

    if want("quartic1d", "three-point"):
        with recording_solves() as entries:
            results.append(check_three_point_quartic(samples, rng))
        if want("all-solves", "prox-movement"):
            results.append(check_prox_movement(entries))
    if want("circle-quartic", "three-point"):
        results.append(check_three_point_circle(samples, rng))

    if want("quartic1d/alg1", "one-step"):
        results.append(check_one_step_alg1(get_problem("quartic1d"),
                                           max(20, samples // 20), rng))
    if want("sphere-phase-d3/alg2", "one-step"):
        results.append(check_one_step_alg2(get_problem("sphere-phase-d3"),
                                           max(5, samples // 100), rng))
    return results
