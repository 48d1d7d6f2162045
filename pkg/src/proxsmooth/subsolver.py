"""Per-iteration subproblem solvers.

Every algorithm step minimizes ``f_x(y, xi) + (beta/2) ||y - x||^2`` over a
constraint set S.  The dispatcher below routes each (model family, set)
pair to the sharpest available method:

* affine models over any convex set with an exact projector reduce to a
  single projection, ``proj_S(x - g / beta)``;
* the unit sphere admits a closed form for affine models;
* scalar problems with piecewise-quadratic model structure are minimized
  exactly by candidate enumeration;
* convex inner approximations of functional constraints are handled by
  dual bisection with exact inner solves;
* everything else falls back to a projected subgradient method whose
  averaged iterate carries an a-posteriori suboptimality certificate.

A test-mode recorder captures ``beta * ||x - solution||`` for every solve so
the movement bound ``<= 2L`` can be asserted globally.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import NoConvergence, NoSlaterPoint, ProxSmoothError
from .geometry import (
    AffineSubspace,
    Box,
    ConvexSublevelSet,
    ProxSmoothSet,
    UnitSphere,
    as_vector,
    minimize_quadratic_over_sublevel,
)
from .models import ModelFamily, StochasticObjective, model_subgradient, model_value

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6


@dataclass(frozen=True)
class Certificate:
    """How a solution was produced and how suboptimal it may be."""

    method: str
    bound: float = 0.0
    iterations: int = 0
    multiplier: float = math.nan
    degenerate: bool = False


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    certificate: Certificate


@dataclass(frozen=True)
class SubproblemSpec:
    """One regularized model minimization: objective, family, basepoint,
    sampled atom, constraint set, and stepsize beta."""

    objective: StochasticObjective
    family: ModelFamily
    x: np.ndarray
    atom: Any
    constraint: ProxSmoothSet
    beta: float
    tol: float = DEFAULT_TOL
    max_iterations: int = DEFAULT_MAX_ITER

    def model_value(self, y) -> float:
        return model_value(self.objective, self.family, self.x, y, self.atom)

    def model_subgrad(self, y) -> np.ndarray:
        return model_subgradient(self.objective, self.family, self.x, y, self.atom)

    def total_value(self, y) -> float:
        y = as_vector(y, self.objective.dim)
        d = y - self.x
        return self.model_value(y) + 0.5 * self.beta * float(d @ d)


# ---------------------------------------------------------------------------
# 1-d piecewise quadratics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Piecewise1D:
    """Continuous scalar function, quadratic ``a t^2 + b t + c`` per interval.

    ``breaks`` are the sorted interior knots; ``coeffs`` has one (a, b, c)
    row per interval, one more row than there are knots.
    """

    breaks: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape[0] != self.breaks.shape[0] + 1:
            raise ValueError("need exactly len(breaks) + 1 coefficient rows")

    def value(self, t: float) -> float:
        idx = int(np.searchsorted(self.breaks, t, side="left"))
        a, b, c = self.coeffs[idx]
        return float(a * t * t + b * t + c)

    def add_quadratic(self, a: float, b: float, c: float) -> "Piecewise1D":
        coeffs = self.coeffs + np.array([a, b, c])
        return Piecewise1D(self.breaks, coeffs)

    def minimize(self, lo: float, hi: float) -> tuple[float, float]:
        """Exact global minimum over [lo, hi] by per-interval candidates."""
        if lo > hi:
            raise ValueError("empty interval")
        edges = [lo] + [float(t) for t in self.breaks if lo < t < hi] + [hi]
        best_t, best_v = lo, math.inf
        for k in range(len(edges) - 1):
            left, right = edges[k], edges[k + 1]
            mid = 0.5 * (left + right)
            idx = int(np.searchsorted(self.breaks, mid, side="left"))
            a, b, c = self.coeffs[idx]
            cands = [left, right]
            if a > 0.0:
                v = -b / (2.0 * a)
                if left < v < right:
                    cands.append(v)
            for t in cands:
                val = float(a * t * t + b * t + c)
                if val < best_v or (val == best_v and t < best_t):
                    best_t, best_v = t, val
        return best_t, best_v


def affine_pieces(slope: float, intercept: float) -> Piecewise1D:
    return Piecewise1D(np.array([]), np.array([[0.0, slope, intercept]]))


def clipped_affine_pieces(slope: float, intercept: float) -> Piecewise1D:
    """max(slope*t + intercept, 0) as a piecewise function."""
    if slope == 0.0:
        return affine_pieces(0.0, max(intercept, 0.0))
    root = -intercept / slope
    zero = [0.0, 0.0, 0.0]
    aff = [0.0, slope, intercept]
    if slope > 0.0:
        return Piecewise1D(np.array([root]), np.array([zero, aff]))
    return Piecewise1D(np.array([root]), np.array([aff, zero]))


def abs_affine_pieces(slope: float, intercept: float) -> Piecewise1D:
    """|slope*t + intercept| as a piecewise function."""
    if slope == 0.0:
        return affine_pieces(0.0, abs(intercept))
    root = -intercept / slope
    pos = [0.0, slope, intercept]
    neg = [0.0, -slope, -intercept]
    if slope > 0.0:
        return Piecewise1D(np.array([root]), np.array([neg, pos]))
    return Piecewise1D(np.array([root]), np.array([pos, neg]))


def _generic_pieces1d(spec: SubproblemSpec) -> Piecewise1D | None:
    obj = spec.objective
    if obj.model_pieces1d is not None:
        return obj.model_pieces1d(spec.family, float(spec.x[0]), spec.atom)
    x0 = float(spec.x[0])
    if spec.family is ModelFamily.SUBGRADIENT:
        g = float(obj.subgrad(spec.x, spec.atom)[0])
        return affine_pieces(g, obj.value(spec.x, spec.atom) - g * x0)
    if spec.family is ModelFamily.CLIPPED:
        g = float(obj.subgrad(spec.x, spec.atom)[0])
        return clipped_affine_pieces(g, obj.value(spec.x, spec.atom) - g * x0)
    return None


def _solve_pieces1d(spec: SubproblemSpec, pieces: Piecewise1D) -> SolveResult:
    box = spec.constraint
    lo, hi = float(box.lows[0]), float(box.highs[0])
    x0 = float(spec.x[0])
    total = pieces.add_quadratic(0.5 * spec.beta, -spec.beta * x0,
                                 0.5 * spec.beta * x0 * x0)
    t, _ = total.minimize(lo, hi)
    return SolveResult(np.array([t]), Certificate(method="piecewise1d"))


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def solve_linear_over_sphere(g, x, beta: float) -> SolveResult:
    """Exact minimizer of ``<g, y> + (beta/2)||y - x||^2`` over the unit sphere.

    The answer is the normalized ``beta*x - g``.  When that direction
    vanishes the objective is constant over the sphere's great circles of
    ambiguity; the basepoint is returned and the event flagged.
    """
    x = as_vector(x)
    g = as_vector(g, x.shape[0])
    w = beta * x - g
    norm = float(np.linalg.norm(w))
    scale = max(abs(beta) * float(np.linalg.norm(x)), float(np.linalg.norm(g)), 1.0)
    if norm <= 1e-15 * scale:
        return SolveResult(x / np.linalg.norm(x),
                           Certificate(method="sphere_closed_form", degenerate=True))
    return SolveResult(w / norm, Certificate(method="sphere_closed_form"))


def _solve_affine_subgradient(spec: SubproblemSpec, plane: AffineSubspace) -> SolveResult:
    g = spec.model_subgrad(spec.x)
    y = plane.project(spec.x - g / spec.beta)
    return SolveResult(y, Certificate(method="affine_closed_form"))


def _solve_affine_clipped(spec: SubproblemSpec, plane: AffineSubspace) -> SolveResult:
    """Exact piecewise solve of a clipped affine model over an affine set.

    Compares the affine-branch prox, the flat-branch prox, and the
    restriction to the kink hyperplane; convexity makes the best of these
    the global minimizer.
    """
    obj = spec.objective
    g = obj.subgrad(spec.x, spec.atom)
    c0 = obj.value(spec.x, spec.atom) - float(g @ spec.x)

    def affine_part(y):
        return float(g @ y) + c0

    candidates = []
    y1 = plane.project(spec.x - g / spec.beta)
    if affine_part(y1) >= 0.0:
        candidates.append(y1)
    y2 = plane.project(spec.x)
    if affine_part(y2) <= 0.0:
        candidates.append(y2)
    B = plane.orthonormal_basis()
    gB = B.T @ g
    gB_norm2 = float(gB @ gB)
    if gB_norm2 > 0.0:
        # prox restricted to the kink {affine = 0} within the plane
        s_star = B.T @ (spec.x - plane.base)
        resid = affine_part(plane.base + B @ s_star)
        s_kink = s_star - (resid / gB_norm2) * gB
        candidates.append(plane.base + B @ s_kink)
    if not candidates:
        candidates.append(y2)
    vals = [spec.total_value(y) for y in candidates]
    return SolveResult(candidates[int(np.argmin(vals))],
                       Certificate(method="affine_clipped_closed_form"))


def solve_model_over_affine(spec: SubproblemSpec) -> SolveResult:
    """Regularized model minimization over an affine subspace."""
    plane = spec.constraint
    if not isinstance(plane, AffineSubspace):
        raise TypeError("constraint must be an AffineSubspace")
    if spec.family is ModelFamily.SUBGRADIENT:
        return _solve_affine_subgradient(spec, plane)
    if spec.family is ModelFamily.CLIPPED:
        return _solve_affine_clipped(spec, plane)
    return solve_generic(spec)


# ---------------------------------------------------------------------------
# Generic certified fallback
# ---------------------------------------------------------------------------

def solve_generic(spec: SubproblemSpec) -> SolveResult:
    """Projected subgradient method on the strongly convex subproblem.

    With modulus ``sigma = beta - eta`` the weighted average of iterates
    satisfies the classical bound ``2 M^2 / (sigma (K + 2))`` where M is the
    largest subgradient norm seen; the solve stops once that certificate
    drops below the requested tolerance and raises :class:`NoConvergence`
    otherwise.
    """
    S = spec.constraint
    sigma = spec.beta - spec.objective.constants.eta
    if sigma <= 0:
        raise ProxSmoothError("need beta > eta for a strongly convex subproblem")
    y = S.project(spec.x)
    avg = np.zeros_like(y)
    wsum = 0.0
    max_gn = 0.0
    bound = math.inf
    for k in range(1, spec.max_iterations + 1):
        g = spec.model_subgrad(y) + spec.beta * (y - spec.x)
        max_gn = max(max_gn, float(np.linalg.norm(g)))
        wsum += k
        avg = avg + (k / wsum) * (y - avg)
        bound = 2.0 * max_gn**2 / (sigma * (k + 1.0))
        if bound <= spec.tol:
            return SolveResult(avg, Certificate(method="projected_subgradient",
                                                bound=bound, iterations=k))
        y = S.project(y - (2.0 / (sigma * (k + 1.0))) * g)
    raise NoConvergence(
        f"certificate {bound:.3g} above tolerance {spec.tol:.3g} "
        f"after {spec.max_iterations} iterations"
    )


# ---------------------------------------------------------------------------
# Convex inner approximations (functional constraints)
# ---------------------------------------------------------------------------

def solve_over_functional_inner(spec: SubproblemSpec) -> SolveResult:
    """Solve over a convex sublevel-set approximation ``{G_x <= 0}``.

    Affine models reduce to minimizing a strongly convex quadratic over the
    sublevel set, handled by dual bisection with exact inner solves.  Other
    families run an outer bisection with certified iterative inner solves,
    which is only practical at loose tolerances.
    """
    S = spec.constraint
    if not isinstance(S, ConvexSublevelSet):
        raise TypeError("constraint must be a ConvexSublevelSet")

    if spec.family is ModelFamily.SUBGRADIENT and S.quadratic is not None:
        g = spec.model_subgrad(spec.x)
        d = spec.objective.dim
        P = spec.beta * np.eye(d)
        q = g - spec.beta * spec.x
        res = minimize_quadratic_over_sublevel(P, q, S.quadratic, tol=spec.tol)
        return SolveResult(res.point, Certificate(
            method="dual_bisection", bound=res.gap_bound,
            iterations=res.iterations, multiplier=res.multiplier))

    return _functional_inner_oracle(spec, S)


def _functional_inner_oracle(spec: SubproblemSpec, S: ConvexSublevelSet) -> SolveResult:
    """Oracle-based dual bisection for non-affine models (loose tolerances)."""
    try:
        S.slater_point()
    except Exception as exc:
        raise NoSlaterPoint(str(exc)) from exc
    d = spec.objective.dim
    sigma = spec.beta - spec.objective.constants.eta
    if sigma <= 0:
        raise ProxSmoothError("need beta > eta for a strongly convex subproblem")
    inner_tol = spec.tol / 10.0

    def inner(lam: float) -> np.ndarray:
        y = spec.x.copy()
        avg = np.zeros_like(y)
        wsum = 0.0
        max_gn = 0.0
        for k in range(1, spec.max_iterations + 1):
            g = (spec.model_subgrad(y) + spec.beta * (y - spec.x)
                 + lam * S.constraint_subgrad(y))
            max_gn = max(max_gn, float(np.linalg.norm(g)))
            wsum += k
            avg = avg + (k / wsum) * (y - avg)
            if 2.0 * max_gn**2 / (sigma * (k + 1.0)) <= inner_tol:
                return avg
            y = y - (2.0 / (sigma * (k + 1.0))) * g
        raise NoConvergence("inner solve missed its certificate")

    y0 = inner(0.0)
    if S.constraint_value(y0) <= 0.0:
        return SolveResult(y0, Certificate(method="dual_bisection_oracle",
                                           bound=inner_tol, multiplier=0.0))
    lo, hi = 0.0, 1.0
    while S.constraint_value(inner(hi)) > 0.0:
        lo = hi
        hi *= 10.0
        if hi > 1e12:
            raise NoConvergence("dual multiplier bracket exceeded 1e12")
    best, best_lam = inner(hi), hi
    for _ in range(200):
        gv = S.constraint_value(best)
        if best_lam * abs(gv) <= spec.tol and gv <= 0.0:
            break
        mid = 0.5 * (lo + hi)
        y = inner(mid)
        if S.constraint_value(y) > 0.0:
            lo = mid
        else:
            hi, best, best_lam = mid, y, mid
    gv = S.constraint_value(best)
    gap = best_lam * abs(gv) + inner_tol
    if gap > 10 * spec.tol:
        raise NoConvergence(f"duality gap bound {gap:.3g} above tolerance")
    return SolveResult(best, Certificate(method="dual_bisection_oracle",
                                         bound=gap, multiplier=best_lam))


# ---------------------------------------------------------------------------
# Dispatcher and movement recording
# ---------------------------------------------------------------------------

class _Recorder:
    """Collects ``beta * ||x - solution||`` margins while enabled."""

    def __init__(self):
        self.active = False
        self.entries: list[dict] = []

    def record(self, spec: SubproblemSpec, result: SolveResult) -> None:
        if not self.active:
            return
        move = spec.beta * float(np.linalg.norm(spec.x - result.x))
        self.entries.append({
            "beta": spec.beta,
            "move": move,
            "two_L": 2.0 * spec.objective.constants.L,
            "base_feasible": spec.constraint.contains(spec.x, 1e-7),
            "tol": spec.tol,
            "method": result.certificate.method,
        })


_RECORDER = _Recorder()


@contextlib.contextmanager
def recording_solves():
    """Context manager enabling the global movement recorder."""
    _RECORDER.active = True
    _RECORDER.entries = []
    try:
        yield _RECORDER.entries
    finally:
        _RECORDER.active = False


def solve_subproblem(objective: StochasticObjective, family, x, atom,
                     constraint, beta: float, tol: float = DEFAULT_TOL,
                     max_iterations: int = DEFAULT_MAX_ITER) -> SolveResult:
    """Route one subproblem to the sharpest applicable solver."""
    family = ModelFamily.parse(family)
    x = as_vector(x, objective.dim)
    spec = SubproblemSpec(objective, family, x, atom, constraint, float(beta),
                          tol, max_iterations)
    result = _dispatch(spec)
    _RECORDER.record(spec, result)
    return result


def _dispatch(spec: SubproblemSpec) -> SolveResult:
    S = spec.constraint
    obj = spec.objective

    if isinstance(S, UnitSphere):
        if spec.family is ModelFamily.SUBGRADIENT:
            g = obj.subgrad(spec.x, spec.atom)
            return solve_linear_over_sphere(g, spec.x, spec.beta)
        solver = getattr(obj, "sphere_solver", None)
        if solver is not None:
            return solver(spec)
        raise ProxSmoothError(
            f"no solver for family {spec.family.value!r} over the unit sphere"
        )

    if isinstance(S, AffineSubspace):
        return solve_model_over_affine(spec)

    if isinstance(S, Box) and obj.dim == 1:
        pieces = _generic_pieces1d(spec)
        if pieces is not None:
            return _solve_pieces1d(spec, pieces)

    if isinstance(S, ConvexSublevelSet):
        return solve_over_functional_inner(spec)

    if spec.family is ModelFamily.SUBGRADIENT and math.isinf(S.proximal_radius):
        g = spec.model_subgrad(spec.x)
        y = S.project(spec.x - g / spec.beta)
        return SolveResult(y, Certificate(method="projection_closed_form"))

    if math.isinf(S.proximal_radius):
        return solve_generic(spec)

    raise ProxSmoothError(
        f"no solver available for family {spec.family.value!r} "
        f"over set kind {S.kind!r}"
    )
