"""Per-basepoint constraint-set approximations and their retractions.

Three kinds are provided.  ``Identity`` keeps the original set with the
identity retraction.  ``TangentSphere`` replaces the unit sphere by the
translated tangent plane at the basepoint and retracts radially.
``FunctionalInner`` replaces a sublevel-set constraint ``g <= 0`` by a
convex inner approximation built from a two-sided model of g, so the
identity retraction restores nothing and feasibility is automatic.

Every kind declares parameters ``(R, tau1, r1, tau2, r2)``: R is the
proximal-smoothness radius of the approximating sets, (tau1, r1) quantify
how far true feasible points near the basepoint can be from the
approximation, and (tau2, r2) quantify the retraction's deviation from the
identity.  The ``check_condition_*`` routines verify both bounds by
sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InfeasibleBasepoint, OutsideApprox, OutsideRadius
from .geometry import (
    AffineSubspace,
    ConvexSublevelSet,
    MaxQuadratics,
    ProxSmoothSet,
    UnitSphere,
    as_vector,
)

BASEPOINT_TOL = 1e-9


@dataclass(frozen=True)
class ApproxParams:
    """Declared approximation parameters; ``inf`` radii mean "global"."""

    R: float
    tau1: float
    r1: float
    tau2: float
    r2: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError("tau parameters must be nonnegative")
        if not self.r1 > 0 or not self.r2 > 0:
            raise ValueError("radii must be positive")

    def effective_r1(self) -> float:
        """r1 capped below R; shrinking r1 only weakens the accuracy claim."""
        if math.isinf(self.R):
            return self.r1
        return min(self.r1, 0.5 * self.R)

    def nu(self) -> float:
        """Curvature factor ``R / (2 (R - r1)^2)`` entering the schedules."""
        if math.isinf(self.R):
            return 0.0
        r1 = self.effective_r1()
        return self.R / (2.0 * (self.R - r1) ** 2)


class SetApproximation:
    """Base class: a family ``x -> (X_x, R_x)`` indexed by feasible basepoints."""

    kind = "abstract"

    def __init__(self, base_set: ProxSmoothSet, params: ApproxParams):
        self.base_set = base_set
        self.params = params

    def build(self, x) -> tuple[object, Callable[[np.ndarray], np.ndarray]]:
        """Return the local set ``X_x`` and the retraction map back to X."""
        raise NotImplementedError

    def approx_contains(self, x, y, tol: float = BASEPOINT_TOL) -> bool:
        raise NotImplementedError

    def retract_point(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def approx_distance(self, x, y) -> float:
        """dist(y, X_x); exact for the kinds shipped here."""
        raise NotImplementedError

    def _check_basepoint(self, x) -> np.ndarray:
        x = as_vector(x, self.base_set.dim)
        if not self.base_set.contains(x, BASEPOINT_TOL):
            raise InfeasibleBasepoint("basepoint is not in the constraint set")
        return x


class IdentityApprox(SetApproximation):
    """``X_x = X`` with the identity retraction; exact, never shrinks."""

    kind = "identity"

    def __init__(self, base_set: ProxSmoothSet):
        params = ApproxParams(R=base_set.proximal_radius, tau1=0.0, r1=math.inf,
                              tau2=0.0, r2=math.inf)
        super().__init__(base_set, params)

    def build(self, x):
        self._check_basepoint(x)
        return self.base_set, lambda y: as_vector(y, self.base_set.dim)

    def approx_contains(self, x, y, tol: float = BASEPOINT_TOL) -> bool:
        return self.base_set.contains(y, tol)

    def retract_point(self, x, y) -> np.ndarray:
        return as_vector(y, self.base_set.dim)

    def approx_distance(self, x, y) -> float:
        return self.base_set.distance(y)


class TangentSphereApprox(SetApproximation):
    """Translated tangent plane of the unit sphere with radial retraction.

    On the unit sphere the accuracy bound holds with equality:
    dist(y, x + T_x) = 1 - <x, y> = ||x - y||^2 / 2 for unit x, y, so
    tau1 = 1; the radial retraction satisfies
    ||y|| - 1 <= ||y - x||^2 / 2 on the whole plane, so tau2 = 1, r2 = inf.
    The declared R matches the sphere's own reach.
    """

    kind = "tangent"

    def __init__(self, sphere: UnitSphere, r1: float = 0.5):
        if not isinstance(sphere, UnitSphere):
            raise TypeError("tangent-plane approximation requires a UnitSphere")
        params = ApproxParams(R=1.0, tau1=1.0, r1=r1, tau2=1.0, r2=math.inf)
        super().__init__(sphere, params)

    def build(self, x):
        x = self._check_basepoint(x)
        plane = AffineSubspace.from_normals(x, x / np.linalg.norm(x))
        return plane, lambda y: self.retract_point(x, y)

    def approx_contains(self, x, y, tol: float = BASEPOINT_TOL) -> bool:
        return self.approx_distance(x, y) <= tol

    def approx_distance(self, x, y) -> float:
        x = as_vector(x, self.base_set.dim)
        y = as_vector(y, self.base_set.dim)
        n = x / np.linalg.norm(x)
        return abs(float(n @ (y - x)))

    def retract_point(self, x, y) -> np.ndarray:
        y = as_vector(y, self.base_set.dim)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            raise OutsideApprox("cannot retract the origin radially")
        return y / norm


class FunctionalInnerApprox(SetApproximation):
    """Convex inner approximations of ``X = {g_i <= 0 for all i}``.

    ``mode="exact"`` uses the constraints themselves as the two-sided model,
    giving ``X_x = {y : g_i(y) + gamma ||y - x||^2 <= 0}``; ``mode="linear"``
    uses gradient linearizations, giving
    ``X_x = {y : g_i(x) + <grad g_i(x), y - x> + (gamma/2)||y - x||^2 <= 0}``.
    Both are subsets of X for every feasible basepoint, so the retraction is
    the identity.  ``gamma`` is the two-sided model constant
    (|g_x - g| <= (gamma/2) ||. - x||^2); tau1 and r1 are calibrated per
    problem and re-verified by :func:`check_condition_i`.
    """

    kind_by_mode = {"exact": "inner-exact", "linear": "inner-linear"}

    def __init__(self, base_set: ProxSmoothSet, constraints: MaxQuadratics,
                 gamma: float, mode: str, tau1: float, r1: float):
        if mode not in ("exact", "linear"):
            raise ValueError("mode must be 'exact' or 'linear'")
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        params = ApproxParams(R=math.inf, tau1=tau1, r1=r1, tau2=0.0, r2=math.inf)
        super().__init__(base_set, params)
        self.constraints = constraints
        self.gamma = float(gamma)
        self.mode = mode
        self.kind = self.kind_by_mode[mode]

    def _pieces_at(self, x: np.ndarray) -> MaxQuadratics:
        mq = self.constraints
        coeff = self.gamma if self.mode == "exact" else 0.5 * self.gamma
        pieces = []
        for A, b, c in zip(mq.mats, mq.vecs, mq.consts):
            if self.mode == "exact":
                A2 = A + 2.0 * coeff * np.eye(mq.dim)
                b2 = b - 2.0 * coeff * x
                c2 = c + coeff * float(x @ x)
            else:
                grad = A @ x + b
                val = 0.5 * x @ A @ x + b @ x + c
                A2 = 2.0 * coeff * np.eye(mq.dim)
                b2 = grad - 2.0 * coeff * x
                c2 = float(val - grad @ x + coeff * (x @ x))
            pieces.append((A2, b2, c2))
        return MaxQuadratics.from_pieces(pieces)

    def model_value(self, x, y) -> float:
        """Two-sided model g_x(y) of the max-constraint g."""
        x = as_vector(x, self.base_set.dim)
        y = as_vector(y, self.base_set.dim)
        if self.mode == "exact":
            return self.constraints.value(y) + 0.5 * self.gamma * float((y - x) @ (y - x))
        vals = [0.5 * x @ A @ x + b @ x + c + (A @ x + b) @ (y - x)
                for A, b, c in zip(self.constraints.mats, self.constraints.vecs,
                                   self.constraints.consts)]
        return float(np.max(vals))

    def build(self, x):
        x = self._check_basepoint(x)
        quad = self._pieces_at(x)
        feasible = x if quad.value(x) < 0 else None
        local = ConvexSublevelSet(self.base_set.dim, quadratic=quad,
                                  feasible_point=feasible)
        return local, lambda y: as_vector(y, self.base_set.dim)

    def approx_contains(self, x, y, tol: float = BASEPOINT_TOL) -> bool:
        x = as_vector(x, self.base_set.dim)
        return self._pieces_at(x).value(as_vector(y, self.base_set.dim)) <= tol

    def approx_distance(self, x, y) -> float:
        x = as_vector(x, self.base_set.dim)
        y = as_vector(y, self.base_set.dim)
        quad = self._pieces_at(x)
        if quad.value(y) <= 0.0:
            return 0.0
        local = ConvexSublevelSet(self.base_set.dim, quadratic=quad)
        return float(np.linalg.norm(y - local.project(y)))

    def retract_point(self, x, y) -> np.ndarray:
        return as_vector(y, self.base_set.dim)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def build_approx(approx: SetApproximation, x):
    """Materialize ``(X_x, R_x)`` at a feasible basepoint."""
    return approx.build(x)


def retract(approx: SetApproximation, x, y) -> np.ndarray:
    """Apply the retraction after validating its preconditions.

    Raises :class:`OutsideApprox` when y is not in X_x (within 1e-9) and
    :class:`OutsideRadius` when ||y - x|| exceeds the declared r2.
    """
    x = as_vector(x, approx.base_set.dim)
    y = as_vector(y, approx.base_set.dim)
    if not approx.approx_contains(x, y, BASEPOINT_TOL):
        raise OutsideApprox("point is not in the local approximation set")
    if float(np.linalg.norm(y - x)) > approx.params.r2:
        raise OutsideRadius("point lies outside the declared retraction radius")
    return approx.retract_point(x, y)


def _sample_ball(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    d = center.shape[0]
    v = rng.standard_normal(d)
    n = float(np.linalg.norm(v))
    while n == 0.0:
        v = rng.standard_normal(d)
        n = float(np.linalg.norm(v))
    r = radius * rng.random() ** (1.0 / d)
    return center + (r / n) * v


def sample_feasible_near(base_set: ProxSmoothSet, x: np.ndarray, radius: float,
                         n: int, rng: np.random.Generator,
                         max_rejections: int = 100) -> list[np.ndarray]:
    """Points of ``X ∩ B(x, radius)`` by rejection, projecting as a fallback.

    After ``max_rejections`` consecutive misses the sampler projects ball
    samples onto the set instead (needed for measure-zero sets such as
    spheres) and keeps those landing inside the ball.
    """
    out: list[np.ndarray] = []
    rejections = 0
    project_mode = False
    while len(out) < n:
        z = _sample_ball(rng, x, radius)
        if not project_mode:
            if base_set.contains(z, 0.0):
                out.append(z)
                rejections = 0
            else:
                rejections += 1
                if rejections >= max_rejections:
                    project_mode = True
            continue
        y = base_set.project(z)
        if float(np.linalg.norm(y - x)) <= radius:
            out.append(y)
    return out


def check_condition_i(approx: SetApproximation, x, samples: int,
                      rng: np.random.Generator,
                      dist_fn: Callable[[np.ndarray], float] | None = None,
                      sample_radius: float | None = None) -> float:
    """Max of ``dist(y, X_x) - (tau1/2)||x - y||^2`` over sampled feasible y.

    Sampling covers ``X ∩ B(x, r1)``; a nonpositive return certifies the
    declared (tau1, r1) on the sample.  ``dist_fn`` overrides the distance
    oracle (used to cross-check with independent grid-based oracles).
    """
    x = approx._check_basepoint(x)
    r1 = approx.params.r1 if sample_radius is None else sample_radius
    if math.isinf(r1):
        r1 = 1.0
    tau1 = approx.params.tau1
    worst = -math.inf
    for y in sample_feasible_near(approx.base_set, x, r1, samples, rng):
        if dist_fn is not None:
            dist = float(dist_fn(y))
        else:
            dist = approx.approx_distance(x, y)
        gap = dist - 0.5 * tau1 * float((x - y) @ (x - y))
        worst = max(worst, gap)
    return worst


def _sample_approx_near(approx: SetApproximation, x: np.ndarray, radius: float,
                        n: int, rng: np.random.Generator) -> list[np.ndarray]:
    if isinstance(approx, IdentityApprox):
        return sample_feasible_near(approx.base_set, x, radius, n, rng)
    if isinstance(approx, TangentSphereApprox):
        d = approx.base_set.dim
        nvec = x / np.linalg.norm(x)
        out = []
        for _ in range(n):
            v = rng.standard_normal(d)
            v -= (v @ nvec) * nvec
            norm = float(np.linalg.norm(v))
            while norm == 0.0:
                v = rng.standard_normal(d)
                v -= (v @ nvec) * nvec
                norm = float(np.linalg.norm(v))
            t = radius * rng.random() ** (1.0 / max(d - 1, 1))
            out.append(x + (t / norm) * v)
        return out
    # functional inner: rejection inside the convex sublevel set
    out = []
    while len(out) < n:
        z = _sample_ball(rng, x, radius)
        if approx.approx_contains(x, z, 0.0):
            out.append(z)
    return out


def check_condition_ii(approx: SetApproximation, x, samples: int,
                       rng: np.random.Generator,
                       sample_radius: float = 1.0) -> float:
    """Max of ``||y - R_x(y)|| - (tau2/2)||x - y||^2`` over sampled y in X_x."""
    x = approx._check_basepoint(x)
    radius = min(approx.params.r2, sample_radius)
    tau2 = approx.params.tau2
    worst = -math.inf
    for y in _sample_approx_near(approx, x, radius, samples, rng):
        moved = float(np.linalg.norm(y - approx.retract_point(x, y)))
        gap = moved - 0.5 * tau2 * float((x - y) @ (x - y))
        worst = max(worst, gap)
    return worst


def check_inner_containment(approx: FunctionalInnerApprox, x, samples: int,
                            rng: np.random.Generator,
                            sample_radius: float = 1.0) -> float:
    """Max raw-constraint value over sampled points of X_x; <= 0 certifies
    X_x ⊆ X on the sample."""
    x = approx._check_basepoint(x)
    worst = -math.inf
    for y in _sample_approx_near(approx, x, sample_radius, samples, rng):
        worst = max(worst, approx.constraints.value(y))
    return worst


def check_two_sided_model(approx: FunctionalInnerApprox, x, samples: int,
                          rng: np.random.Generator,
                          sample_radius: float = 1.0) -> float:
    """Max of ``|g_x(y) - g(y)| - (gamma/2)||y - x||^2`` over sampled y."""
    x = approx._check_basepoint(x)
    worst = -math.inf
    for _ in range(samples):
        y = _sample_ball(rng, x, sample_radius)
        err = abs(approx.model_value(x, y) - approx.constraints.value(y))
        worst = max(worst, err - 0.5 * approx.gamma * float((y - x) @ (y - x)))
    return worst
