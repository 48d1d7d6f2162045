"""Proximally smooth sets with exact projection oracles.

A set here is an object with a dimension, a declared proximal-smoothness
radius ``proximal_radius`` (``inf`` for convex sets), and deterministic
``project`` / ``distance`` / ``contains`` operations.  Projections are exact
up to floating point except for :class:`ConvexSublevelSet`, whose projector
is a dual bisection certified to a requested tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfeasibleSet, NoConvergence, OutsideTube, ZeroVector

DEFAULT_CONTAINS_TOL = 1e-9


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 array, optionally checking length."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {v.shape[0]}")
    return v


class ProxSmoothSet:
    """Base class: a closed set with projection and distance oracles.

    ``proximal_radius`` is the declared radius R on whose open tube the
    nearest-point projection is single valued.  Convex sets declare ``inf``.
    All concrete sets are immutable and their operations are pure.
    """

    kind = "abstract"

    def __init__(self, dim: int, proximal_radius: float):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        if not proximal_radius > 0:
            raise ValueError("proximal radius must be positive")
        self.dim = int(dim)
        self.proximal_radius = float(proximal_radius)

    def project(self, y) -> np.ndarray:
        raise NotImplementedError

    def distance(self, y) -> float:
        y = as_vector(y, self.dim)
        if self.contains(y):
            return 0.0
        return float(np.linalg.norm(y - self.project(y)))

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        raise NotImplementedError

    def _check_tube(self, y: np.ndarray, dist: float) -> None:
        if math.isfinite(self.proximal_radius) and dist >= self.proximal_radius:
            raise OutsideTube(
                f"dist(y, X) = {dist:.6g} >= R = {self.proximal_radius:.6g}; "
                "projection is only certified single-valued inside the tube"
            )


class Box(ProxSmoothSet):
    """Axis-aligned box ``prod_i [lo_i, hi_i]``; convex, projection by clamping."""

    kind = "Box"

    def __init__(self, lows, highs):
        lows = as_vector(lows)
        highs = as_vector(highs, lows.shape[0])
        if np.any(lows > highs):
            raise ValueError("box bounds must satisfy lo <= hi")
        super().__init__(lows.shape[0], math.inf)
        self.lows = lows
        self.highs = highs

    def project(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        return np.clip(y, self.lows, self.highs)

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        y = as_vector(y, self.dim)
        return bool(np.all(y >= self.lows - tol) and np.all(y <= self.highs + tol))


def interval(lo: float, hi: float) -> Box:
    """One-dimensional box, the common constraint set in scalar experiments."""
    return Box([lo], [hi])


class Ball(ProxSmoothSet):
    """Closed Euclidean ball; convex, projection by radial shrinkage."""

    kind = "Ball"

    def __init__(self, center, radius: float):
        center = as_vector(center)
        if not radius > 0:
            raise ValueError("radius must be positive")
        super().__init__(center.shape[0], math.inf)
        self.center = center
        self.radius = float(radius)

    def project(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        delta = y - self.center
        norm = float(np.linalg.norm(delta))
        if norm <= self.radius:
            return y.copy()
        return self.center + delta * (self.radius / norm)

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        y = as_vector(y, self.dim)
        return float(np.linalg.norm(y - self.center)) <= self.radius + tol


class UnitSphere(ProxSmoothSet):
    """Unit sphere ``{x : ||x|| = 1}``; declared proximal radius 1.

    The projection is radial scaling and is raised as an error outside the
    single-valued tube ``0 < ||y|| < 2`` rather than silently tie-broken.
    """

    kind = "UnitSphere"

    def __init__(self, dim: int):
        super().__init__(dim, 1.0)

    def project(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            raise ZeroVector("cannot project the origin onto the unit sphere")
        self._check_tube(y, abs(norm - 1.0))
        return y / norm

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        y = as_vector(y, self.dim)
        return abs(float(np.linalg.norm(y)) - 1.0) <= tol

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(self.dim)
        n = float(np.linalg.norm(v))
        while n == 0.0:
            v = rng.standard_normal(self.dim)
            n = float(np.linalg.norm(v))
        return v / n

    def tangent_projector(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        return np.eye(self.dim) - np.outer(x, x) / float(x @ x)


class AffineSubspace(ProxSmoothSet):
    """Affine subspace ``base + span(basis)``; convex, exact projection.

    Either an orthonormal basis of the subspace or an orthonormal basis of
    its normal complement may be supplied; the latter is cheaper for
    codimension-one tangent planes.
    """

    kind = "AffineSubspace"

    def __init__(self, base, basis: Sequence | np.ndarray):
        base = as_vector(base)
        B = np.asarray(basis, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != base.shape[0]:
            raise ValueError("basis rows must match the ambient dimension")
        _check_orthonormal(B)
        super().__init__(base.shape[0], math.inf)
        self.base = base
        self.basis = B
        self._normals = None

    @classmethod
    def from_normals(cls, base, normals) -> "AffineSubspace":
        base = as_vector(base)
        N = np.asarray(normals, dtype=float)
        if N.ndim == 1:
            N = N.reshape(-1, 1)
        N = N / np.linalg.norm(N, axis=0, keepdims=True)
        _check_orthonormal(N)
        obj = cls.__new__(cls)
        ProxSmoothSet.__init__(obj, base.shape[0], math.inf)
        obj.base = base
        obj.basis = None
        obj._normals = N
        return obj

    def project(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        delta = y - self.base
        if self._normals is not None:
            N = self._normals
            return y - N @ (N.T @ delta)
        B = self.basis
        return self.base + B @ (B.T @ delta)

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        y = as_vector(y, self.dim)
        return float(np.linalg.norm(y - self.project(y))) <= tol

    def orthonormal_basis(self) -> np.ndarray:
        """Orthonormal basis of the subspace (computed from normals if needed)."""
        if self.basis is not None:
            return self.basis
        N = self._normals
        # null space of N^T via SVD; deterministic for fixed input
        u, s, _ = np.linalg.svd(np.eye(self.dim) - N @ N.T)
        rank = int(np.sum(s > 1e-12))
        return u[:, :rank]


def _check_orthonormal(B: np.ndarray, tol: float = 1e-12) -> None:
    gram = B.T @ B
    if not np.allclose(gram, np.eye(B.shape[1]), atol=tol):
        raise ValueError("columns must be pairwise orthonormal within 1e-12")


# ---------------------------------------------------------------------------
# Convex piecewise-quadratic machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaxQuadratics:
    """``G(y) = max_i (1/2) y'A_i y + b_i'y + c_i`` with convex pieces.

    Used both as a constraint-function oracle and as exactly solvable
    structure inside dual bisections.  Subgradient ties resolve to the
    lowest active index so evaluations are deterministic.
    """

    mats: tuple  # tuple of (d, d) symmetric PSD arrays
    vecs: tuple  # tuple of (d,) arrays
    consts: tuple  # tuple of floats

    @classmethod
    def from_pieces(cls, pieces) -> "MaxQuadratics":
        mats, vecs, consts = [], [], []
        for A, b, c in pieces:
            A = np.asarray(A, dtype=float)
            b = as_vector(b)
            mats.append(0.5 * (A + A.T))
            vecs.append(b)
            consts.append(float(c))
        return cls(tuple(mats), tuple(vecs), tuple(consts))

    @property
    def n_pieces(self) -> int:
        return len(self.mats)

    @property
    def dim(self) -> int:
        return self.vecs[0].shape[0]

    def piece_values(self, y: np.ndarray) -> np.ndarray:
        return np.array(
            [0.5 * y @ A @ y + b @ y + c
             for A, b, c in zip(self.mats, self.vecs, self.consts)]
        )

    def value(self, y) -> float:
        return float(np.max(self.piece_values(as_vector(y, self.dim))))

    def subgrad(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        idx = int(np.argmax(self.piece_values(y)))
        return self.mats[idx] @ y + self.vecs[idx]

    def unconstrained_min(self) -> tuple[np.ndarray, float]:
        """Exact global minimizer of the max, assuming coercive pieces."""
        y = minimize_quadratic_plus_maxquad(np.zeros((self.dim, self.dim)),
                                            np.zeros(self.dim), 1.0, self)
        return y, self.value(y)


def _solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return np.linalg.solve(M, rhs)


class _LostConvexity(NoConvergence):
    """Multiplier pushed a weakly convex piece past strong convexity."""


def _tie_curve_candidates(P, q, lam, mq: MaxQuadratics, i: int, j: int):
    """Minimizers of the quadratic-plus-piece objective on ``{q_i = q_j}``.

    Handles two structures exactly: an affine tie set, and a tie set that is
    the graph of a univariate quadratic (one squared coordinate absent).
    Returns a list of candidate points (possibly empty if unsupported).
    """
    d = mq.dim
    Ad = mq.mats[i] - mq.mats[j]
    bd = mq.vecs[i] - mq.vecs[j]
    cd = mq.consts[i] - mq.consts[j]
    Pi = P + lam * mq.mats[i]
    qi = q + lam * mq.vecs[i]

    if np.max(np.abs(Ad)) <= 1e-14 * max(1.0, np.max(np.abs(bd))):
        # affine tie set {bd'y + cd = 0}
        nb = float(bd @ bd)
        if nb == 0.0:
            return []
        y0 = -cd * bd / nb
        # minimize over the affine set via KKT: (Pi)y + qi = mu*bd, bd'y = -cd
        M = np.zeros((d + 1, d + 1))
        M[:d, :d] = Pi
        M[:d, d] = -bd
        M[d, :d] = bd
        rhs = np.concatenate([-qi, [-cd]])
        try:
            sol = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            return []
        return [sol[:d]]

    if d != 2:
        return []

    for free, dep in ((0, 1), (1, 0)):
        # need q_i - q_j solvable as y_dep = poly2(y_free)
        if abs(Ad[dep, dep]) > 1e-14 or abs(Ad[0, 1]) > 1e-14:
            continue
        if abs(bd[dep]) <= 1e-14:
            continue
        # y_dep = -(0.5*Ad[free,free]*t^2 + bd[free]*t + cd) / bd[dep]
        p_dep = np.poly1d([-0.5 * Ad[free, free] / bd[dep],
                           -bd[free] / bd[dep],
                           -cd / bd[dep]])
        t = np.poly1d([1.0, 0.0])
        coords = [None, None]
        coords[free] = t
        coords[dep] = p_dep
        obj = (0.5 * (float(Pi[0, 0]) * coords[0] ** 2
                      + 2.0 * float(Pi[0, 1]) * coords[0] * coords[1]
                      + float(Pi[1, 1]) * coords[1] ** 2)
               + float(qi[0]) * coords[0] + float(qi[1]) * coords[1])
        deriv = obj.deriv()
        roots = deriv.roots
        cands = []
        d2 = deriv.deriv()
        for r in roots:
            if abs(r.imag) > 1e-9 * max(1.0, abs(r.real)):
                continue
            tt = float(r.real)
            # Newton polish on the derivative for full precision
            for _ in range(3):
                dd = float(d2(tt))
                if dd == 0.0:
                    break
                tt -= float(deriv(tt)) / dd
            y = np.array([0.0, 0.0])
            y[free] = tt
            y[dep] = float(p_dep(tt))
            cands.append(y)
        return cands
    return []


def minimize_quadratic_plus_maxquad(P, q, lam: float, mq: MaxQuadratics) -> np.ndarray:
    """Exact minimizer of ``1/2 y'Py + q'y + lam * G(y)`` for max-quadratic G.

    Requires the per-piece matrices ``P + lam*A_i`` to be positive definite.
    Enumerates smooth-piece stationary points and tie-set minimizers and
    returns the candidate with the smallest true objective.
    """
    P = np.asarray(P, dtype=float)
    q = as_vector(q)
    candidates = []
    for i in range(mq.n_pieces):
        M = P + lam * mq.mats[i]
        # weakly convex pieces can turn indefinite for large multipliers;
        # only strongly convex cases admit the candidate enumeration
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise _LostConvexity(
                "piecewise-quadratic subproblem lost strong convexity"
            ) from None
        candidates.append(_solve_spd(M, -(q + lam * mq.vecs[i])))
    if mq.n_pieces > 1:
        for i in range(mq.n_pieces):
            for j in range(i + 1, mq.n_pieces):
                candidates.extend(_tie_curve_candidates(P, q, lam, mq, i, j))
    if not candidates:
        raise NoConvergence("no candidate minimizer for piecewise quadratic")

    def total(y):
        return 0.5 * y @ P @ y + q @ y + lam * mq.value(y)

    vals = [total(y) for y in candidates]
    return candidates[int(np.argmin(vals))]


@dataclass
class DualBisectionResult:
    point: np.ndarray
    multiplier: float
    constraint_value: float
    gap_bound: float
    iterations: int


def minimize_quadratic_over_sublevel(
    P,
    q,
    mq: MaxQuadratics,
    tol: float = 1e-10,
    max_iterations: int = 400,
) -> DualBisectionResult:
    """Minimize ``1/2 y'Py + q'y`` over ``{G <= 0}`` by dual bisection.

    The inner Lagrangian minimizations are exact, so the returned point is
    feasible (``G <= 0``) with duality-gap bound ``lam * |G|`` at most
    ``tol``.  Raises :class:`InfeasibleSet` when G has positive minimum and
    :class:`NoConvergence` when the multiplier bracket cannot be closed.
    """
    P = np.asarray(P, dtype=float)
    q = as_vector(q)

    def inner(lam: float) -> np.ndarray:
        return minimize_quadratic_plus_maxquad(P, q, lam, mq)

    y0 = inner(0.0)
    g0 = mq.value(y0)
    if g0 <= 0.0:
        return DualBisectionResult(y0, 0.0, g0, 0.0, 0)

    lo = 0.0
    hi = 1.0
    iters = 0
    shrink_attempts = 0
    while True:
        try:
            y_hi = inner(hi)
        except _LostConvexity:
            # retreat toward the last good multiplier; valid optima of
            # weakly convex constraints sit below the convexity threshold
            shrink_attempts += 1
            if shrink_attempts > 200 or hi - lo <= 1e-12 * max(1.0, hi):
                raise NoConvergence(
                    "dual bisection lost convexity before closing the bracket"
                ) from None
            hi = 0.5 * (lo + hi)
            continue
        iters += 1
        if mq.value(y_hi) <= 0.0:
            break
        lo = hi
        hi *= 10.0
        if hi > 1e12:
            try:
                _, gmin = mq.unconstrained_min()
            except NoConvergence:
                gmin = -math.inf
            if gmin > 0.0:
                raise InfeasibleSet(
                    f"constraint has positive minimum {gmin:.6g}; sublevel set empty"
                )
            raise NoConvergence("dual multiplier bracket exceeded 1e12")

    # Bisect until the multiplier bracket collapses to relative machine
    # precision; with exact inner solves the primal point is then accurate
    # far beyond the requested duality-gap tolerance.
    best = y_hi
    best_lam = hi
    for _ in range(max_iterations):
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        y_mid = inner(mid)
        iters += 1
        if mq.value(y_mid) > 0.0:
            lo = mid
        else:
            hi = mid
            best = y_mid
            best_lam = mid
    gv = mq.value(best)
    gap = best_lam * abs(gv)
    if gap > tol:
        raise NoConvergence(
            f"dual bisection stalled with gap bound {gap:.3g} > tol {tol:.3g}"
        )
    return DualBisectionResult(best, best_lam, gv, gap, iters)


# ---------------------------------------------------------------------------
# Sublevel sets of convex functions
# ---------------------------------------------------------------------------

class ConvexSublevelSet(ProxSmoothSet):
    """``{y : G(y) <= 0}`` for a convex G with a subgradient oracle.

    When the function carries :class:`MaxQuadratics` structure, projections
    are computed by dual bisection with exact inner solves; otherwise an
    iterative inner solver with an a-posteriori certificate is used.
    A strictly feasible point may be supplied to certify nonemptiness.
    """

    kind = "ConvexSublevelSet"

    def __init__(
        self,
        dim: int,
        value_fn: Callable[[np.ndarray], float] | None = None,
        subgrad_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        quadratic: MaxQuadratics | None = None,
        feasible_point=None,
        tol: float = 1e-10,
    ):
        super().__init__(dim, math.inf)
        if quadratic is None and (value_fn is None or subgrad_fn is None):
            raise ValueError("need either value/subgradient oracles or quadratic structure")
        self.quadratic = quadratic
        self._value_fn = value_fn
        self._subgrad_fn = subgrad_fn
        self.feasible_point = None if feasible_point is None else as_vector(feasible_point, dim)
        self.tol = float(tol)

    def constraint_value(self, y) -> float:
        y = as_vector(y, self.dim)
        if self.quadratic is not None:
            return self.quadratic.value(y)
        return float(self._value_fn(y))

    def constraint_subgrad(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        if self.quadratic is not None:
            return self.quadratic.subgrad(y)
        return as_vector(self._subgrad_fn(y), self.dim)

    def contains(self, y, tol: float = DEFAULT_CONTAINS_TOL) -> bool:
        return self.constraint_value(y) <= tol

    def project(self, y) -> np.ndarray:
        y = as_vector(y, self.dim)
        if self.constraint_value(y) <= 0.0:
            return y.copy()
        return project_sublevel(self, y, self.tol)

    def slater_point(self) -> np.ndarray:
        """A strictly feasible point, computed from structure if not supplied."""
        if self.feasible_point is not None and self.constraint_value(self.feasible_point) < 0:
            return self.feasible_point
        if self.quadratic is not None:
            y, gmin = self.quadratic.unconstrained_min()
            if gmin < 0.0:
                return y
            raise InfeasibleSet("constraint minimum is nonnegative; no Slater point")
        raise InfeasibleSet("no strictly feasible point available")


def project_sublevel(G, z, tol: float = 1e-10) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{G <= 0}`` for convex ``G``.

    Implemented as bisection on the multiplier of
    ``min 1/2||y - z||^2  s.t.  G(y) <= 0``; inner minimizations are solved
    to a tolerance well below ``tol`` (exactly, for max-quadratic G).
    Returns a point ``p`` with ``G(p) <= tol`` and
    ``||p - z|| <= dist(z, [G <= 0]) + tol``.
    """
    if isinstance(G, ConvexSublevelSet):
        if G.quadratic is not None:
            G_struct = G.quadratic
        else:
            return _project_sublevel_oracle(G.constraint_value, G.constraint_subgrad,
                                            z, tol, G.feasible_point)
    elif isinstance(G, MaxQuadratics):
        G_struct = G
    else:
        raise TypeError("G must be a ConvexSublevelSet or MaxQuadratics")

    z = as_vector(z, G_struct.dim)
    d = z.shape[0]
    res = minimize_quadratic_over_sublevel(np.eye(d), -z, G_struct, tol=tol)
    return res.point


def _project_sublevel_oracle(value_fn, subgrad_fn, z, tol, feasible_point,
                             max_iterations: int = 10**6) -> np.ndarray:
    """Oracle-only fallback: dual bisection with subgradient inner solves.

    The inner problems are 1-strongly convex; each is run until its
    averaging-based certificate drops below ``tol/10``.  Practical only at
    loose tolerances; raises :class:`NoConvergence` otherwise.
    """
    z = as_vector(z)
    d = z.shape[0]
    inner_tol = tol / 10.0

    def inner(lam: float) -> np.ndarray:
        y = z.copy() if feasible_point is None else feasible_point.copy()
        avg = np.zeros(d)
        wsum = 0.0
        max_gn = 0.0
        for k in range(1, max_iterations + 1):
            g = (y - z) + lam * subgrad_fn(y)
            max_gn = max(max_gn, float(np.linalg.norm(g)))
            wsum += k
            avg = avg + (k / wsum) * (y - avg)
            if 2.0 * max_gn**2 / (k + 1.0) <= inner_tol:
                return avg
            y = y - (2.0 / (k + 1.0)) * g
        raise NoConvergence("inner subgradient solve missed its certificate")

    y0 = inner(0.0)
    if value_fn(y0) <= tol:
        return y0
    lo, hi = 0.0, 1.0
    while value_fn(inner(hi)) > 0.0:
        lo = hi
        hi *= 10.0
        if hi > 1e12:
            raise NoConvergence("dual multiplier bracket exceeded 1e12")
    best = inner(hi)
    for _ in range(200):
        if abs(value_fn(best)) <= tol:
            break
        mid = 0.5 * (lo + hi)
        y = inner(mid)
        if value_fn(y) > 0.0:
            lo = mid
        else:
            hi = mid
            best = y
    if value_fn(best) > tol:
        raise NoConvergence("outer bisection missed the feasibility tolerance")
    return best


# -- module-level operation wrappers ----------------------------------------

def project(xset: ProxSmoothSet, y) -> np.ndarray:
    """Nearest-point projection onto the set (single-valued regime only)."""
    return xset.project(y)


def distance(xset: ProxSmoothSet, y) -> float:
    """``||y - project(y)||``; zero exactly when the set contains y."""
    return xset.distance(y)
