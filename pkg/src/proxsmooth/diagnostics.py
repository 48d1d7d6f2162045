"""Brute-force stationarity oracles and inequality checkers.

The central quantity is the proximal stationarity measure
``C_lam(x) = ||x - prox(x)|| / lam`` where ``prox(x)`` minimizes
``f(y) + (1/(2 lam)) ||y - x||^2`` over the constraint set.  The oracles
here approximate that minimizer by exhaustive search:

* ``Grid1DOracle``  dense grid on an interval; the prox objective is
  strictly unimodal, so the grid argmin sits within one spacing ``h`` of
  the true minimizer and the reported error bounds are ``L h + h^2/(2 lam)``
  for the envelope and ``h / lam`` for the measure.
* ``Grid2DOracle``  dense masked grid on a rectangle (planar problems).
* ``SphereMultistartOracle``  projected subgradient descent from many
  random starts plus the query point itself, keeping the best value ever
  seen.  This can only under-report the measure, which is flagged in its
  error field as ``nan`` (heuristic).

Each checker evaluates one proved inequality at explicit points, returning
``violation = (left side) - (right side)`` so nonpositive means pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .approximations import SetApproximation
from .geometry import ProxSmoothSet, as_vector
from .models import ModelFamily, StochasticObjective
from .driver import retraction_error_terms
from .subsolver import solve_subproblem


@dataclass(frozen=True)
class ProxOracleConfig:
    """Which oracle evaluates the proximal map, and at what resolution."""

    method: str                  # "grid1d" | "grid2d" | "multistart_sphere"
    resolution: float = 1e-6
    multistart: int = 64
    iterations: int = 3000


@dataclass(frozen=True)
class ProxResult:
    envelope: float
    prox_point: np.ndarray
    envelope_error: float
    position_error: float


class Grid1DOracle:
    """Dense-grid prox oracle on an interval, caching objective values."""

    def __init__(self, f: Callable[[np.ndarray], float], lo: float, hi: float,
                 h: float = 1e-6):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi, self.h = float(lo), float(hi), float(h)
        self.f = f
        n = int(round((hi - lo) / h)) + 1
        self.grid = np.linspace(lo, hi, n)
        self._fvals: np.ndarray | None = None

    def _values(self) -> np.ndarray:
        # scalar objectives broadcast over (n, 1) batches of grid points
        if self._fvals is None:
            self._fvals = np.asarray(self.f(self.grid.reshape(-1, 1)), dtype=float)
        return self._fvals

    def solve(self, lam: float, x) -> ProxResult:
        x = as_vector(x)
        fvals = self._values()
        vals = fvals + (0.5 / lam) * (self.grid - float(x[0])) ** 2
        idx = int(np.argmin(vals))
        best_t, best_v = float(self.grid[idx]), float(vals[idx])
        if self.lo <= float(x[0]) <= self.hi:
            fx = float(self.f(np.asarray(x, dtype=float).reshape(1, -1))[0])
            if fx < best_v:
                best_t, best_v = float(x[0]), fx
        L_est = float(np.max(np.abs(np.diff(fvals)))) / self.h
        err_env = L_est * self.h + self.h**2 / (2.0 * lam)
        return ProxResult(best_v, np.array([best_t]), err_env, self.h)


class Grid2DOracle:
    """Masked dense-grid prox oracle on a rectangle."""

    def __init__(self, f: Callable[[np.ndarray], np.ndarray],
                 feasible_mask: Callable[[np.ndarray], np.ndarray],
                 bounds: tuple[float, float, float, float], h: float = 1e-3):
        self.h = float(h)
        x0, x1, y0, y1 = bounds
        nx = int(round((x1 - x0) / h)) + 1
        ny = int(round((y1 - y0) / h)) + 1
        gx = np.linspace(x0, x1, nx)
        gy = np.linspace(y0, y1, ny)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        mask = np.asarray(feasible_mask(pts), dtype=bool)
        self.points = pts[mask]
        self.fvals = np.asarray(f(self.points), dtype=float)

    def solve(self, lam: float, x) -> ProxResult:
        x = as_vector(x, 2)
        d2 = np.sum((self.points - x) ** 2, axis=1)
        vals = self.fvals + (0.5 / lam) * d2
        idx = int(np.argmin(vals))
        err_pos = self.h * math.sqrt(2.0)
        return ProxResult(float(vals[idx]), self.points[idx].copy(),
                          2.0 * self.h / lam, err_pos)


class SphereMultistartOracle:
    """Multistart projected subgradient prox oracle on the unit sphere.

    Starts at the query point plus ``multistart - 1`` seeded random unit
    vectors and tracks the best objective value over all iterates of all
    starts, so the returned value never exceeds ``f(x)``.  A heuristic:
    the reported position error is ``nan`` and consumers must treat the
    measure as a possible underestimate.
    """

    def __init__(self, f_batch: Callable[[np.ndarray], np.ndarray],
                 subgrad_batch: Callable[[np.ndarray], np.ndarray],
                 dim: int, rho: float,
                 multistart: int = 64, iterations: int = 3000, seed: int = 0):
        self.dim = int(dim)
        self._f_batch = f_batch
        self._subgrad_batch = subgrad_batch
        self.rho = float(rho)
        self.multistart = int(multistart)
        self.iterations = int(iterations)
        self.seed = int(seed)

    def solve(self, lam: float, x) -> ProxResult:
        x = as_vector(x, self.dim)
        d = x.shape[0]
        sigma = max(1.0 / lam - self.rho, 1e-9)
        key = int(np.bitwise_xor.reduce(np.frombuffer(x.tobytes(), dtype=np.uint64)))
        rng = np.random.Generator(np.random.Philox(key=[self.seed, key]))
        starts = rng.standard_normal((self.multistart - 1, d))
        starts /= np.linalg.norm(starts, axis=1, keepdims=True)
        Y = np.vstack([x / np.linalg.norm(x), starts])

        def phi(Z):
            return self._f_batch(Z) + (0.5 / lam) * np.sum((Z - x) ** 2, axis=1)

        vals = phi(Y)
        best_idx = int(np.argmin(vals))
        best_y, best_v = Y[best_idx].copy(), float(vals[best_idx])
        for k in range(1, self.iterations + 1):
            G = self._subgrad_batch(Y) + (1.0 / lam) * (Y - x)
            # tangential component only; radial moves are undone by the
            # renormalization anyway
            G = G - (np.sum(G * Y, axis=1, keepdims=True)) * Y
            step = 2.0 / (sigma * (k + 1.0))
            Y = Y - step * G
            Y /= np.linalg.norm(Y, axis=1, keepdims=True)
            vals = phi(Y)
            idx = int(np.argmin(vals))
            if float(vals[idx]) < best_v:
                best_v = float(vals[idx])
                best_y = Y[idx].copy()
        return ProxResult(best_v, best_y, math.nan, math.nan)


def moreau_prox(oracle, lam: float, x) -> tuple[float, np.ndarray]:
    """Envelope value and prox point at ``x`` for parameter ``lam``."""
    res = oracle.solve(lam, x)
    return res.envelope, res.prox_point


def stationarity(oracle, lam: float, x) -> float:
    """``||x - prox(x)|| / lam``, the proximal stationarity measure."""
    res = oracle.solve(lam, x)
    return float(np.linalg.norm(as_vector(x) - res.prox_point)) / lam


def check_prox_point_bound(beta: float, x, x_hat, L: float) -> float:
    """``beta * ||x - x_hat|| - 2L``; nonpositive for L-Lipschitz models."""
    x = as_vector(x)
    x_hat = as_vector(x_hat, x.shape[0])
    return beta * float(np.linalg.norm(x - x_hat)) - 2.0 * L


def check_three_point(f: Callable[[np.ndarray], float], rho: float, L: float,
                      R: float, x, beta: float,
                      prox_solver: Callable[[np.ndarray, float], np.ndarray],
                      sample_y: Callable[[], np.ndarray],
                      n_samples: int) -> float:
    """Max violation of the curvature-corrected descent inequality.

    ``prox_solver`` returns the regularized minimizer over the constraint
    set; sampled comparison points must be feasible.  Requires
    ``beta > rho + 3L/R``.  Nonpositive return means the inequality held at
    every sampled point.
    """
    x = as_vector(x)
    curv = 0.0 if math.isinf(R) else 3.0 * L / R
    if not beta > rho + curv:
        raise ValueError("need beta > rho + 3L/R")
    x_tilde = as_vector(prox_solver(x, beta), x.shape[0])
    f_tilde = f(x_tilde)
    coef = 0.5 * (beta - rho - curv)
    base = 0.5 * beta * float((x - x_tilde) @ (x - x_tilde))
    worst = -math.inf
    for _ in range(n_samples):
        y = as_vector(sample_y(), x.shape[0])
        lhs = f(y) - f_tilde
        rhs = (coef * float((y - x_tilde) @ (y - x_tilde)) + base
               - 0.5 * beta * float((y - x) @ (y - x)))
        worst = max(worst, rhs - lhs)
    return worst


@dataclass(frozen=True)
class OneStepReport:
    violation: float
    lhs: float
    rhs: float
    cushion: float


def check_one_step(objective: StochasticObjective, family,
                   approx: SetApproximation, x, beta: float, rho_bar: float,
                   gamma: float, oracle, tau1: float = 0.0, tau2: float = 0.0,
                   position_error: float = 0.0, tol: float = 1e-10) -> OneStepReport:
    """Exact conditional-expectation check of the per-step contraction.

    Computes every post-step point over the finite support, forms
    ``E||x_hat - x_next||^2`` exactly, and compares with
    ``((beta + mu + 3 tau1 L - rho_bar)/(beta - gamma)) ||x - x_hat||^2 +
    L^2 a``, where ``a`` collapses to ``1/(beta(beta-gamma))`` when the
    retraction is exact.  The cushion accounts for the prox oracle's
    position error and the subsolver tolerance.
    """
    family = ModelFamily.parse(family)
    x = as_vector(x, objective.dim)
    L = objective.constants.L
    mu = objective.constants.mu
    res = oracle.solve(1.0 / rho_bar, x)
    x_hat = res.prox_point
    lhs = 0.0
    max_move = 0.0
    for p, atom in zip(objective.probs, objective.atoms):
        local_set, retraction = approx.build(x)
        sol = solve_subproblem(objective, family, x, atom, local_set, beta,
                               tol=tol)
        x_next = retraction(sol.x)
        move = float(np.linalg.norm(x_hat - x_next))
        max_move = max(max_move, move)
        lhs += float(p) * move**2
    gap2 = float((x - x_hat) @ (x - x_hat))
    coef = (beta + mu + 3.0 * tau1 * L - rho_bar) / (beta - gamma)
    a_t = retraction_error_terms(beta, gamma, rho_bar, tau2, L)
    rhs = coef * gap2 + L * L * a_t
    eps = position_error if math.isfinite(position_error) else 0.0
    cushion = (2.0 * eps * max_move + eps**2
               + abs(coef) * (2.0 * eps * math.sqrt(gap2) + eps**2)
               + 10.0 * tol)
    return OneStepReport(lhs - rhs, lhs, rhs, cushion)
