"""Registry of benchmark problem instances with declared, validated constants.

Three problems ship with the package:

* ``quartic1d``       |x^2 - 1| on [-2, 2], optionally with a three-point
                      linear tilt of the per-sample loss (zeta in
                      {-sigma, 0, +sigma}) so subgradient noise averages out
                      exactly.
* ``sphere-phase``    (1/m) sum_i |<a_i, x>^2 - b_i| on the unit sphere with
                      planted measurements (b_i attained at a known unit
                      vector), d = 10, m = 30; ``sphere-phase-d3`` is the
                      same generator at d = 3.
* ``parabolas2d``     |x - 1| + |y| on the lens between the parabolas
                      y = x^2 and y = (x^2 + 4)/5, with two convex inner
                      approximation configurations for the constraints.

Every bundle records the constants its guarantees consume (validated by
the verification suite), reference basepoints, a default prox oracle, and
helper samplers for the invariant checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .approximations import (
    ApproxParams,
    FunctionalInnerApprox,
    IdentityApprox,
    SetApproximation,
    TangentSphereApprox,
)
from .diagnostics import Grid1DOracle, Grid2DOracle, SphereMultistartOracle
from .errors import OutsideTube, UnknownProblem
from .geometry import Box, MaxQuadratics, ProxSmoothSet, UnitSphere, as_vector
from .models import CompositeStructure, ModelFamily, ObjectiveConstants, StochasticObjective
from .subsolver import Piecewise1D, abs_affine_pieces, affine_pieces, clipped_affine_pieces

DATA_SEED = 20240817


@dataclass
class ProblemBundle:
    """A registered benchmark: objective, set, approximations, constants."""

    id: str
    objective: StochasticObjective
    xset: ProxSmoothSet
    approximations: dict[str, SetApproximation]
    constants: dict
    x0: np.ndarray
    families: tuple[str, ...]
    f_batch: Callable[[np.ndarray], np.ndarray]
    sample_feasible: Callable[[np.random.Generator], np.ndarray]
    sample_domain: Callable[[np.random.Generator], np.ndarray]
    alpha: float = 0.25
    oracle_resolution: float = 1e-6
    _oracles: dict = field(default_factory=dict)

    def prox_oracle(self, resolution: float | None = None):
        """Problem-appropriate prox oracle, cached per resolution."""
        h = self.oracle_resolution if resolution is None else float(resolution)
        if h not in self._oracles:
            self._oracles[h] = self._make_oracle(h)
        return self._oracles[h]

    def _make_oracle(self, h: float):
        raise NotImplementedError

    def schedule_constants(self, approx_kind: str | None = None,
                           alpha: float | None = None,
                           delta: float | None = None,
                           rho_bar: float | None = None) -> dict:
        """Constants dict consumed by the schedule and bound builders."""
        c = self.constants
        out = {
            "eta": c["eta"], "mu": c["mu"], "L": c["L"], "R": c["R"],
            "delta": c["delta"] if delta is None else float(delta),
        }
        if approx_kind is not None:
            out["params"] = self.approximations[approx_kind].params
            out["alpha"] = self.alpha if alpha is None else float(alpha)
            if rho_bar is not None:
                out["rho_bar"] = float(rho_bar)
        return out

    def metadata(self) -> dict:
        return {
            "id": self.id,
            "dimension": self.objective.dim,
            "support_size": self.objective.n_atoms,
            "families": list(self.families),
            "constants": {k: v for k, v in self.constants.items()},
            "x0": [float(v) for v in self.x0],
            "approximations": {
                name: {
                    "kind": a.kind,
                    "R": a.params.R, "tau1": a.params.tau1, "r1": a.params.r1,
                    "tau2": a.params.tau2, "r2": a.params.r2,
                }
                for name, a in self.approximations.items()
            },
        }

    def validate(self, samples: int = 2000, seed: int = 0):
        from .verification import validate_constants
        return validate_constants(self, samples=samples, seed=seed)


def validate_constants(bundle: ProblemBundle, samples: int = 2000, seed: int = 0):
    """Run the model/approximation invariant suites; report max violations."""
    from .verification import validate_constants as _impl
    return _impl(bundle, samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# quartic1d
# ---------------------------------------------------------------------------

def _sign(u: float) -> float:
    # kink selection: the zero subgradient at |.|'s kink keeps runs reproducible
    return float(np.sign(u))


class _Quartic1DBundle(ProblemBundle):
    def _make_oracle(self, h: float):
        return Grid1DOracle(self.f_batch, -2.0, 2.0, h)

    def three_point_prox(self, x, beta: float) -> np.ndarray:
        """Exact minimizer of f + (beta/2)(. - x)^2 over the interval."""
        x0 = float(as_vector(x, 1)[0])
        pieces = _quartic_pieces(0.0).add_quadratic(
            0.5 * beta, -beta * x0, 0.5 * beta * x0 * x0)
        t, _ = pieces.minimize(-2.0, 2.0)
        return np.array([t])


def _quartic_pieces(zeta: float) -> Piecewise1D:
    breaks = np.array([-1.0, 1.0])
    coeffs = np.array([
        [1.0, zeta, -1.0],
        [-1.0, zeta, 1.0],
        [1.0, zeta, -1.0],
    ])
    return Piecewise1D(breaks, coeffs)


def _quartic_fprime(t: float) -> float:
    return 2.0 * t * _sign(t * t - 1.0)


def _quartic_model_pieces(family: ModelFamily, x: float, zeta: float) -> Piecewise1D:
    if family is ModelFamily.PROX_POINT:
        return _quartic_pieces(zeta)
    f_val = abs(x * x - 1.0) + zeta * x
    if family in (ModelFamily.SUBGRADIENT, ModelFamily.CLIPPED):
        g = _quartic_fprime(x) + zeta
        intercept = f_val - g * x
        if family is ModelFamily.SUBGRADIENT:
            return affine_pieces(g, intercept)
        return clipped_affine_pieces(g, intercept)
    # prox-linear: |(x^2-1) + 2x(t-x)| + zeta*t
    pieces = abs_affine_pieces(2.0 * x, -(x * x) - 1.0)
    return pieces.add_quadratic(0.0, zeta, 0.0)


def _make_quartic1d(sigma: float = 0.5) -> ProblemBundle:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    atoms = (0.0,) if sigma == 0.0 else (-sigma, 0.0, sigma)
    probs = np.full(len(atoms), 1.0 / len(atoms))

    def value(x, zeta):
        t = float(x[0])
        return abs(t * t - 1.0) + zeta * t

    def subgrad(x, zeta):
        t = float(x[0])
        return np.array([_quartic_fprime(t) + zeta])

    composite = CompositeStructure(
        outer_value=lambda u, zeta: abs(float(u[0])) + zeta * float(u[1]),
        outer_subgrad=lambda u, zeta: np.array([_sign(float(u[0])), zeta]),
        inner_value=lambda x, zeta: np.array([float(x[0]) ** 2 - 1.0, float(x[0])]),
        inner_jacobian=lambda x, zeta: np.array([[2.0 * float(x[0])], [1.0]]),
    )

    constants = ObjectiveConstants(L=4.0 + sigma, eta=2.0, mu=2.0, rho=2.0)
    objective = StochasticObjective(
        dim=1, atoms=atoms, probs=probs, value_fn=value, subgrad_fn=subgrad,
        constants=constants, composite=composite,
        lower_bounded_by_zero=(sigma == 0.0),
        model_pieces1d=_quartic_model_pieces, label="quartic1d",
    )
    xset = Box([-2.0], [2.0])
    x0 = np.array([1.5])
    families = ("proxpoint", "subgrad", "proxlin") + (("clipped",) if sigma == 0.0 else ())

    def f_batch(P):
        t = np.asarray(P, dtype=float).reshape(-1)
        return np.abs(t * t - 1.0)

    def sample_feasible(rng):
        return np.array([rng.uniform(-2.0, 2.0)])

    bundle = _Quartic1DBundle(
        id="quartic1d", objective=objective, xset=xset,
        approximations={"identity": IdentityApprox(xset)},
        constants={"L": constants.L, "eta": 2.0, "mu": 2.0, "rho": 2.0,
                   "R": math.inf, "delta": 1.25, "sigma": sigma},
        x0=x0, families=families, f_batch=f_batch,
        sample_feasible=sample_feasible, sample_domain=sample_feasible,
        alpha=0.25, oracle_resolution=1e-6,
    )
    return bundle


# ---------------------------------------------------------------------------
# sphere-phase
# ---------------------------------------------------------------------------

class _SpherePhaseBundle(ProblemBundle):
    def _make_oracle(self, h: float):
        # h is not a grid spacing here; the multistart oracle ignores it
        return SphereMultistartOracle(
            self.f_batch, self.subgrad_batch, self.objective.dim,
            rho=self.constants["rho"], multistart=64,
            iterations=self.constants["oracle_iterations"], seed=1)

    subgrad_batch: Callable[[np.ndarray], np.ndarray] = None


def _make_sphere_phase(d: int, m: int = 30, tube: float = 0.25,
                       oracle_iterations: int = 2000) -> ProblemBundle:
    rng = np.random.Generator(np.random.Philox(key=[DATA_SEED, d]))
    A = rng.standard_normal((m, d))
    x_star = rng.standard_normal(d)
    x_star /= np.linalg.norm(x_star)
    b = (A @ x_star) ** 2
    x0 = rng.standard_normal(d)
    x0 /= np.linalg.norm(x0)

    norms2 = np.sum(A * A, axis=1)
    L = 2.0 * float(np.max(norms2)) * (1.0 + tube)
    rho = 2.0 * float(np.max(norms2))
    mu = 2.0 * float(np.mean(norms2))

    def value(x, i):
        return abs(float(A[i] @ x) ** 2 - float(b[i]))

    def subgrad(x, i):
        z = float(A[i] @ x)
        return 2.0 * z * _sign(z * z - float(b[i])) * A[i]

    def f_batch(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.mean(np.abs((Y @ A.T) ** 2 - b), axis=1)

    def subgrad_batch(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Z = Y @ A.T
        S = np.sign(Z * Z - b)
        return (2.0 / m) * (Z * S) @ A

    constants = ObjectiveConstants(L=L, eta=rho, mu=mu, rho=rho)
    objective = StochasticObjective(
        dim=d, atoms=tuple(range(m)), probs=np.full(m, 1.0 / m),
        value_fn=value, subgrad_fn=subgrad, constants=constants,
        label=f"sphere-phase-d{d}",
    )
    xset = UnitSphere(d)
    delta = float(f_batch(x0.reshape(1, -1))[0])

    def sample_feasible(rng_):
        return xset.random_point(rng_)

    def sample_domain(rng_):
        y = xset.random_point(rng_)
        return y * (1.0 + rng_.uniform(-tube, tube))

    bundle = _SpherePhaseBundle(
        id="sphere-phase" if d == 10 else f"sphere-phase-d{d}",
        objective=objective, xset=xset,
        approximations={"identity": IdentityApprox(xset),
                        "tangent": TangentSphereApprox(xset, r1=0.5)},
        constants={"L": L, "eta": rho, "mu": mu, "rho": rho, "R": 1.0,
                   "delta": delta, "tube": tube, "m": m,
                   "oracle_iterations": oracle_iterations},
        x0=x0, families=("subgrad",), f_batch=f_batch,
        sample_feasible=sample_feasible, sample_domain=sample_domain,
        alpha=0.05, oracle_resolution=math.nan,
    )
    bundle.subgrad_batch = subgrad_batch
    bundle.constants["x_star"] = x_star
    return bundle


# ---------------------------------------------------------------------------
# parabolas2d
# ---------------------------------------------------------------------------

class ParabolasRegion(ProxSmoothSet):
    """Lens {y >= x^2} ∩ {y <= (x^2 + 4)/5}, a nonconvex planar region.

    The boundary splits into two parabola arcs over x in [-1, 1] meeting at
    the corners (+-1, 1); projections are computed exactly by enumerating
    the stationary points of the distance to each arc (cubic roots) plus
    the corners.  The declared reach 0.4 stays below the lower arc's
    curvature radius 1/2.
    """

    kind = "WeaklyConvexSublevel"

    def __init__(self):
        super().__init__(2, 0.4)
        self.constraints = MaxQuadratics.from_pieces([
            (np.array([[2.0, 0.0], [0.0, 0.0]]), np.array([0.0, -1.0]), 0.0),
            (np.array([[-0.4, 0.0], [0.0, 0.0]]), np.array([0.0, 1.0]), -0.8),
        ])

    def g_values(self, y) -> np.ndarray:
        y = as_vector(y, 2)
        return self.constraints.piece_values(y)

    def contains(self, y, tol: float = 1e-9) -> bool:
        return bool(np.max(self.g_values(y)) <= tol)

    def _arc_candidates(self, z: np.ndarray) -> list[np.ndarray]:
        cands = []
        for a2, a0 in ((1.0, 0.0), (0.2, 0.8)):
            # arc y = a2*x^2 + a0 over [-1, 1]; stationary points of the
            # squared distance solve a cubic
            poly = np.array([
                2.0 * a2 * a2,
                0.0,
                1.0 + 2.0 * a2 * (a0 - z[1]),
                -z[0],
            ])
            roots = np.roots(poly)
            ts = [float(r.real) for r in roots if abs(r.imag) < 1e-9]
            deriv = np.polyder(poly)
            for t in ts:
                for _ in range(2):
                    dp = float(np.polyval(deriv, t))
                    if dp == 0.0:
                        break
                    t -= float(np.polyval(poly, t)) / dp
                t = min(1.0, max(-1.0, t))
                cands.append(np.array([t, a2 * t * t + a0]))
            cands.append(np.array([-1.0, a2 + a0]))
            cands.append(np.array([1.0, a2 + a0]))
        return cands

    def project(self, y) -> np.ndarray:
        z = as_vector(y, 2)
        if self.contains(z, 0.0):
            return z.copy()
        cands = self._arc_candidates(z)
        dists = [float(np.linalg.norm(c - z)) for c in cands]
        best = int(np.argmin(dists))
        self._check_tube(z, dists[best])
        return cands[best]


class _Parabolas2DBundle(ProblemBundle):
    def _make_oracle(self, h: float):
        def mask(P):
            vals = np.stack([
                P[:, 0] ** 2 - P[:, 1],
                P[:, 1] - 0.2 * P[:, 0] ** 2 - 0.8,
            ])
            return np.max(vals, axis=0) <= 0.0

        return Grid2DOracle(self.f_batch, mask, (-1.0, 1.0, 0.0, 1.0), h)


# calibrated accuracy constants for the inner approximations; computed by
# scripts/calibrate and re-verified at test time by check_condition_i
PARABOLAS_TAU1 = {"inner-exact": 1.0, "inner-linear": 3.0}
PARABOLAS_R1 = 0.25
PARABOLAS_BASEPOINTS = (np.array([1.0, 1.0]), np.array([-0.7, 0.8]))


def _make_parabolas2d() -> ProblemBundle:
    region = ParabolasRegion()

    def value(x, _atom):
        return abs(float(x[0]) - 1.0) + abs(float(x[1]))

    def subgrad(x, _atom):
        return np.array([_sign(float(x[0]) - 1.0), _sign(float(x[1]))])

    def f_batch(P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return np.abs(P[:, 0] - 1.0) + np.abs(P[:, 1])

    constants = ObjectiveConstants(L=math.sqrt(2.0), eta=0.0, mu=0.0, rho=0.0)
    objective = StochasticObjective(
        dim=2, atoms=(None,), probs=np.array([1.0]), value_fn=value,
        subgrad_fn=subgrad, constants=constants, label="parabolas2d",
    )

    approximations = {
        "identity": IdentityApprox(region),
        "inner-exact": FunctionalInnerApprox(
            region, region.constraints, gamma=0.25, mode="exact",
            tau1=PARABOLAS_TAU1["inner-exact"], r1=PARABOLAS_R1),
        "inner-linear": FunctionalInnerApprox(
            region, region.constraints, gamma=2.2, mode="linear",
            tau1=PARABOLAS_TAU1["inner-linear"], r1=PARABOLAS_R1),
    }

    def sample_feasible(rng_):
        while True:
            x = rng_.uniform(-1.0, 1.0)
            y = rng_.uniform(0.0, 1.0)
            p = np.array([x, y])
            if region.contains(p, 0.0):
                return p

    # f* = 0.75 at (0.5, 0.25) on the lower boundary; x0 is the corner (1,1)
    bundle = _Parabolas2DBundle(
        id="parabolas2d", objective=objective, xset=region,
        approximations=approximations,
        constants={"L": constants.L, "eta": 0.0, "mu": 0.0, "rho": 0.0,
                   "R": region.proximal_radius, "delta": 0.25,
                   "f_min": 0.75, "gamma_exact": 0.25, "gamma_linear": 2.2},
        x0=np.array([1.0, 1.0]), families=("subgrad",), f_batch=f_batch,
        sample_feasible=sample_feasible, sample_domain=sample_feasible,
        alpha=0.25, oracle_resolution=1e-3,
    )
    return bundle


# ---------------------------------------------------------------------------
# diagnostics-only instance: |y1^2 - 1| on the unit circle
# ---------------------------------------------------------------------------

@dataclass
class CircleQuartic:
    """f(y) = |y1^2 - 1| restricted near the unit circle (rho=2, L=4, R=1).

    On the circle f = 1 - y1^2 is smooth, so the regularized subproblem
    reduces to a trigonometric polynomial in the angle; the solver combines
    a dense angular grid with a Newton polish and is exact to machine
    precision.
    """

    set: UnitSphere
    rho: float = 2.0
    L: float = 4.0
    R: float = 1.0
    grid_size: int = 4096

    def f(self, y) -> float:
        y = as_vector(y, 2)
        return abs(float(y[0]) ** 2 - 1.0)

    def prox_batch(self, X: np.ndarray, betas: np.ndarray) -> np.ndarray:
        """Vectorized argmin of f + (beta/2)||. - x||^2 over the circle."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        betas = np.asarray(betas, dtype=float).reshape(-1)
        theta = np.linspace(0.0, 2.0 * math.pi, self.grid_size, endpoint=False)
        ct, st = np.cos(theta), np.sin(theta)
        # phi = sin^2(theta) - beta*(x1 cos + x2 sin) + const
        vals = (st * st)[None, :] - betas[:, None] * (
            np.outer(X[:, 0], ct) + np.outer(X[:, 1], st))
        th0 = theta[np.argmin(vals, axis=1)]

        def dphi(th):
            s, c = np.sin(th), np.cos(th)
            return 2.0 * s * c + betas * (X[:, 0] * s - X[:, 1] * c)

        # the dense-grid argmin brackets the basin minimum; bisect the
        # derivative to machine precision
        spacing = 2.0 * math.pi / self.grid_size
        lo = th0 - 2.0 * spacing
        hi = th0 + 2.0 * spacing
        bad = (dphi(lo) > 0) | (dphi(hi) < 0)
        lo = np.where(bad, th0 - 4.0 * spacing, lo)
        hi = np.where(bad, th0 + 4.0 * spacing, hi)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            pos = dphi(mid) > 0
            hi = np.where(pos, mid, hi)
            lo = np.where(pos, lo, mid)
        th = 0.5 * (lo + hi)
        # keep whichever of grid point and polished point scores better
        def phi(th):
            s, c = np.sin(th), np.cos(th)
            return s * s - betas * (X[:, 0] * c + X[:, 1] * s)

        th = np.where(phi(th) <= phi(th0), th, th0)
        return np.column_stack([np.cos(th), np.sin(th)])

    def prox_solver(self, x, beta: float) -> np.ndarray:
        return self.prox_batch(np.asarray(x, dtype=float).reshape(1, -1),
                               np.array([beta]))[0]


def circle_quartic_instance() -> CircleQuartic:
    return CircleQuartic(set=UnitSphere(2))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_BUILDERS = {
    "quartic1d": _make_quartic1d,
    "sphere-phase": lambda **kw: _make_sphere_phase(10, **kw),
    "sphere-phase-d3": lambda **kw: _make_sphere_phase(3, **kw),
    "parabolas2d": _make_parabolas2d,
}


@lru_cache(maxsize=None)
def _cached(pid: str, kw_items: tuple) -> ProblemBundle:
    return _BUILDERS[pid](**dict(kw_items))


def get_problem(pid: str, **kwargs) -> ProblemBundle:
    """Fetch a registered bundle; raises :class:`UnknownProblem` otherwise."""
    if pid not in _BUILDERS:
        raise UnknownProblem(
            f"unknown problem {pid!r}; registered: {sorted(_BUILDERS)}"
        )
    return _cached(pid, tuple(sorted(kwargs.items())))


def fresh_problem(pid: str, **kwargs) -> ProblemBundle:
    """Uncached bundle, safe to mutate (constant-override experiments)."""
    if pid not in _BUILDERS:
        raise UnknownProblem(
            f"unknown problem {pid!r}; registered: {sorted(_BUILDERS)}"
        )
    return _BUILDERS[pid](**kwargs)


def problem_ids() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))
