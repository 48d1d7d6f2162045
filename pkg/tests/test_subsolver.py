import math

import numpy as np
import pytest

from proxsmooth.errors import NoConvergence
from proxsmooth.geometry import AffineSubspace, UnitSphere, interval
from proxsmooth.models import ModelFamily, ObjectiveConstants, StochasticObjective
from proxsmooth.problems import get_problem
from proxsmooth.subsolver import (
    Piecewise1D,
    SubproblemSpec,
    recording_solves,
    solve_generic,
    solve_linear_over_sphere,
    solve_model_over_affine,
    solve_over_functional_inner,
    solve_subproblem,
)

QUARTIC = get_problem("quartic1d", sigma=0.0)


def vec(*vals):
    return np.array(vals, dtype=float)


def grid_min_1d(fn, lo, hi, h):
    ts = np.arange(lo, hi + h, h)
    vals = fn(ts)
    i = int(np.argmin(vals))
    return ts[i], vals[i]


class TestSphereClosedForm:
    def test_zero_gradient_returns_base(self):
        res = solve_linear_over_sphere(vec(0.0, 0.0), vec(1.0, 0.0), 3.0)
        assert np.allclose(res.x, [1.0, 0.0])

    def test_against_angular_grid(self):
        res = solve_linear_over_sphere(vec(0.0, 1.0), vec(1.0, 0.0), 1.0)
        theta = np.arange(0.0, 2 * np.pi, 1e-5)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        obj = pts @ vec(0.0, 1.0) + 0.5 * np.sum((pts - vec(1.0, 0.0)) ** 2, axis=1)
        oracle = pts[int(np.argmin(obj))]
        assert np.linalg.norm(res.x - oracle) < 2e-5
        assert np.allclose(res.x, np.array([1.0, -1.0]) / math.sqrt(2), atol=1e-12)

    def test_opposing_gradient(self):
        res = solve_linear_over_sphere(vec(-1.0, 0.0), vec(1.0, 0.0), 2.0)
        assert np.allclose(res.x, [1.0, 0.0], atol=1e-15)

    def test_degenerate_flagged(self):
        res = solve_linear_over_sphere(vec(2.0, 0.0), vec(1.0, 0.0), 2.0)
        assert res.certificate.degenerate
        assert np.allclose(res.x, [1.0, 0.0])


def _affine_spec(family, x, beta, plane=None, dim=2):
    if plane is None:
        plane = AffineSubspace(np.zeros(dim), np.eye(dim))
    return SubproblemSpec(QUARTIC.objective, ModelFamily.parse(family),
                          np.asarray(x, dtype=float), 0.0, plane, beta)


class TestAffineSolves:
    def test_subgradient_projected_prox(self):
        # g orthogonal to the plane and x on it: nothing moves
        plane = AffineSubspace(np.zeros(2), np.array([[1.0], [0.0]]))
        obj = StochasticObjective(
            2, (None,), [1.0], lambda z, a: float(z[1]),
            lambda z, a: np.array([0.0, 1.0]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        spec = SubproblemSpec(obj, ModelFamily.SUBGRADIENT, vec(0.5, 0.0),
                              None, plane, 2.0)
        res = solve_model_over_affine(spec)
        assert np.allclose(res.x, [0.5, 0.0], atol=1e-15)

    def test_subgradient_full_space(self):
        obj = StochasticObjective(
            2, (None,), [1.0], lambda z, a: float(z[0] + z[1]),
            lambda z, a: np.array([1.0, 1.0]),
            ObjectiveConstants(L=2.0, eta=0.0, mu=0.0, rho=0.0))
        plane = AffineSubspace(np.zeros(2), np.eye(2))
        spec = SubproblemSpec(obj, ModelFamily.SUBGRADIENT, vec(1.0, 2.0),
                              None, plane, 4.0)
        res = solve_model_over_affine(spec)
        assert np.allclose(res.x, vec(1.0, 2.0) - vec(1.0, 1.0) / 4.0, atol=1e-15)

    def test_clipped_scalar_example(self):
        # minimize max(0.75 - (y - 0.5), 0) + 0.5 (y - 0.5)^2 over R:
        # 1-d dense grid (1e-6) localizes the kink minimizer y = 1.25
        plane = AffineSubspace(np.zeros(1), np.eye(1))
        spec = SubproblemSpec(QUARTIC.objective, ModelFamily.CLIPPED,
                              vec(0.5), 0.0, plane, 1.0)
        res = solve_model_over_affine(spec)
        t, v = grid_min_1d(
            lambda ts: np.maximum(0.75 - (ts - 0.5), 0.0) + 0.5 * (ts - 0.5) ** 2,
            -4.0, 4.0, 1e-6)
        assert abs(res.x[0] - t) < 2e-6
        assert res.x[0] == pytest.approx(1.25, abs=1e-12)
        assert spec.total_value(res.x) == pytest.approx(0.28125, abs=1e-12)


class TestPiecewise1D:
    def test_value_and_minimize(self):
        # |t| as two pieces
        pw = Piecewise1D(np.array([0.0]), np.array([[0.0, -1.0, 0.0],
                                                    [0.0, 1.0, 0.0]]))
        assert pw.value(-2.0) == 2.0
        assert pw.value(3.0) == 3.0
        t, v = pw.add_quadratic(1.0, -2.0, 1.0).minimize(-5.0, 5.0)
        # |t| + (t-1)^2 has its minimum at t = 0.5
        assert t == pytest.approx(0.5, abs=1e-15)

    def test_quartic_prox_against_grid(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x0 = rng.uniform(-2, 2)
            beta = rng.uniform(2.5, 30.0)
            res = solve_subproblem(QUARTIC.objective, "proxpoint", vec(x0),
                                   0.0, QUARTIC.xset, beta)
            t, _ = grid_min_1d(
                lambda ts: np.abs(ts * ts - 1.0) + 0.5 * beta * (ts - x0) ** 2,
                -2.0, 2.0, 1e-6)
            assert abs(res.x[0] - t) < 2e-6


class TestGeneric:
    def test_zero_model_returns_projection(self):
        obj = StochasticObjective(
            2, (None,), [1.0], lambda z, a: 0.0, lambda z, a: np.zeros(2),
            ObjectiveConstants(L=0.0, eta=0.0, mu=0.0, rho=0.0))
        box = interval(-1.0, 1.0)
        from proxsmooth.geometry import Box
        S = Box([-1.0, -1.0], [1.0, 1.0])
        spec = SubproblemSpec(obj, ModelFamily.PROX_POINT, vec(3.0, 0.5), None,
                              S, 2.0, tol=1e-6, max_iterations=10**6)
        res = solve_generic(spec)
        sigma = 2.0
        assert np.linalg.norm(res.x - vec(1.0, 0.5)) <= math.sqrt(2 * 1e-6 / sigma) + 1e-9

    def test_abs_value_example(self):
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: abs(float(z[0])),
            lambda z, a: np.array([np.sign(float(z[0]))]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        spec = SubproblemSpec(obj, ModelFamily.PROX_POINT, vec(1.0), None,
                              interval(-1, 1), 2.0, tol=1e-7, max_iterations=10**6)
        res = solve_generic(spec)
        # 1-d oracle: |y| + (y-1)^2 is minimized at 0.5
        assert res.x[0] == pytest.approx(0.5, abs=2e-4)
        assert res.certificate.bound <= 1e-7

    def test_matches_closed_form_within_certificate(self):
        rng = np.random.default_rng(3)
        tol = 1e-7
        for _ in range(5):
            x0 = rng.uniform(-1.5, 1.5)
            beta = rng.uniform(3.0, 12.0)
            spec = SubproblemSpec(QUARTIC.objective, ModelFamily.PROX_POINT,
                                  vec(x0), 0.0, QUARTIC.xset, beta, tol=tol,
                                  max_iterations=10**6)
            res_it = solve_generic(spec)
            res_cf = solve_subproblem(QUARTIC.objective, "proxpoint", vec(x0),
                                      0.0, QUARTIC.xset, beta)
            gap = spec.total_value(res_it.x) - spec.total_value(res_cf.x)
            assert 0.0 <= gap <= 2 * tol

    def test_no_convergence_when_capped(self):
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: abs(float(z[0])),
            lambda z, a: np.array([np.sign(float(z[0]))]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        spec = SubproblemSpec(obj, ModelFamily.PROX_POINT, vec(1.0), None,
                              interval(-1, 1), 2.0, tol=1e-12,
                              max_iterations=1000)
        with pytest.raises(NoConvergence):
            solve_generic(spec)


class TestFunctionalInner:
    def test_inactive_constraint_matches_unconstrained(self):
        bundle = get_problem("parabolas2d")
        approx = bundle.approximations["inner-exact"]
        x = np.array([0.0, 0.4])  # deep interior
        local, _ = approx.build(x)
        res = solve_subproblem(bundle.objective, "subgrad", x, None, local, 50.0)
        g = bundle.objective.subgrad(x, None)
        expected = x - g / 50.0
        assert local.constraint_value(expected) < 0
        assert np.allclose(res.x, expected, atol=1e-10)
        assert res.certificate.multiplier == 0.0

    def test_fig3_subgradient_against_grid(self):
        bundle = get_problem("parabolas2d")
        approx = bundle.approximations["inner-exact"]
        x = np.array([1.0, 1.0])
        local, _ = approx.build(x)
        res = solve_subproblem(bundle.objective, "subgrad", x, None, local, 4.0)
        # 2-d grid oracle at 1e-4 over the approximation set
        xs = np.arange(-1.0, 1.0 + 1e-4, 1e-4)
        best = (math.inf, None)
        g = bundle.objective.subgrad(x, None)
        for ys in np.array_split(np.arange(0.0, 1.0 + 1e-4, 1e-4), 10):
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            P = np.column_stack([X.ravel(), Y.ravel()])
            vals = np.full(P.shape[0], -np.inf)
            for A, b, c in zip(local.quadratic.mats, local.quadratic.vecs,
                               local.quadratic.consts):
                vals = np.maximum(vals, 0.5 * np.sum((P @ A) * P, axis=1) + P @ b + c)
            feas = P[vals <= 0.0]
            if feas.shape[0] == 0:
                continue
            obj = feas @ g + 0.5 * 4.0 * np.sum((feas - x) ** 2, axis=1)
            i = int(np.argmin(obj))
            if obj[i] < best[0]:
                best = (obj[i], feas[i])
        assert np.linalg.norm(res.x - best[1]) < 1e-4

    def test_1d_constrained_prox(self):
        # min y + (1/2)(y-1)^2 s.t. y^2 - 1 + (y-1)^2 <= 0, grid oracle match
        from proxsmooth.geometry import ConvexSublevelSet, MaxQuadratics

        quad = MaxQuadratics.from_pieces([
            (np.array([[4.0]]), np.array([-2.0]), 0.0),
        ])
        S = ConvexSublevelSet(1, quadratic=quad)
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: float(z[0]),
            lambda z, a: np.array([1.0]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        res = solve_over_functional_inner(
            SubproblemSpec(obj, ModelFamily.SUBGRADIENT, vec(1.0), None, S, 1.0))
        ts = np.arange(-2.0, 2.0, 1e-6)
        feas = ts[ts * ts - 1.0 + (ts - 1.0) ** 2 <= 0.0]
        vals = feas + 0.5 * (feas - 1.0) ** 2
        oracle = feas[int(np.argmin(vals))]
        assert abs(res.x[0] - oracle) < 2e-6


class TestMovementRecorder:
    def test_movement_bounded_on_random_instances(self):
        rng = np.random.default_rng(4)
        with recording_solves() as entries:
            for _ in range(300):
                x0 = rng.uniform(-2, 2)
                beta = rng.uniform(2.5, 40.0)
                fam = ("proxpoint", "subgrad", "proxlin")[int(rng.integers(3))]
                solve_subproblem(QUARTIC.objective, fam, vec(x0), 0.0,
                                 QUARTIC.xset, beta)
        assert len(entries) == 300
        for e in entries:
            assert e["base_feasible"]
            assert e["move"] <= e["two_L"] + 10 * e["tol"] * e["beta"]

    def test_prox_point_bound_example(self):
        # |y| over [-1,1] from x=1 with beta=2: solution 0.5, movement 1 <= 2L
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: abs(float(z[0])),
            lambda z, a: np.array([np.sign(float(z[0]))]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0),
            model_pieces1d=lambda fam, x, a: Piecewise1D(
                np.array([0.0]), np.array([[0.0, -1.0, 0.0], [0.0, 1.0, 0.0]])),
        )
        res = solve_subproblem(obj, "proxpoint", vec(1.0), None,
                               interval(-1, 1), 2.0)
        assert res.x[0] == pytest.approx(0.5, abs=1e-12)
        assert 2.0 * abs(1.0 - res.x[0]) <= 2.0 * obj.constants.L


class TestThreePointProperty:
    def test_convex_classical_case(self):
        # convex f (|y| pieces), convex set: the classical estimate holds
        rng = np.random.default_rng(9)
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: abs(float(z[0])),
            lambda z, a: np.array([np.sign(float(z[0]))]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0),
            model_pieces1d=lambda fam, x, a: Piecewise1D(
                np.array([0.0]), np.array([[0.0, -1.0, 0.0], [0.0, 1.0, 0.0]])),
        )
        box = interval(-1.0, 1.0)
        for _ in range(200):
            x0 = rng.uniform(-1, 1)
            beta = rng.uniform(0.5, 10.0)
            res = solve_subproblem(obj, "proxpoint", vec(x0), None, box, beta)
            xt = res.x
            for _ in range(20):
                y = vec(rng.uniform(-1, 1))
                lhs = abs(y[0]) - abs(xt[0])
                rhs = (0.5 * beta * ((y - xt) @ (y - xt)
                                     + (vec(x0) - xt) @ (vec(x0) - xt)
                                     - (y - vec(x0)) @ (y - vec(x0))))
                assert lhs >= rhs - 1e-10
