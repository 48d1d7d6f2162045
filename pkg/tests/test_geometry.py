import math

import numpy as np
import pytest

from proxsmooth.errors import InfeasibleSet, OutsideTube, ZeroVector
from proxsmooth.geometry import (
    AffineSubspace,
    Ball,
    Box,
    ConvexSublevelSet,
    MaxQuadratics,
    UnitSphere,
    distance,
    interval,
    project,
    project_sublevel,
)


def angular_projection_oracle(y, spacing=1e-5):
    """Dense angular sweep for the planar unit circle."""
    theta = np.arange(0.0, 2 * np.pi, spacing)
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    d = np.sum((pts - np.asarray(y)) ** 2, axis=1)
    return pts[int(np.argmin(d))]


class TestProjection:
    def test_sphere_radial_scaling(self):
        s = UnitSphere(2)
        assert np.allclose(project(s, [2.0, 0.0]), [1.0, 0.0], atol=1e-15)

    def test_box_clamp(self):
        b = interval(-2.0, 2.0)
        assert project(b, [3.0])[0] == pytest.approx(2.0, abs=0)

    def test_sphere_34_point(self):
        # oracle-derived: dense angular grid at 1e-5 spacing agrees with the
        # exact radial projection (0.6, 0.8)
        s = UnitSphere(2)
        p = project(s, [0.3, 0.4])
        assert np.allclose(p, [0.6, 0.8], atol=1e-15)
        oracle = angular_projection_oracle([0.3, 0.4])
        assert np.linalg.norm(p - oracle) < 2e-5

    def test_sphere_errors(self):
        s = UnitSphere(3)
        with pytest.raises(ZeroVector):
            project(s, [0.0, 0.0, 0.0])
        with pytest.raises(OutsideTube):
            project(s, [3.0, 0.0, 0.0])

    def test_ball(self):
        b = Ball([1.0, 0.0], 2.0)
        assert np.allclose(project(b, [5.0, 0.0]), [3.0, 0.0])
        assert np.allclose(project(b, [1.5, 0.5]), [1.5, 0.5])


class TestDistance:
    def test_box(self):
        assert distance(interval(-2, 2), [3.0]) == pytest.approx(1.0)

    def test_sphere_radial(self):
        assert distance(UnitSphere(2), [0.0, 0.5]) == pytest.approx(0.5)

    def test_affine_orthogonal_decomposition(self):
        # {y : <e1, y - e1> = 0}: distance of (1.5, 2) is its normal
        # component 0.5
        plane = AffineSubspace.from_normals([1.0, 0.0], [[1.0], [0.0]])
        assert distance(plane, [1.5, 2.0]) == pytest.approx(0.5, abs=1e-14)

    def test_zero_iff_contains(self):
        rng = np.random.default_rng(0)
        sets = [interval(-2, 2), Ball([0.0, 0.0], 1.0), UnitSphere(2)]
        for s in sets:
            for _ in range(200):
                y = rng.uniform(-1.4, 1.4, s.dim)
                if s.kind == "UnitSphere" and np.linalg.norm(y) < 1e-3:
                    continue
                d = distance(s, y)
                assert (d == 0.0) == s.contains(y, 1e-12)


class TestAffineSubspace:
    def test_orthonormality_enforced(self):
        with pytest.raises(ValueError):
            AffineSubspace([0.0, 0.0], [[1.0, 1.0], [0.0, 1.0]])

    def test_projection_idempotent(self):
        rng = np.random.default_rng(1)
        B, _ = np.linalg.qr(rng.standard_normal((4, 2)))
        plane = AffineSubspace(rng.standard_normal(4), B)
        y = rng.standard_normal(4)
        p = plane.project(y)
        assert np.allclose(plane.project(p), p, atol=1e-12)

    def test_basis_from_normals(self):
        plane = AffineSubspace.from_normals([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        B = plane.orthonormal_basis()
        assert B.shape == (3, 2)
        assert np.allclose(B.T @ B, np.eye(2), atol=1e-12)
        assert np.allclose(B.T @ np.array([1.0, 0.0, 0.0]), 0.0, atol=1e-12)


class TestProjectSublevel:
    def test_ball_constraint(self):
        ball = MaxQuadratics.from_pieces([(2 * np.eye(2), np.zeros(2), -1.0)])
        p = project_sublevel(ball, [2.0, 0.0], tol=1e-10)
        assert np.allclose(p, [1.0, 0.0], atol=1e-9)

    def test_halfspace(self):
        half = MaxQuadratics.from_pieces([(np.zeros((2, 2)), np.array([1.0, 0.0]), 0.0)])
        p = project_sublevel(half, [1.0, 1.0], tol=1e-10)
        assert np.allclose(p, [0.0, 1.0], atol=1e-9)

    def test_two_parabola_region_from_above(self):
        # oracle-derived via 2-d grid search (spacing 1e-4): nearest feasible
        # point to (0, 2) is (0, 0.8) on the upper parabola
        from proxsmooth.problems import get_problem

        region = get_problem("parabolas2d").xset
        p = project_sublevel(region.constraints, [0.0, 2.0], tol=1e-10)
        xs = np.arange(-1.0, 1.0 + 1e-4, 1e-4)
        ys = np.arange(0.0, 1.0 + 1e-4, 1e-4)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        feas = pts[(pts[:, 0] ** 2 <= pts[:, 1])
                   & (pts[:, 1] <= 0.2 * pts[:, 0] ** 2 + 0.8)]
        d = np.sum((feas - np.array([0.0, 2.0])) ** 2, axis=1)
        oracle = feas[int(np.argmin(d))]
        assert np.linalg.norm(p - oracle) < 2e-4
        assert np.allclose(p, [0.0, 0.8], atol=1e-9)

    def test_infeasible_set(self):
        bad = MaxQuadratics.from_pieces([(2 * np.eye(2), np.zeros(2), 1.0)])
        with pytest.raises(InfeasibleSet):
            project_sublevel(bad, [0.0, 0.0])

    def test_sublevel_set_object(self):
        ball = MaxQuadratics.from_pieces([(2 * np.eye(3), np.zeros(3), -1.0)])
        S = ConvexSublevelSet(3, quadratic=ball)
        assert S.contains([0.5, 0.0, 0.0])
        assert not S.contains([2.0, 0.0, 0.0])
        p = S.project([2.0, 0.0, 0.0])
        assert np.allclose(p, [1.0, 0.0, 0.0], atol=1e-9)
        assert np.allclose(S.slater_point(), [0.0, 0.0, 0.0], atol=1e-12)


class TestTubeProperties:
    def test_lipschitz_projector(self):
        # on the r-tube of the unit sphere the projector is 1/(1-r)-Lipschitz
        rng = np.random.default_rng(7)
        s = UnitSphere(3)
        r = 0.5
        ratio = 1.0 / (1.0 - r)
        for _ in range(10_000):
            u = s.random_point(rng) * (1.0 + rng.uniform(-r, r))
            v = s.random_point(rng) * (1.0 + rng.uniform(-r, r))
            lhs = np.linalg.norm(s.project(u) - s.project(v))
            assert lhs <= ratio * np.linalg.norm(u - v) + 1e-10

    def test_single_valued_and_idempotent(self):
        rng = np.random.default_rng(8)
        s = UnitSphere(4)
        for _ in range(100):
            y = s.random_point(rng) * (1.0 + rng.uniform(-0.9, 0.9))
            p1 = s.project(y)
            p2 = s.project(y)
            assert np.array_equal(p1, p2)
            assert np.allclose(s.project(p1), p1, atol=1e-12)
