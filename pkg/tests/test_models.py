import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsmooth.errors import MissingCompositeStructure
from proxsmooth.models import (
    ModelFamily,
    ObjectiveConstants,
    StochasticObjective,
    expected_model_value,
    model_subgradient,
    model_value,
    verify_one_sided_accuracy,
)
from proxsmooth.problems import get_problem

QUARTIC = get_problem("quartic1d", sigma=0.0)
NOISY = get_problem("quartic1d")


def x(v):
    return np.array([v])


class TestModelValue:
    def test_subgradient_touches_at_base(self):
        val = model_value(QUARTIC.objective, "subgrad", x(0.5), x(0.5), 0.0)
        assert val == pytest.approx(0.75, abs=0)

    def test_subgradient_affine_extrapolation(self):
        # G = 2x * sign(x^2-1) = -1 at x=0.5, so the model at y=1.25 hits 0
        val = model_value(QUARTIC.objective, "subgrad", x(0.5), x(1.25), 0.0)
        assert val == pytest.approx(0.0, abs=1e-15)

    def test_clipped_clamps_to_zero(self):
        val = model_value(QUARTIC.objective, "clipped", x(0.5), x(2.0), 0.0)
        assert val == pytest.approx(0.0, abs=0)

    def test_proxpoint_is_loss(self):
        val = model_value(QUARTIC.objective, "proxpoint", x(0.5), x(1.5), 0.0)
        assert val == pytest.approx(1.25)

    def test_proxlin_matches_composite(self):
        # |c(x) + c'(x)(y-x)| with c = x^2-1: at x=0.5, y=1 -> |-0.75+1*0.5|
        val = model_value(QUARTIC.objective, "proxlin", x(0.5), x(1.0), 0.0)
        assert val == pytest.approx(0.25)

    def test_proxlin_needs_composite(self):
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: float(z[0]) ** 2,
            lambda z, a: np.array([2.0 * z[0]]),
            ObjectiveConstants(L=4.0, eta=0.0, mu=0.0, rho=0.0))
        with pytest.raises(MissingCompositeStructure):
            model_value(obj, "proxlin", x(0.5), x(1.0), None)


class TestModelSubgradient:
    def test_subgradient_constant_in_y(self):
        g1 = model_subgradient(QUARTIC.objective, "subgrad", x(0.5), x(3.0), 0.0)
        g2 = model_subgradient(QUARTIC.objective, "subgrad", x(0.5), x(-3.0), 0.0)
        assert g1[0] == g2[0] == pytest.approx(-1.0)

    def test_clipped_zero_on_flat_branch(self):
        # affine branch 0.75 - (y - 0.5) goes negative past y = 1.25
        g = model_subgradient(QUARTIC.objective, "clipped", x(0.5), x(3.0), 0.0)
        assert g[0] == 0.0

    def test_clipped_kink_tie_break_affine(self):
        g = model_subgradient(QUARTIC.objective, "clipped", x(0.5), x(1.25), 0.0)
        assert g[0] == pytest.approx(-1.0)

    def test_proxpoint_sign(self):
        obj = StochasticObjective(
            1, (None,), [1.0], lambda z, a: abs(float(z[0])),
            lambda z, a: np.array([np.sign(float(z[0]))]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        g = model_subgradient(obj, "proxpoint", x(0.0), x(2.0), None)
        assert g[0] == 1.0


class TestExpectedModelValue:
    def test_touches_f_at_base(self):
        for fam in ("proxpoint", "subgrad", "proxlin"):
            v = expected_model_value(NOISY.objective, fam, x(0.7), x(0.7))
            assert v == pytest.approx(NOISY.objective.expected_value(x(0.7)), abs=1e-15)

    def test_two_sample_slopes_average_out(self):
        obj = StochasticObjective(
            1, (-1.0, 1.0), [0.5, 0.5], lambda z, a: a * float(z[0]),
            lambda z, a: np.array([a]),
            ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))
        assert expected_model_value(obj, "subgrad", x(0.0), x(1.0)) == pytest.approx(0.0)

    def test_single_sample_equals_model_value(self):
        v1 = expected_model_value(QUARTIC.objective, "subgrad", x(0.3), x(0.9))
        v2 = model_value(QUARTIC.objective, "subgrad", x(0.3), x(0.9), 0.0)
        assert v1 == v2


class TestOneSidedAccuracy:
    def test_proxpoint_gap_is_negative_quadratic(self):
        gap = verify_one_sided_accuracy(NOISY.objective, "proxpoint", x(0.5), x(1.5))
        assert gap == pytest.approx(-0.5 * 2.0 * 1.0, abs=1e-12)

    def test_subgradient_example(self):
        gap = verify_one_sided_accuracy(QUARTIC.objective, "subgrad", x(0.5), x(1.0))
        assert gap <= 0.0

    def test_zero_at_base_for_touching_families(self):
        for fam in ("proxpoint", "subgrad", "proxlin"):
            gap = verify_one_sided_accuracy(NOISY.objective, fam, x(0.8), x(0.8))
            assert gap == pytest.approx(0.0, abs=1e-15)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=200, deadline=None)
    def test_one_sided_everywhere(self, xv, yv, _unused):
        for fam in NOISY.families:
            assert verify_one_sided_accuracy(NOISY.objective, fam, x(xv), x(yv)) <= 1e-10


class TestInvariantSweeps:
    def test_probability_validation(self):
        with pytest.raises(ValueError):
            StochasticObjective(
                1, (0.0, 1.0), [0.6, 0.6], lambda z, a: 0.0,
                lambda z, a: np.zeros(1),
                ObjectiveConstants(L=1.0, eta=0.0, mu=0.0, rho=0.0))

    @pytest.mark.parametrize("pid,kwargs", [
        ("quartic1d", {"sigma": 0.0}),
        ("quartic1d", {}),
        ("sphere-phase", {}),
        ("parabolas2d", {}),
    ])
    def test_model_invariants(self, pid, kwargs):
        from proxsmooth.verification import (
            check_model_exactness,
            check_model_lipschitz,
            check_model_one_sided,
            check_model_weak_convexity,
        )

        bundle = get_problem(pid, **kwargs)
        rng = np.random.default_rng(11)
        for family in bundle.families:
            for check in (check_model_one_sided, check_model_exactness,
                          check_model_weak_convexity, check_model_lipschitz):
                result = check(bundle, family, 800, rng)
                assert result.passed, result.row()

    def test_wrong_lipschitz_constant_fails(self):
        from proxsmooth.verification import check_model_lipschitz
        from proxsmooth.problems import fresh_problem
        import dataclasses

        bundle = fresh_problem("quartic1d")
        bundle.objective.constants = dataclasses.replace(
            bundle.objective.constants, L=bundle.objective.constants.L / 2)
        rng = np.random.default_rng(5)
        result = check_model_lipschitz(bundle, "subgrad", 2000, rng)
        assert not result.passed
