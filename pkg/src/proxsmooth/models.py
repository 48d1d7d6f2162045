"""Stochastic objectives with finite support and their one-sided models.

An objective is a finite mixture ``f(x) = sum_i p_i f(x, xi_i)`` with value
and subgradient oracles per atom, declared regularity constants, and an
optional composite structure ``f(x, xi) = h(c(x, xi), xi)`` enabling the
prox-linear model.  Four model families are supported:

* ``proxpoint``      f_x(y, xi) = f(y, xi)
* ``subgrad``        f_x(y, xi) = f(x, xi) + <G(x, xi), y - x>
* ``clipped``        f_x(y, xi) = max{f(x, xi) + <G(x, xi), y - x>, 0}
* ``proxlin``        f_x(y, xi) = h(c(x, xi) + J(x, xi)(y - x), xi)

Finite support keeps every conditional expectation an exact weighted sum,
so model accuracy claims can be asserted deterministically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import MissingCompositeStructure
from .geometry import as_vector


class ModelFamily(str, enum.Enum):
    PROX_POINT = "proxpoint"
    SUBGRADIENT = "subgrad"
    CLIPPED = "clipped"
    PROX_LINEAR = "proxlin"

    @classmethod
    def parse(cls, name: "ModelFamily | str") -> "ModelFamily":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown model family {name!r}") from None


@dataclass(frozen=True)
class ObjectiveConstants:
    """Declared regularity constants, validated by the invariant suite.

    L bounds the Lipschitz constant of f and of every model on a
    neighborhood of the constraint set; eta is the weak-convexity modulus of
    the models; mu the one-sided accuracy modulus; rho the weak-convexity
    modulus of the losses themselves.
    """

    L: float
    eta: float
    mu: float
    rho: float


@dataclass(frozen=True)
class CompositeStructure:
    """Convex-composite structure ``h(c(x, xi), xi)`` for prox-linear models.

    ``outer_value``/``outer_subgrad`` evaluate the convex outer function and
    one of its subgradients; ``inner_value``/``inner_jacobian`` evaluate the
    smooth map and its Jacobian (shape (m, d)).  Jacobians are hand-coded
    per problem.
    """

    outer_value: Callable[[np.ndarray, Any], float]
    outer_subgrad: Callable[[np.ndarray, Any], np.ndarray]
    inner_value: Callable[[np.ndarray, Any], np.ndarray]
    inner_jacobian: Callable[[np.ndarray, Any], np.ndarray]


class StochasticObjective:
    """Finite-support stochastic objective with per-atom oracles.

    Parameters
    ----------
    dim : ambient dimension.
    atoms : support of the sampling distribution (opaque to this class).
    probs : atom probabilities, summing to one within 1e-12.
    value_fn, subgrad_fn : per-atom oracles ``(x, atom) -> float / vector``.
    constants : declared (L, eta, mu, rho).
    composite : optional structure for the prox-linear family.
    lower_bounded_by_zero : whether ``f(., xi) >= 0`` pointwise, the
        precondition for exposing the clipped model.
    model_pieces1d : optional hook ``(family, x, atom) -> Piecewise1D`` giving
        a 1-d piecewise-quadratic representation of the model, consumed by
        exact scalar subsolvers.
    """

    def __init__(
        self,
        dim: int,
        atoms: Sequence,
        probs,
        value_fn: Callable[[np.ndarray, Any], float],
        subgrad_fn: Callable[[np.ndarray, Any], np.ndarray],
        constants: ObjectiveConstants,
        composite: CompositeStructure | None = None,
        lower_bounded_by_zero: bool = False,
        model_pieces1d: Callable[..., object] | None = None,
        label: str = "",
    ):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 1 or len(atoms) != probs.shape[0]:
            raise ValueError("atoms and probabilities must align")
        if abs(float(probs.sum()) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1 within 1e-12")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        self.dim = int(dim)
        self.atoms = tuple(atoms)
        self.probs = probs
        self.cum_probs = np.cumsum(probs)
        self._value_fn = value_fn
        self._subgrad_fn = subgrad_fn
        self.constants = constants
        self.composite = composite
        self.lower_bounded_by_zero = bool(lower_bounded_by_zero)
        self.model_pieces1d = model_pieces1d
        self.label = label

    # -- sampling ------------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def atom_index_from_uniform(self, u: float) -> int:
        """Inverse-CDF sampling; uniform in [0,1) maps to an atom index."""
        return int(np.searchsorted(self.cum_probs, u, side="right"))

    # -- oracles --------------------------------------------------------------

    def value(self, x, atom) -> float:
        return float(self._value_fn(as_vector(x, self.dim), atom))

    def subgrad(self, x, atom) -> np.ndarray:
        return as_vector(self._subgrad_fn(as_vector(x, self.dim), atom), self.dim)

    def expected_value(self, x) -> float:
        x = as_vector(x, self.dim)
        return float(sum(p * self._value_fn(x, a) for p, a in zip(self.probs, self.atoms)))

    def expected_subgrad(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        g = np.zeros(self.dim)
        for p, a in zip(self.probs, self.atoms):
            g += p * as_vector(self._subgrad_fn(x, a), self.dim)
        return g


def _affine_model(obj: StochasticObjective, x, y, atom) -> float:
    g = obj.subgrad(x, atom)
    return obj.value(x, atom) + float(g @ (as_vector(y, obj.dim) - as_vector(x, obj.dim)))


def _proxlin_inner(obj: StochasticObjective, x, y, atom) -> np.ndarray:
    if obj.composite is None:
        raise MissingCompositeStructure(
            "prox-linear model requires composite (h, c) structure"
        )
    x = as_vector(x, obj.dim)
    y = as_vector(y, obj.dim)
    c = np.atleast_1d(np.asarray(obj.composite.inner_value(x, atom), dtype=float))
    J = np.atleast_2d(np.asarray(obj.composite.inner_jacobian(x, atom), dtype=float))
    return c + J @ (y - x)


def model_value(obj: StochasticObjective, family, x, y, atom) -> float:
    """Evaluate the one-sided model ``f_x(y, atom)`` for the given family."""
    family = ModelFamily.parse(family)
    if family is ModelFamily.PROX_POINT:
        return obj.value(y, atom)
    if family is ModelFamily.SUBGRADIENT:
        return _affine_model(obj, x, y, atom)
    if family is ModelFamily.CLIPPED:
        return max(_affine_model(obj, x, y, atom), 0.0)
    u = _proxlin_inner(obj, x, y, atom)
    return float(obj.composite.outer_value(u, atom))


def model_subgradient(obj: StochasticObjective, family, x, y, atom) -> np.ndarray:
    """An element of the model's subdifferential in y.

    Deterministic tie-breaks: the clipped model returns the affine-branch
    gradient exactly at its kink; per-atom loss kinks follow the objective's
    own selection rule.
    """
    family = ModelFamily.parse(family)
    if family is ModelFamily.PROX_POINT:
        return obj.subgrad(y, atom)
    if family is ModelFamily.SUBGRADIENT:
        return obj.subgrad(x, atom)
    if family is ModelFamily.CLIPPED:
        a = _affine_model(obj, x, y, atom)
        if a < 0.0:
            return np.zeros(obj.dim)
        return obj.subgrad(x, atom)
    u = _proxlin_inner(obj, x, y, atom)
    J = np.atleast_2d(np.asarray(obj.composite.inner_jacobian(as_vector(x, obj.dim), atom), dtype=float))
    w = np.atleast_1d(np.asarray(obj.composite.outer_subgrad(u, atom), dtype=float))
    return J.T @ w


def expected_model_value(obj: StochasticObjective, family, x, y) -> float:
    """Exact weighted sum ``sum_i p_i f_x(y, xi_i)`` over the finite support."""
    family = ModelFamily.parse(family)
    return float(
        sum(p * model_value(obj, family, x, y, a) for p, a in zip(obj.probs, obj.atoms))
    )


def expected_model_subgradient(obj: StochasticObjective, family, x, y) -> np.ndarray:
    g = np.zeros(obj.dim)
    for p, a in zip(obj.probs, obj.atoms):
        g += p * model_subgradient(obj, family, x, y, a)
    return g


def verify_one_sided_accuracy(obj: StochasticObjective, family, x, y) -> float:
    """Gap ``E[f_x(y, xi)] - f(y) - (mu/2)||y - x||^2``; <= 0 for valid mu."""
    x = as_vector(x, obj.dim)
    y = as_vector(y, obj.dim)
    gap = expected_model_value(obj, family, x, y) - obj.expected_value(y)
    return gap - 0.5 * obj.constants.mu * float((y - x) @ (y - x))
