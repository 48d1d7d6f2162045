"""Exception types shared across the package."""


class ProxSmoothError(Exception):
    """Base class for all package-specific errors."""


# -- geometry --------------------------------------------------------------

class ZeroVector(ProxSmoothError):
    """Radial projection of the origin onto a sphere is undefined."""


class OutsideTube(ProxSmoothError):
    """Query point lies outside the single-valued projection tube."""


class InfeasibleSet(ProxSmoothError):
    """The constraint set is empty."""


# -- models ----------------------------------------------------------------

class MissingCompositeStructure(ProxSmoothError):
    """Prox-linear model requested on an objective without (h, c) structure."""


# -- approximations ---------------------------------------------------------

class InfeasibleBasepoint(ProxSmoothError):
    """Basepoint of a local set approximation is not in the constraint set."""


class OutsideApprox(ProxSmoothError):
    """Retraction argument does not lie in the local approximation set."""


class OutsideRadius(ProxSmoothError):
    """Retraction argument lies outside the declared retraction radius."""


# -- subsolver ---------------------------------------------------------------

class NoConvergence(ProxSmoothError):
    """Iteration cap reached before the certified tolerance."""


class NoSlaterPoint(ProxSmoothError):
    """No strictly feasible point available for a dual-bisection solve."""


# -- driver ------------------------------------------------------------------

class InvalidSchedule(ProxSmoothError):
    """Stepsize schedule violates the preconditions of the chosen guarantee."""


class InvalidConstants(ProxSmoothError):
    """Constants handed to a schedule or bound formula are inconsistent."""


class InvalidWeights(ProxSmoothError):
    """Iterate-sampling weights are degenerate (some beta_t <= gamma)."""


class FeasibilityError(ProxSmoothError):
    """A logged iterate violates the feasibility tolerance."""


# -- problems ----------------------------------------------------------------

class UnknownProblem(ProxSmoothError):
    """Requested problem id is not registered."""
