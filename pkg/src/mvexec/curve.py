"""Target inventory curve tracked by the running penalty.

The shipped curve is the implementation-shortfall schedule

    q*(t) = q0 * sinh(k (T - t)) / sinh(k T),    k = sqrt(gamma sigma^2 V / (2 eta)),

which starts at ``q0``, ends at zero and decays monotonically.  The
engine can evaluate it at global time (default) or renormalise it to the
remaining inventory and horizon at each slice boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class CurveParams:
    """Parameters of the implementation-shortfall curve."""

    q0: float       # shares
    gamma: float    # risk aversion, 1/currency
    sigma: float    # volatility per sqrt-minute
    V: float        # market volume per minute
    eta: float      # quadratic cost coefficient
    T: float        # horizon, minutes

    def __post_init__(self):
        for name in ("q0", "gamma", "sigma", "V", "eta", "T"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"curve.{name} must be strictly positive")

    @property
    def rate(self) -> float:
        """Decay constant k = sqrt(gamma sigma^2 V / (2 eta))."""
        return math.sqrt(self.gamma * self.sigma**2 * self.V / (2.0 * self.eta))


def target_inventory(t: float, params: CurveParams) -> float:
    """Target inventory q*(t) at global time t in [0, T]."""
    if t < 0 or t > params.T:
        raise DomainError(f"t={t:g} outside the curve horizon [0, {params.T:g}]")
    k = params.rate
    return params.q0 * math.sinh(k * (params.T - t)) / math.sinh(k * params.T)


def global_target(params: CurveParams) -> Callable[[float], float]:
    """Curve evaluated at global time; used by the solver and engine."""
    return lambda t: target_inventory(t, params)


def renormalized_target(params: CurveParams, q_now: float, t_now: float) -> Callable[[float], float]:
    """Curve rescaled to the remaining inventory and horizon.

    Starting a slice at ``(t_now, q_now)``, the target follows the same
    sinh shape over the remaining horizon [t_now, T], so unexecuted
    inventory is spread over the remaining slices.
    """
    if t_now < 0 or t_now >= params.T:
        raise DomainError(f"t_now={t_now:g} must lie in [0, T)")
    if q_now < 0:
        raise DomainError("q_now must be >= 0")
    k = params.rate
    denom = math.sinh(k * (params.T - t_now))

    def target(t: float) -> float:
        if t < t_now or t > params.T:
            raise DomainError(f"t={t:g} outside [{t_now:g}, {params.T:g}]")
        return q_now * math.sinh(k * (params.T - t)) / denom

    return target
