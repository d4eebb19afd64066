"""Intelligent Driver Model longitudinal controller.

Pure, stateless acceleration law: callers own the integration loop.
"""
from __future__ import annotations

from dataclasses import dataclass

# Gap passed for free-road driving; makes the interaction term vanish
# without a second code path.
FREE_ROAD_GAP = 1e9


class DegenerateGap(ValueError):
    """Raised when the controller is queried with a non-positive gap.

    A non-positive gap means the vehicles already overlap; the caller must
    treat that as a collision instead of asking the IDM for an acceleration.
    """

    def __init__(self, gap: float):
        super().__init__(f"IDM queried with non-positive gap {gap}")
        self.gap = gap


@dataclass(frozen=True)
class IdmParams:
    """IDM parameter set; defaults are the paper's tuning.

    s0: minimum standstill distance (m)
    v_desired: desired cruise speed (m/s)
    a_max: maximum acceleration (m/s^2)
    b_max: maximum (physical) deceleration (m/s^2)
    b_safe: safe deceleration used in the gap law (m/s^2)
    rho: driver response time (s)
    """

    s0: float = 5.0
    v_desired: float = 130.0 / 3.6
    a_max: float = 3.0
    b_max: float = 5.0
    b_safe: float = 4.0
    rho: float = 0.25

    def __post_init__(self):
        for name in ("s0", "v_desired", "a_max", "b_max", "b_safe", "rho"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be strictly positive")
        if self.b_safe > self.b_max:
            raise ValueError("IdmParams.b_safe must not exceed b_max")


def desired_gap(v: float, v_lead: float, p: IdmParams) -> float:
    """Desired bumper-to-bumper gap toward a leader.

    max(s0, v*rho + a_max*rho^2/2 + (v + rho*a_max)^2/(2*b_safe)
        - v_lead^2/(2*b_max))
    """
    dynamic = (
        v * p.rho
        + 0.5 * p.a_max * p.rho**2
        + (v + p.rho * p.a_max) ** 2 / (2.0 * p.b_safe)
        - v_lead**2 / (2.0 * p.b_max)
    )
    return max(p.s0, dynamic)


def acceleration(v: float, gap: float, v_lead: float, p: IdmParams) -> float:
    """IDM acceleration for speed ``v`` with a leader ``gap`` metres ahead.

    a_max * (1 - (v/v_desired)^4 - (s*/gap)^2), clamped to [-b_max, a_max].
    Pass ``gap=FREE_ROAD_GAP`` when there is no leader.
    """
    if gap <= 0:
        raise DegenerateGap(gap)
    s_star = desired_gap(v, v_lead, p)
    a = p.a_max * (1.0 - (v / p.v_desired) ** 4 - (s_star / gap) ** 2)
    return min(p.a_max, max(-p.b_max, a))
