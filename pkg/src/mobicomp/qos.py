"""Signal-strength and capacity model for moving services.

Strength follows an exponential attenuation coverage model: full signal (1.0)
inside a confident radius, then exp(-k * (pdis - R_c)) out to the sensing
radius R_s. Capacity is Shannon-style, (B/K) * log2(1 + strength). A composite
plan's QoS is the mean capacity of its component services.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ContractViolationError, InvalidInputError
from .trajectories import DistanceMode, Trajectory, TrajectoryPoint, distance


@dataclass(frozen=True)
class QosParams:
    """Attenuation parameters. The sensing radius doubles as the search radius
    used for spatial candidacy, so strength is always evaluated inside it."""

    confident_radius_rc: float
    decay_k: float
    sensing_radius_rs: float

    def __post_init__(self):
        if not (0 < self.confident_radius_rc <= self.sensing_radius_rs):
            raise InvalidInputError(
                "require 0 < confident_radius_rc <= sensing_radius_rs, got "
                f"R_c={self.confident_radius_rc}, R_s={self.sensing_radius_rs}"
            )
        if self.decay_k < 0:
            raise InvalidInputError(f"decay_k must be >= 0, got {self.decay_k}")

    @classmethod
    def defaults_for(cls, sensing_radius_rs: float) -> "QosParams":
        """Defaults when a scenario omits them: R_c = 0.25 * R_s and a decay
        factor chosen so strength falls to 0.01 at the sensing edge."""
        rc = 0.25 * sensing_radius_rs
        k = math.log(100.0) / (sensing_radius_rs - rc)
        return cls(confident_radius_rc=rc, decay_k=k, sensing_radius_rs=sensing_radius_rs)


@dataclass(frozen=True)
class QosValue:
    strength: float
    capacity: float

    def __post_init__(self):
        if not (0.0 < self.strength <= 1.0):
            raise InvalidInputError(f"strength must be in (0, 1], got {self.strength}")
        if self.capacity < 0:
            raise InvalidInputError(f"capacity must be >= 0, got {self.capacity}")


def _planar_foot(sp: TrajectoryPoint, a: TrajectoryPoint, b: TrajectoryPoint) -> tuple[float, float]:
    """Foot of the perpendicular from sp onto segment a->b, clamped to it."""
    vx, vy = b.x - a.x, b.y - a.y
    den = vx * vx + vy * vy
    if den == 0.0:
        return a.x, a.y
    s = ((sp.x - a.x) * vx + (sp.y - a.y) * vy) / den
    s = min(1.0, max(0.0, s))
    return a.x + s * vx, a.y + s * vy


def perpendicular_distance(
    service_pt: TrajectoryPoint,
    user_traj: Trajectory,
    t: float,
    mode: DistanceMode,
) -> float:
    """Distance from a service sample to the user's path segment at timestep t.

    The foot of the perpendicular is clamped to the segment between the user
    samples at t and t+1; the final timestep (no successor) degenerates to the
    point-to-point distance.
    """
    i = user_traj.index_of(t)
    a = user_traj.points[i]
    if i + 1 >= len(user_traj) or user_traj.points[i + 1].t != t + 1:
        return distance(service_pt, a, mode)
    b = user_traj.points[i + 1]
    if mode is DistanceMode.PLANAR_EUCLIDEAN:
        fx, fy = _planar_foot(service_pt, a, b)
        return math.hypot(service_pt.x - fx, service_pt.y - fy)
    # GPS: project in a local equirectangular frame around the segment start,
    # then measure great-circle distance to the clamped foot. Never worse than
    # the segment endpoints, which bounds frame-approximation error.
    scale = math.cos(math.radians(a.y))
    sx, sy = (service_pt.x - a.x) * scale, service_pt.y - a.y
    vx, vy = (b.x - a.x) * scale, b.y - a.y
    den = vx * vx + vy * vy
    s = 0.0 if den == 0.0 else min(1.0, max(0.0, (sx * vx + sy * vy) / den))
    foot = TrajectoryPoint(t=t, x=a.x + s * (b.x - a.x), y=a.y + s * (b.y - a.y))
    return min(
        distance(service_pt, foot, mode),
        distance(service_pt, a, mode),
        distance(service_pt, b, mode),
    )


def strength(pdis: float, params: QosParams) -> float:
    """Exponential attenuation strength in (0, 1] for a distance pdis <= R_s."""
    if pdis < 0:
        raise InvalidInputError(f"pdis must be non-negative, got {pdis}")
    if pdis > params.sensing_radius_rs:
        raise ContractViolationError(
            f"pdis={pdis} beyond sensing radius {params.sensing_radius_rs}; "
            "callers must pre-filter by spatial candidacy"
        )
    if pdis <= params.confident_radius_rc:
        return 1.0
    return math.exp(-params.decay_k * (pdis - params.confident_radius_rc))


def capacity(strength_value: float, bandwidth_b: float, max_concurrent_k: int) -> float:
    """Transmission capacity (B/K) * log2(1 + str) in bits/second."""
    if strength_value <= 0:
        raise InvalidInputError(f"strength must be positive, got {strength_value}")
    if bandwidth_b <= 0:
        raise InvalidInputError(f"bandwidth must be positive, got {bandwidth_b}")
    if max_concurrent_k < 1:
        raise InvalidInputError(f"max concurrent requests must be >= 1, got {max_concurrent_k}")
    return (bandwidth_b / max_concurrent_k) * math.log2(1.0 + strength_value)


def unit_capacity(bandwidth_b: float, max_concurrent_k: int) -> float:
    """Capacity at full strength; the per-service reward-normalisation ceiling."""
    return capacity(1.0, bandwidth_b, max_concurrent_k)


def reward_scale(services) -> float:
    """Universe-wide capacity ceiling used to map capacities into (0, 1].

    Falls back to 1.0 for an empty universe (no capacity rewards exist there).
    """
    caps = [unit_capacity(s.bandwidth_b, s.max_concurrent_k) for s in services]
    return max(caps) if caps else 1.0


def composite_qos(plan_capacities: list[float]) -> float:
    """Mean capacity over the composed services (dummy steps excluded)."""
    if not plan_capacities:
        raise InvalidInputError("composite QoS undefined for an empty composition")
    return math.fsum(plan_capacities) / len(plan_capacities)
