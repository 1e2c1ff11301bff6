"""Ground-truth discovery of co-moving services and the optimal composition.

A scan-based map-reduce over one user trajectory: a temporal join keyed on
shared timesteps, a spatial filter against the search disk, then a reduce
phase that keeps only services paired over at least ``w`` strictly
consecutive timesteps. Deliberately index-free; parallelism comes from
splitting the user's timesteps into contiguous chunks handled by a thread
pool, with validation run once over the merged pairs so runs may cross chunk
boundaries.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import InvalidInputError
from .qos import QosParams, QosValue, capacity, perpendicular_distance, strength
from .trajectories import (
    DistanceMode,
    MovingService,
    TrajectoryPoint,
    UserTrajectory,
    distance,
)

DUMMY_SERVICE = "__dummy__"  # the "no valid service here" action


@dataclass(frozen=True)
class SpatialCandidatePair:
    """A service strictly inside the search disk at one user timestep."""

    user_timestep: int
    service_id: str
    distance: float
    qos: QosValue


@dataclass(frozen=True)
class CandidateTable:
    """Validated pairing of services against one user trajectory.

    ``per_timestep`` holds the surviving pairs grouped by user timestep (only
    timesteps with at least one pair appear); ``validated`` maps service id to
    its maximal consecutive runs [start, end], each of length >= w.
    """

    per_timestep: dict[int, tuple[SpatialCandidatePair, ...]]
    validated: dict[str, tuple[tuple[int, int], ...]]
    _by_step: dict[int, dict[str, SpatialCandidatePair]] = field(
        default=None, repr=False, compare=False
    )

    def __post_init__(self):
        lookup = {
            t: {p.service_id: p for p in pairs} for t, pairs in self.per_timestep.items()
        }
        object.__setattr__(self, "_by_step", lookup)

    def validated_at(self, t: int) -> dict[str, SpatialCandidatePair]:
        """Validated candidates covering timestep t, keyed by service id."""
        return self._by_step.get(t, {})


@dataclass(frozen=True)
class PlanStep:
    user_timestep: int
    chosen: str  # service id or DUMMY_SERVICE
    reward: float
    capacity: float


@dataclass(frozen=True)
class CompositionPlan:
    user_id: str
    steps: tuple[PlanStep, ...]

    def total_reward(self) -> float:
        return sum(s.reward for s in self.steps)

    def service_capacities(self) -> list[float]:
        return [s.capacity for s in self.steps if s.chosen != DUMMY_SERVICE]


def temporal_map(
    services: list[MovingService],
    user: UserTrajectory,
    timesteps: list[int] | None = None,
) -> dict[int, list[tuple[str, TrajectoryPoint]]]:
    """Left-outer join of service samples onto the user's timesteps.

    Every requested user timestep maps to the service samples sharing it;
    timesteps no service covers map to an empty list.
    """
    if timesteps is None:
        timesteps = [int(p.t) for p in user.trajectory.points]
    joined: dict[int, list[tuple[str, TrajectoryPoint]]] = {t: [] for t in timesteps}
    for svc in services:
        for p in svc.trajectory.points:
            bucket = joined.get(int(p.t))
            if bucket is not None:
                bucket.append((svc.id, p))
    return joined


def spatial_map(
    joined: dict[int, list[tuple[str, TrajectoryPoint]]],
    user: UserTrajectory,
    services_by_id: dict[str, MovingService],
    qos_params: QosParams,
    mode: DistanceMode,
) -> list[SpatialCandidatePair]:
    """Keep pairs strictly inside the search disk and attach their QoS.

    Disk membership uses the point-to-point distance at the shared timestep
    (strict ``< r_s``); the attached strength uses the clamped perpendicular
    distance to the user's path segment, which never exceeds the point
    distance, so the strength precondition holds by construction.
    """
    r_s = qos_params.sensing_radius_rs
    traj = user.trajectory
    pairs: list[SpatialCandidatePair] = []
    for t in sorted(joined):
        if not joined[t]:
            continue
        user_pt = traj.points[traj.index_of(t)]
        for sid, svc_pt in joined[t]:
            d = distance(user_pt, svc_pt, mode)
            if d < r_s:
                pdis = perpendicular_distance(svc_pt, traj, t, mode)
                s = strength(pdis, qos_params)
                svc = services_by_id[sid]
                cap = capacity(s, svc.bandwidth_b, svc.max_concurrent_k)
                pairs.append(
                    SpatialCandidatePair(
                        user_timestep=t,
                        service_id=sid,
                        distance=d,
                        qos=QosValue(strength=s, capacity=cap),
                    )
                )
    return pairs


def consecutive_runs(timesteps: list[int]) -> list[tuple[int, int]]:
    """Maximal runs of strictly consecutive integers, as inclusive spans."""
    if not timesteps:
        return []
    ts = sorted(timesteps)
    runs = []
    start = prev = ts[0]
    for t in ts[1:]:
        if t == prev + 1:
            prev = t
            continue
        runs.append((start, prev))
        start = prev = t
    runs.append((start, prev))
    return runs


def reduce_validate(pairs: list[SpatialCandidatePair], w: int) -> CandidateTable:
    """Group pairs by timestep and keep services paired over runs of >= w steps."""
    if w < 1:
        raise InvalidInputError(f"w must be >= 1, got {w}")
    by_service: dict[str, list[SpatialCandidatePair]] = {}
    for p in pairs:
        by_service.setdefault(p.service_id, []).append(p)

    validated: dict[str, tuple[tuple[int, int], ...]] = {}
    surviving: list[SpatialCandidatePair] = []
    for sid in sorted(by_service):
        svc_pairs = by_service[sid]
        runs = [
            r
            for r in consecutive_runs([p.user_timestep for p in svc_pairs])
            if r[1] - r[0] + 1 >= w
        ]
        if not runs:
            continue
        validated[sid] = tuple(runs)
        keep = {t for a, b in runs for t in range(a, b + 1)}
        surviving.extend(p for p in svc_pairs if p.user_timestep in keep)

    per_timestep: dict[int, list[SpatialCandidatePair]] = {}
    for p in surviving:
        per_timestep.setdefault(p.user_timestep, []).append(p)
    grouped = {
        t: tuple(sorted(per_timestep[t], key=lambda p: p.service_id))
        for t in sorted(per_timestep)
    }
    return CandidateTable(per_timestep=grouped, validated=validated)


def optimal_plan(
    table: CandidateTable,
    user: UserTrajectory,
    reward_scale: float = 1.0,
    dummy_reward: float = -1.0,
) -> CompositionPlan:
    """Best possible plan: per timestep, the validated candidate of maximum
    capacity (ties to the lexicographically smallest id), dummy elsewhere.

    Per-step rewards never couple timesteps once candidates are validated, so
    the per-step argmax maximises the plan total.
    """
    steps = []
    for p in user.trajectory.points:
        t = int(p.t)
        cands = table.validated_at(t)
        if not cands:
            steps.append(
                PlanStep(user_timestep=t, chosen=DUMMY_SERVICE, reward=dummy_reward, capacity=0.0)
            )
            continue
        best = min(cands.values(), key=lambda c: (-c.qos.capacity, c.service_id))
        steps.append(
            PlanStep(
                user_timestep=t,
                chosen=best.service_id,
                reward=best.qos.capacity / reward_scale,
                capacity=best.qos.capacity,
            )
        )
    return CompositionPlan(user_id=user.id, steps=tuple(steps))


def _chunks(items: list[int], n: int) -> list[list[int]]:
    """Split into n contiguous chunks with sizes differing by at most one."""
    n = min(n, len(items)) or 1
    base, extra = divmod(len(items), n)
    out, start = [], 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        out.append(items[start : start + size])
        start += size
    return out


def discover_parallel(
    services: list[MovingService],
    user: UserTrajectory,
    qos_params: QosParams,
    w: int,
    mode: DistanceMode,
    workers: int = 1,
) -> CandidateTable:
    """Full discovery pipeline; output is identical for any worker count.

    The map phases run per contiguous timestep chunk on a thread pool over
    shared immutable inputs; run validation happens once globally because
    consecutive runs may span chunk boundaries.
    """
    if workers < 1:
        raise InvalidInputError(f"workers must be >= 1, got {workers}")
    services_by_id = {s.id: s for s in services}
    timesteps = [int(p.t) for p in user.trajectory.points]

    def map_chunk(chunk: list[int]) -> list[SpatialCandidatePair]:
        joined = temporal_map(services, user, timesteps=chunk)
        return spatial_map(joined, user, services_by_id, qos_params, mode)

    chunks = _chunks(timesteps, workers)
    if workers == 1:
        merged = map_chunk(timesteps)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # gather in chunk order so the merge is scheduling-independent
            merged = [p for part in pool.map(map_chunk, chunks) for p in part]
    return reduce_validate(merged, w)


def table_plan_json(
    table: CandidateTable, plan: CompositionPlan, user: UserTrajectory
) -> list[dict]:
    """Per-timestep JSON rows combining the candidate table and the plan."""
    chosen_by_t = {s.user_timestep: s.chosen for s in plan.steps}
    rows = []
    for p in user.trajectory.points:
        t = int(p.t)
        cands = [
            {
                "service_id": c.service_id,
                "distance_m": c.distance,
                "strength": c.qos.strength,
                "capacity_bps": c.qos.capacity,
            }
            for c in table.per_timestep.get(t, ())
        ]
        rows.append({"timestep": t, "candidates": cands, "chosen": chosen_by_t[t]})
    return rows
