"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the library's own code paths: plain loops, no shared
helpers, so the production pipeline is checked against a second derivation.
"""

import math


def great_circle_vincenty(lon1, lat1, lon2, lat2, radius=6_371_000.0):
    """Great-circle distance via the Vincenty sphere (atan2) formula; an
    independent derivation from the haversine implementation under test."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    num = math.sqrt(
        (math.cos(p2) * math.sin(dl)) ** 2
        + (math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)) ** 2
    )
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return radius * math.atan2(num, den)


def nested_loop_join(services, user):
    """Timestep join by exhaustive pairwise comparison."""
    out = {}
    for up in user.trajectory.points:
        out[int(up.t)] = []
    for svc in services:
        for sp in svc.trajectory.points:
            for up in user.trajectory.points:
                if int(sp.t) == int(up.t):
                    out[int(up.t)].append((svc.id, sp))
    return out


def brute_force_pairs(services, user, r_s):
    """All (timestep, service) pairs strictly inside the search disk, found by
    scanning every combination with a from-scratch planar distance."""
    pairs = set()
    user_at = {int(p.t): p for p in user.trajectory.points}
    for svc in services:
        for sp in svc.trajectory.points:
            up = user_at.get(int(sp.t))
            if up is None:
                continue
            d = math.sqrt((up.x - sp.x) ** 2 + (up.y - sp.y) ** 2)
            if d < r_s:
                pairs.add((int(sp.t), svc.id))
    return pairs


def rle_runs(timesteps):
    """Maximal consecutive runs via run-length encoding over a bitmap."""
    if not timesteps:
        return []
    ts = sorted(set(timesteps))
    lo, hi = ts[0], ts[-1]
    bitmap = [t in set(ts) for t in range(lo, hi + 1)]
    runs, start = [], None
    for i, bit in enumerate(bitmap):
        if bit and start is None:
            start = lo + i
        elif not bit and start is not None:
            runs.append((start, lo + i - 1))
            start = None
    if start is not None:
        runs.append((start, hi))
    return runs


def brute_force_validated(services, user, r_s, w):
    """Validated runs per service: brute-force pairs + RLE + length filter."""
    pairs = brute_force_pairs(services, user, r_s)
    per_service = {}
    for t, sid in pairs:
        per_service.setdefault(sid, []).append(t)
    validated = {}
    surviving = set()
    for sid, ts in per_service.items():
        runs = [r for r in rle_runs(ts) if r[1] - r[0] + 1 >= w]
        if runs:
            validated[sid] = tuple(runs)
            for a, b in runs:
                for t in range(a, b + 1):
                    if (t, sid) in pairs:
                        surviving.add((t, sid))
    return validated, surviving


def value_iteration_chain(rewards_by_state, gamma, sweeps=200):
    """Value iteration for a deterministic chain MDP: state i always moves to
    i+1, the last state is terminal. rewards_by_state[i][a] = r(s_i, a).

    Returns the optimal action index per state.
    """
    n = len(rewards_by_state)
    values = [0.0] * (n + 1)  # values[n] is the terminal continuation (0)
    for _ in range(sweeps):
        for i in range(n - 1, -1, -1):
            values[i] = max(
                r + (gamma * values[i + 1] if i + 1 < n else 0.0)
                for r in rewards_by_state[i].values()
            )
    policy = {}
    for i in range(n):
        cont = gamma * values[i + 1] if i + 1 < n else 0.0
        best_a, best_q = None, -math.inf
        for a, r in rewards_by_state[i].items():
            q = r + cont
            if q > best_q:
                best_a, best_q = a, q
        policy[i] = best_a
    return policy
