"""Optimization over deterministic team policies.

Deterministic profiles are indexed by a mixed-radix counter over the cells
``(DM i, observation y^i)`` in DM-major order, with the first cell as the
most significant digit.  Counter order therefore coincides with the
lexicographic order of the flattened profile, which is what the tie-break
relies on.
"""

from __future__ import annotations

import numpy as np

from . import _parallel
from .linprog import OPTIMAL, LpProblem, solve_lp
from .model import DeterministicProfile, FiniteStaticTeam, profile_value

DEFAULT_PROFILE_CAP = 10**8
BLOCK = 1 << 14


class ProfileCapExceeded(RuntimeError):
    pass


def profile_count(team: FiniteStaticTeam) -> int:
    count = 1
    for obs, act in zip(team.obs_sizes, team.act_sizes):
        count *= act**obs
    return count


class _ProfileTable:
    """Vectorized evaluation of profiles given by their counter index."""

    def __init__(self, team: FiniteStaticTeam):
        self.team = team
        self.radices = np.array(
            [team.act_sizes[i] for i in range(team.num_dms) for _ in range(team.obs_sizes[i])],
            dtype=np.int64,
        )
        self.weights = np.ones(len(self.radices), dtype=np.int64)
        for pos in range(len(self.radices) - 2, -1, -1):
            self.weights[pos] = self.weights[pos + 1] * self.radices[pos + 1]
        offsets = np.cumsum([0, *team.obs_sizes])
        self.offsets = offsets
        # Restrict to the support of the prior; other cells never contribute.
        support = np.argwhere(team.prior > 0)
        self.support = support
        self.mass = team.prior[tuple(support.T)]
        self.obs_digit = [offsets[i] + support[:, 1 + i] for i in range(team.num_dms)]
        # Strides must describe the flattened C-order array, whatever the input layout.
        cost = np.ascontiguousarray(team.cost)
        self.cost_flat = cost.reshape(-1)
        strides = np.array(cost.strides) // cost.itemsize
        n = team.num_dms
        self.base = support @ strides[: n + 1]
        self.act_strides = strides[n + 1:]
        # Block length depends on the team only, never on the thread count.
        self.block = max(1, min(BLOCK, (1 << 22) // max(1, len(support))))

    def digits(self, idx: np.ndarray) -> np.ndarray:
        return (idx[:, None] // self.weights[None, :]) % self.radices[None, :]

    def values(self, start: int, stop: int) -> np.ndarray:
        idx = np.arange(start, stop, dtype=np.int64)
        dig = self.digits(idx)
        flat = np.broadcast_to(self.base, (len(idx), len(self.base))).copy()
        for i in range(self.team.num_dms):
            flat += dig[:, self.obs_digit[i]] * self.act_strides[i]
        return self.cost_flat[flat] @ self.mass

    def profile(self, index: int) -> DeterministicProfile:
        dig = self.digits(np.array([index], dtype=np.int64))[0]
        return DeterministicProfile(tuple(
            dig[self.offsets[i]:self.offsets[i + 1]] for i in range(self.team.num_dms)
        ))

    def index(self, profile: DeterministicProfile) -> int:
        dig = np.concatenate(profile.maps)
        return int(dig @ self.weights)


def all_profile_values(team: FiniteStaticTeam, cap: int = 10**5) -> np.ndarray:
    """Value of every deterministic profile, in counter order."""
    total = profile_count(team)
    if total > cap:
        raise ProfileCapExceeded(f"{total} profiles exceeds cap {cap}")
    table = _ProfileTable(team)
    blocks = [(s, min(s + table.block, total)) for s in range(0, total, table.block)]
    return np.concatenate(_parallel.ordered_map(lambda b: table.values(*b), blocks))


def enumerate_optimal(team: FiniteStaticTeam, cap: int = DEFAULT_PROFILE_CAP) -> tuple[float, DeterministicProfile]:
    """Exact optimum over all deterministic profiles.

    Ties go to the lexicographically smallest profile.  Blocks have a fixed
    size, so the result does not depend on the number of worker threads.
    """
    total = profile_count(team)
    if total > cap:
        raise ProfileCapExceeded(
            f"{total} deterministic profiles exceeds the cap of {cap}; "
            "use best_response_search for a person-by-person optimum instead"
        )
    table = _ProfileTable(team)
    sign = -1.0 if team.maximize else 1.0

    def block_best(bounds):
        vals = sign * table.values(*bounds)
        k = int(np.argmin(vals))
        return vals[k], bounds[0] + k

    blocks = [(s, min(s + table.block, total)) for s in range(0, total, table.block)]
    results = _parallel.ordered_map(block_best, blocks)
    best_val, best_idx = min(results, key=lambda r: (r[0], r[1]))
    return float(sign * best_val), table.profile(best_idx)


def _dm_action_costs(team: FiniteStaticTeam, profile: DeterministicProfile, i: int) -> np.ndarray:
    """Matrix ``(|Y^i|, |U^i|)`` of expected cost contributions when DM i deviates."""
    n = team.num_dms
    cost = team.cost
    # Fix the other DMs' actions one axis at a time, from the last to keep axis numbers valid.
    for j in range(n - 1, -1, -1):
        if j == i:
            continue
        act_axis = 1 + n + j
        obs_axis = 1 + j
        cost = np.moveaxis(cost, act_axis, -1)
        idx = profile.maps[j].reshape([-1 if a == obs_axis else 1 for a in range(cost.ndim - 1)] + [1])
        cost = np.take_along_axis(cost, np.broadcast_to(idx, cost.shape[:-1] + (1,)), axis=-1)[..., 0]
    # cost now has axes (omega0, y^1..y^N, u^i)
    weighted = cost * team.prior[..., None]
    other = tuple(a for a in range(n + 1) if a != 1 + i)
    return weighted.sum(axis=other)


def best_response_search(
    team: FiniteStaticTeam,
    init: DeterministicProfile,
    max_rounds: int = 1000,
    seed: int = 0,
    history: list[float] | None = None,
) -> tuple[float, DeterministicProfile]:
    """Person-by-person improvement from ``init``.

    Each round visits the DMs in order and replaces every entry of
    ``gamma^i`` by a best action with the other DMs held fixed.  The current
    action is kept when it is among the best, so the search stops exactly at
    a person-by-person optimal profile.  ``seed`` is accepted for signature
    symmetry with :func:`random_profile`; the search itself is deterministic.
    """
    init.check(team)
    maps = [m.copy() for m in init.maps]
    sign = -1.0 if team.maximize else 1.0
    value = profile_value(team, init)
    if history is not None:
        history.append(value)
    for _ in range(max_rounds):
        changed = False
        for i in range(team.num_dms):
            prof = DeterministicProfile(tuple(maps))
            table = sign * _dm_action_costs(team, prof, i)
            current = table[np.arange(len(maps[i])), maps[i]]
            best = table.min(axis=1)
            scale = np.maximum(1.0, np.abs(best))
            improve = current > best + 1e-12 * scale
            if np.any(improve):
                maps[i] = np.where(improve, np.argmin(table, axis=1), maps[i])
                changed = True
        value = profile_value(team, DeterministicProfile(tuple(maps)))
        if history is not None:
            history.append(value)
        if not changed:
            break
    return value, DeterministicProfile(tuple(maps))


def random_profile(team: FiniteStaticTeam, rng: np.random.Generator) -> DeterministicProfile:
    return DeterministicProfile(tuple(
        rng.integers(0, team.act_sizes[i], size=team.obs_sizes[i]) for i in range(team.num_dms)
    ))


def best_of_restarts(team: FiniteStaticTeam, restarts: int = 20, seed: int = 0, max_rounds: int = 1000):
    """Best person-by-person optimum over seeded random initial profiles."""
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        val, prof = best_response_search(team, random_profile(team, rng), max_rounds)
        if best is None or (val > best[0] if team.maximize else val < best[0]):
            best = (val, prof)
    return best


def randomization_no_gain_check(team: FiniteStaticTeam, cap: int = 10**5) -> tuple[float, float]:
    """Optimum over deterministic profiles versus the optimum over their mixtures.

    The mixture problem is the linear program over weights on every
    deterministic strategic measure (the extreme points of the common-randomness
    class), solved by the in-house simplex.
    """
    j_det, _ = enumerate_optimal(team, cap=cap)
    values = all_profile_values(team, cap=cap)
    sign = -1.0 if team.maximize else 1.0
    lp = LpProblem(sign * values, np.ones((1, values.size)), np.ones(1))
    sol = solve_lp(lp)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"mixture LP returned {sol.status}")
    j_conv = float(values @ sol.x)
    return j_det, j_conv
