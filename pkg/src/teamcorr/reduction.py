"""Independent static reduction of finite sequential teams.

DM ``i`` acts in index order and observes ``y^i ~ g^i(. | w0, u^1, ..., u^{i-1})``.
Kernels are stored with the measurement on the last axis, i.e. ``g^i`` has
shape ``(|Omega0|, |U^1|, ..., |U^{i-1}|, |Y^i|)``.  Kernels that condition on
earlier *measurements* directly are not representable here.

With a reference measure ``Q^i`` dominating every row of ``g^i`` and
``f_i = g^i / Q^i``, the team is equivalent to a static one whose measurements
are independent of each other and of ``w0``, with cost
``c_s(w0, y, u) = c(w0, u) * prod_i f_i(y^i, w0, u^{<i})``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    INPUT_TOL,
    MINIMIZE,
    BehavioralPolicy,
    DeterministicProfile,
    FiniteStaticTeam,
    TeamParseError,
    TeamValidationError,
    _frozen,
    evaluate,
    strategic_measure_of_behavioral,
)


@dataclass(frozen=True, eq=False)
class SequentialFiniteTeam:
    num_dms: int
    omega0_size: int
    obs_sizes: tuple[int, ...]
    act_sizes: tuple[int, ...]
    prior0: np.ndarray  # P0 over Omega0
    kernels: tuple[np.ndarray, ...]
    cost: np.ndarray  # over (Omega0, U^1, ..., U^N)
    sense: str = MINIMIZE

    def __post_init__(self):
        n = self.num_dms
        obs = tuple(int(s) for s in self.obs_sizes)
        act = tuple(int(s) for s in self.act_sizes)
        if len(obs) != n or len(act) != n:
            raise TeamValidationError("obs_sizes/act_sizes", f"expected {n} entries each")
        p0 = _frozen(self.prior0).reshape(-1)
        if p0.shape != (self.omega0_size,) or np.any(p0 < 0) or abs(p0.sum() - 1) > INPUT_TOL:
            raise TeamValidationError("prior", "must be a distribution over Omega0")
        if len(self.kernels) != n:
            raise TeamValidationError("kernels", f"expected {n} kernels")
        kernels = []
        for i, k in enumerate(self.kernels):
            k = _frozen(k)
            shape = self.kernel_shape(i, obs, act)
            if k.size != int(np.prod(shape)):
                raise TeamValidationError(f"kernels[{i}]", f"{k.size} entries, expected shape {shape}")
            k = k.reshape(shape)
            if np.any(k < 0) or np.max(np.abs(k.sum(axis=-1) - 1.0)) > INPUT_TOL:
                raise TeamValidationError(f"kernels[{i}]", "rows must be probability vectors")
            kernels.append(k)
        cost = _frozen(self.cost)
        if cost.size != self.omega0_size * int(np.prod(act)):
            raise TeamValidationError("cost", "expected one entry per (omega0, u)")
        cost = cost.reshape((self.omega0_size, *act))
        if not np.all(np.isfinite(cost)):
            raise TeamValidationError("cost", "entries must be finite")
        object.__setattr__(self, "obs_sizes", obs)
        object.__setattr__(self, "act_sizes", act)
        object.__setattr__(self, "prior0", p0)
        object.__setattr__(self, "kernels", tuple(kernels))
        object.__setattr__(self, "cost", cost)

    def kernel_shape(self, i, obs=None, act=None) -> tuple[int, ...]:
        obs = self.obs_sizes if obs is None else obs
        act = self.act_sizes if act is None else act
        return (self.omega0_size, *act[:i], obs[i])


@dataclass(frozen=True, eq=False)
class ReductionArtifacts:
    reference_measures: tuple[np.ndarray, ...]  # Q^i over Y^i
    densities: tuple[np.ndarray, ...]  # f_i with the same layout as g^i


def static_reduce(team: SequentialFiniteTeam) -> tuple[FiniteStaticTeam, ReductionArtifacts]:
    """Reduce with ``Q^i`` uniform on the support of ``y^i`` over all contexts."""
    n = team.num_dms
    refs, dens = [], []
    for i, g in enumerate(team.kernels):
        support = g.reshape(-1, g.shape[-1]).max(axis=0) > 0
        q = support / support.sum()
        f = np.divide(g, q, out=np.zeros_like(g), where=support)
        refs.append(q)
        dens.append(f)

    prior = team.prior0
    for q in refs:
        prior = np.multiply.outer(prior, q)

    # c_s over (w, y^1..y^N, u^1..u^N); f_i lives on axes (w, u^1..u^{i-1}, y^i).
    shape = (team.omega0_size, *team.obs_sizes, *team.act_sizes)
    cs = team.cost.reshape((team.omega0_size,) + (1,) * n + team.act_sizes)
    for i, f in enumerate(dens):
        moved = np.moveaxis(f, -1, 1)  # (w, y^i, u^1..u^{i-1})
        target = [1] * (2 * n + 1)
        target[0] = team.omega0_size
        target[1 + i] = team.obs_sizes[i]
        for j in range(i):
            target[1 + n + j] = team.act_sizes[j]
        cs = cs * moved.reshape(target)
    cs = np.broadcast_to(cs, shape)
    reduced = FiniteStaticTeam(n, team.omega0_size, team.obs_sizes, team.act_sizes, prior, cs, team.sense)
    return reduced, ReductionArtifacts(tuple(refs), tuple(dens))


def dynamic_value(team: SequentialFiniteTeam, policy: BehavioralPolicy | DeterministicProfile) -> float:
    """Expected cost by chaining through the kernels in acting order."""
    if isinstance(policy, DeterministicProfile):
        kernels = [np.eye(team.act_sizes[i])[m] for i, m in enumerate(policy.maps)]
    else:
        kernels = list(policy.kernels)
    for i, k in enumerate(kernels):
        if k.shape != (team.obs_sizes[i], team.act_sizes[i]):
            raise TeamValidationError(f"policy[{i}]", "shape mismatch")

    def step(i, w, acts, weight):
        if weight == 0.0:
            return 0.0
        if i == team.num_dms:
            return weight * team.cost[(w, *acts)]
        total = 0.0
        row = team.kernels[i][(w, *acts)]
        for y in range(team.obs_sizes[i]):
            if row[y] == 0.0:
                continue
            for u in range(team.act_sizes[i]):
                p = kernels[i][y, u]
                if p:
                    total += step(i + 1, w, acts + (u,), weight * row[y] * p)
        return total

    return float(sum(step(0, w, (), team.prior0[w]) for w in range(team.omega0_size)))


def verify_reduction(
    team: SequentialFiniteTeam,
    artifacts: ReductionArtifacts,
    reduced: FiniteStaticTeam,
    profile: DeterministicProfile | BehavioralPolicy,
) -> tuple[float, float]:
    """``(J_dynamic, J_static)`` for the same policy in both formulations."""
    if reduced.shape != (team.omega0_size, *team.obs_sizes, *team.act_sizes):
        raise TeamValidationError("reduced", "shape does not match the sequential team")
    if isinstance(profile, DeterministicProfile):
        policy = BehavioralPolicy.from_profile(reduced, profile)
    else:
        policy = profile
    j_dyn = dynamic_value(team, policy)
    j_stat = evaluate(reduced, strategic_measure_of_behavioral(reduced, policy))
    return j_dyn, j_stat


def reconstruction_error(team: SequentialFiniteTeam, artifacts: ReductionArtifacts) -> float:
    """max |f_i Q^i - g^i| over all DMs and contexts."""
    return max(
        float(np.max(np.abs(f * q - g)))
        for f, q, g in zip(artifacts.densities, artifacts.reference_measures, team.kernels)
    )


def random_sequential_team(rng: np.random.Generator, max_dms: int = 3, max_size: int = 3) -> SequentialFiniteTeam:
    n = int(rng.integers(2, max_dms + 1))
    omega0 = int(rng.integers(1, max_size + 1))
    obs = tuple(int(s) for s in rng.integers(1, max_size + 1, size=n))
    act = tuple(int(s) for s in rng.integers(1, max_size + 1, size=n))
    kernels = []
    for i in range(n):
        shape = (omega0, *act[:i])
        k = rng.dirichlet(np.ones(obs[i]), size=int(np.prod(shape)))
        # sparsify some rows so supports and zero cells get exercised
        k = np.where(rng.random(k.shape) < 0.2, 0.0, k)
        k[k.sum(axis=1) == 0, 0] = 1.0
        k /= k.sum(axis=1, keepdims=True)
        kernels.append(k.reshape(*shape, obs[i]))
    return SequentialFiniteTeam(
        n, omega0, obs, act, rng.dirichlet(np.ones(omega0)), tuple(kernels),
        rng.normal(size=(omega0, *act)),
    )


def load_sequential_team(path: str | Path) -> SequentialFiniteTeam:
    """Problem schema plus ``kernels``: one flat array per DM, measurement index fastest."""
    try:
        data = json.loads(Path(path).read_text())
        return SequentialFiniteTeam(
            int(data["num_dms"]), int(data["omega0_size"]),
            tuple(data["obs_sizes"]), tuple(data["act_sizes"]),
            np.asarray(data["prior"], dtype=float),
            tuple(np.asarray(k, dtype=float) for k in data["kernels"]),
            np.asarray(data["cost"], dtype=float),
            str(data.get("sense", MINIMIZE)),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TeamParseError(f"{path}: {exc}") from exc
