"""Finite static teams, strategic measures and classical policies.

All tensors are dense numpy arrays in row-major order.  A team with ``N``
decision makers (DMs) stores

* ``prior`` with shape ``(|Omega0|, |Y^1|, ..., |Y^N|)``
* ``cost`` with shape ``(|Omega0|, |Y^1|, ..., |Y^N|, |U^1|, ..., |U^N|)``

and a strategic measure has the same shape as ``cost``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

INPUT_TOL = 1e-12
MEASURE_TOL = 1e-10
MAX_CELLS = 10**8

MINIMIZE = "minimize"
MAXIMIZE = "maximize"


class TeamValidationError(ValueError):
    """Raised when a team, policy or measure violates its invariants."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class TeamParseError(ValueError):
    """Raised when a problem file cannot be parsed."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteStaticTeam:
    num_dms: int
    omega0_size: int
    obs_sizes: tuple[int, ...]
    act_sizes: tuple[int, ...]
    prior: np.ndarray
    cost: np.ndarray
    sense: str = MINIMIZE

    def __post_init__(self):
        object.__setattr__(self, "obs_sizes", tuple(int(s) for s in self.obs_sizes))
        object.__setattr__(self, "act_sizes", tuple(int(s) for s in self.act_sizes))
        n = self.num_dms
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise TeamValidationError("num_dms", f"must be a positive integer, got {n!r}")
        if self.omega0_size < 1:
            raise TeamValidationError("omega0_size", "must be positive")
        for name, sizes in (("obs_sizes", self.obs_sizes), ("act_sizes", self.act_sizes)):
            if len(sizes) != n:
                raise TeamValidationError(name, f"expected {n} entries, got {len(sizes)}")
            if any(s < 1 for s in sizes):
                raise TeamValidationError(name, "all sizes must be positive")
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise TeamValidationError("sense", f"must be 'minimize' or 'maximize', got {self.sense!r}")
        ncells = self.omega0_size * int(np.prod(self.obs_sizes)) * int(np.prod(self.act_sizes))
        if ncells > MAX_CELLS:
            raise TeamValidationError("cost", f"{ncells} cells exceeds the cap of {MAX_CELLS}")

        prior = _frozen(self.prior)
        if prior.shape != self.prior_shape:
            raise TeamValidationError("prior", f"shape {prior.shape} != {self.prior_shape}")
        if np.any(prior < 0) or not np.all(np.isfinite(prior)):
            raise TeamValidationError("prior", "entries must be finite and nonnegative")
        if abs(prior.sum() - 1.0) > INPUT_TOL:
            raise TeamValidationError("prior", f"entries sum to {prior.sum()!r}, not 1")
        cost = _frozen(self.cost)
        if cost.shape != self.shape:
            raise TeamValidationError("cost", f"shape {cost.shape} != {self.shape}")
        if not np.all(np.isfinite(cost)):
            raise TeamValidationError("cost", "entries must be finite")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "cost", cost)

    @property
    def prior_shape(self) -> tuple[int, ...]:
        return (self.omega0_size, *self.obs_sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.omega0_size, *self.obs_sizes, *self.act_sizes)

    @property
    def maximize(self) -> bool:
        return self.sense == MAXIMIZE

    def with_cost(self, cost: np.ndarray, sense: str | None = None) -> FiniteStaticTeam:
        return FiniteStaticTeam(
            self.num_dms, self.omega0_size, self.obs_sizes, self.act_sizes,
            self.prior, cost, self.sense if sense is None else sense,
        )

    def is_product_prior(self, tol: float = 1e-12) -> bool:
        """True when the prior factorizes over omega0 and every measurement."""
        marginals = []
        for axis in range(self.num_dms + 1):
            other = tuple(a for a in range(self.num_dms + 1) if a != axis)
            marginals.append(self.prior.sum(axis=other))
        product = marginals[0]
        for m in marginals[1:]:
            product = np.multiply.outer(product, m)
        return bool(np.max(np.abs(product - self.prior)) <= tol)


@dataclass(frozen=True, eq=False)
class StrategicMeasure:
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if np.any(probs < -MEASURE_TOL) or not np.all(np.isfinite(probs)):
            raise TeamValidationError("probs", "entries must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > MEASURE_TOL:
            raise TeamValidationError("probs", f"entries sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", probs)

    def marginal(self, team: FiniteStaticTeam) -> np.ndarray:
        """Marginal over (omega0, y), summing out all actions."""
        act_axes = tuple(range(team.num_dms + 1, 2 * team.num_dms + 1))
        return self.probs.sum(axis=act_axes)

    def is_valid_for(self, team: FiniteStaticTeam, tol: float = MEASURE_TOL) -> bool:
        if self.probs.shape != team.shape:
            return False
        return bool(np.max(np.abs(self.marginal(team) - team.prior)) <= tol)


@dataclass(frozen=True, eq=False)
class DeterministicProfile:
    """One map ``gamma^i: Y^i -> U^i`` per DM, stored as integer arrays."""

    maps: tuple[np.ndarray, ...]

    def __post_init__(self):
        maps = []
        for m in self.maps:
            a = np.array(m, dtype=np.int64).reshape(-1)
            a.setflags(write=False)
            maps.append(a)
        object.__setattr__(self, "maps", tuple(maps))

    def check(self, team: FiniteStaticTeam) -> None:
        if len(self.maps) != team.num_dms:
            raise TeamValidationError("maps", f"expected {team.num_dms} maps, got {len(self.maps)}")
        for i, m in enumerate(self.maps):
            if m.shape != (team.obs_sizes[i],):
                raise TeamValidationError(f"maps[{i}]", f"length {m.size} != |Y^{i + 1}| = {team.obs_sizes[i]}")
            if np.any(m < 0) or np.any(m >= team.act_sizes[i]):
                raise TeamValidationError(f"maps[{i}]", "action index out of range")

    def key(self) -> tuple[int, ...]:
        return tuple(int(v) for m in self.maps for v in m)

    def __eq__(self, other):
        if not isinstance(other, DeterministicProfile):
            return NotImplemented
        return len(self.maps) == len(other.maps) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"DeterministicProfile({[m.tolist() for m in self.maps]})"


@dataclass(frozen=True, eq=False)
class BehavioralPolicy:
    """One row-stochastic kernel ``Pi^i`` of shape ``(|Y^i|, |U^i|)`` per DM."""

    kernels: tuple[np.ndarray, ...]

    def __post_init__(self):
        kernels = []
        for i, k in enumerate(self.kernels):
            k = _frozen(np.atleast_2d(k))
            if k.ndim != 2 or np.any(k < 0) or not np.all(np.isfinite(k)):
                raise TeamValidationError(f"kernels[{i}]", "must be a nonnegative matrix")
            if np.max(np.abs(k.sum(axis=1) - 1.0)) > INPUT_TOL:
                raise TeamValidationError(f"kernels[{i}]", "rows must sum to 1")
            kernels.append(k)
        object.__setattr__(self, "kernels", tuple(kernels))

    @classmethod
    def from_profile(cls, team: FiniteStaticTeam, profile: DeterministicProfile) -> BehavioralPolicy:
        profile.check(team)
        return cls(tuple(np.eye(team.act_sizes[i])[m] for i, m in enumerate(profile.maps)))

    def check(self, team: FiniteStaticTeam) -> None:
        if len(self.kernels) != team.num_dms:
            raise TeamValidationError("kernels", f"expected {team.num_dms} kernels")
        for i, k in enumerate(self.kernels):
            if k.shape != (team.obs_sizes[i], team.act_sizes[i]):
                raise TeamValidationError(f"kernels[{i}]", f"shape {k.shape} != {(team.obs_sizes[i], team.act_sizes[i])}")


def _expand(kernel: np.ndarray, i: int, n: int) -> np.ndarray:
    # Place a (Y^i, U^i) matrix on axes (1+i, 1+n+i) of the full tensor.
    shape = [1] * (2 * n + 1)
    shape[1 + i] = kernel.shape[0]
    shape[1 + n + i] = kernel.shape[1]
    return kernel.reshape(shape)


def strategic_measure_of_behavioral(team: FiniteStaticTeam, policy: BehavioralPolicy) -> StrategicMeasure:
    policy.check(team)
    n = team.num_dms
    probs = team.prior.reshape(team.prior_shape + (1,) * n)
    for i, k in enumerate(policy.kernels):
        probs = probs * _expand(k, i, n)
    return StrategicMeasure(probs)


def strategic_measure_of(team: FiniteStaticTeam, profile: DeterministicProfile) -> StrategicMeasure:
    return strategic_measure_of_behavioral(team, BehavioralPolicy.from_profile(team, profile))


def evaluate(team: FiniteStaticTeam, measure: StrategicMeasure) -> float:
    """Expected cost (or reward) ``sum P * c``; the sense flag is ignored."""
    if not measure.is_valid_for(team):
        raise TeamValidationError("measure", "not a strategic measure for this team")
    return float(np.sum(measure.probs * team.cost))


def profile_value(team: FiniteStaticTeam, profile: DeterministicProfile) -> float:
    """Direct sum ``sum mu(w, y) c(w, y, gamma(y))`` without building the measure."""
    profile.check(team)
    grids = np.meshgrid(*[np.arange(s) for s in team.prior_shape], indexing="ij")
    acts = tuple(profile.maps[i][grids[1 + i]] for i in range(team.num_dms))
    return float(np.sum(team.prior * team.cost[(*grids, *acts)]))


# -- serialization -----------------------------------------------------------

def team_from_dict(data: dict) -> FiniteStaticTeam:
    try:
        n = int(data["num_dms"])
        omega0 = int(data["omega0_size"])
        obs = [int(s) for s in data["obs_sizes"]]
        act = [int(s) for s in data["act_sizes"]]
        sense = str(data.get("sense", MINIMIZE))
        prior = np.asarray(data["prior"], dtype=float)
        cost = np.asarray(data["cost"], dtype=float)
        depends_on_y = bool(data.get("cost_depends_on_y", True))
    except KeyError as exc:
        raise TeamParseError(f"missing key {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise TeamParseError(f"malformed field: {exc}") from exc
    if len(obs) != n or len(act) != n:
        raise TeamValidationError("obs_sizes/act_sizes", f"expected {n} entries each")
    prior_shape = (omega0, *obs)
    if prior.size != int(np.prod(prior_shape)):
        raise TeamValidationError("prior", f"{prior.size} entries, expected {int(np.prod(prior_shape))}")
    prior = prior.reshape(prior_shape)
    if depends_on_y:
        shape = (omega0, *obs, *act)
        if cost.size != int(np.prod(shape)):
            raise TeamValidationError("cost", f"{cost.size} entries, expected {int(np.prod(shape))}")
        cost = cost.reshape(shape)
    else:
        short = (omega0, *act)
        if cost.size != int(np.prod(short)):
            raise TeamValidationError("cost", f"{cost.size} entries, expected {int(np.prod(short))}")
        cost = cost.reshape((omega0,) + (1,) * n + tuple(act))
        cost = np.broadcast_to(cost, (omega0, *obs, *act))
    return FiniteStaticTeam(n, omega0, obs, act, prior, cost, sense)


def team_to_dict(team: FiniteStaticTeam) -> dict:
    return {
        "num_dms": team.num_dms,
        "omega0_size": team.omega0_size,
        "obs_sizes": list(team.obs_sizes),
        "act_sizes": list(team.act_sizes),
        "sense": team.sense,
        "prior": team.prior.ravel().tolist(),
        "cost": team.cost.ravel().tolist(),
        "cost_depends_on_y": True,
    }


def load_team(path: str | Path) -> FiniteStaticTeam:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TeamParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TeamParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise TeamParseError(f"{path}: top level must be an object")
    return team_from_dict(data)


def save_team(team: FiniteStaticTeam, path: str | Path) -> None:
    Path(path).write_text(json.dumps(team_to_dict(team)))


# -- stock problems ----------------------------------------------------------

def chsh_team() -> FiniteStaticTeam:
    """CHSH team: uniform binary observations, reward +1 iff u1 xor u2 == y1*y2, else -1."""
    y1, y2, u1, u2 = np.ogrid[0:2, 0:2, 0:2, 0:2]
    reward = np.where((u1 ^ u2) == (y1 * y2), 1.0, -1.0)
    return FiniteStaticTeam(2, 1, (2, 2), (2, 2), np.full((1, 2, 2), 0.25), reward[None], MAXIMIZE)


def random_team(
    rng: np.random.Generator,
    num_dms: int = 2,
    max_size: int = 3,
    product_prior: bool = True,
    sense: str = MINIMIZE,
    omega0_size: int | None = None,
) -> FiniteStaticTeam:
    """Random team with sizes drawn from ``1..max_size``; used by tests and benchmarks."""
    omega0 = int(rng.integers(1, max_size + 1)) if omega0_size is None else omega0_size
    obs = [int(s) for s in rng.integers(1, max_size + 1, size=num_dms)]
    act = [int(s) for s in rng.integers(1, max_size + 1, size=num_dms)]
    if product_prior:
        factors = [rng.dirichlet(np.ones(s)) for s in (omega0, *obs)]
        prior = factors[0]
        for f in factors[1:]:
            prior = np.multiply.outer(prior, f)
    else:
        prior = rng.dirichlet(np.ones(omega0 * int(np.prod(obs)))).reshape(omega0, *obs)
    prior = prior / prior.sum()
    cost = rng.normal(size=(omega0, *obs, *act))
    return FiniteStaticTeam(num_dms, omega0, obs, act, prior, cost, sense)


def negated(team: FiniteStaticTeam) -> FiniteStaticTeam:
    """Same team with negated cost and flipped sense."""
    return team.with_cost(-team.cost, MINIMIZE if team.maximize else MAXIMIZE)


def profile_from_lists(maps: Sequence[Sequence[int]]) -> DeterministicProfile:
    return DeterministicProfile(tuple(np.asarray(m, dtype=np.int64) for m in maps))
