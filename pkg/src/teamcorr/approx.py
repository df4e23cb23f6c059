"""Quantized finite approximations of Witsenhausen's counterexample.

The continuous team has ``y1 ~ N(0, sigma^2)``, ``y2 = u1 + v`` with
``v ~ N(0, 1)`` and cost ``k^2 (u1 - y1)^2 + (u2 - u1)^2``.  After the
independent static reduction the DMs observe independent ``y1 ~ N(0, sigma^2)``
and ``y2 ~ N(0, 1)`` and the cost picks up the density ratio

    f(u1, y2) = exp(-(u1^2 - 2 y2 u1) / 2).

Measurements are quantized by uniform nearest-neighbour quantizers on
``[-M, M]``; mass outside the range is carried by the boundary cells.  The
finite team evaluates the reduced cost at cell representatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .classical import _dm_action_costs, best_response_search
from .model import MINIMIZE, DeterministicProfile, FiniteStaticTeam


class QuadratureError(RuntimeError):
    pass


# -- quantizers ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Quantizer:
    """Uniform nearest-neighbour quantizer; index 0 is the overflow symbol."""

    M: float
    levels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.levels)

    @property
    def width(self) -> float:
        return 2.0 * self.M / self.n

    @property
    def edges(self) -> np.ndarray:
        return -self.M + self.width * np.arange(self.n + 1)

    def cell(self, t) -> np.ndarray:
        """Cell index in ``0..n-1``; points outside the range go to the nearest boundary cell."""
        t = np.asarray(t, dtype=float)
        # Ties on a shared edge go to the lower cell.
        idx = np.ceil((t + self.M) / self.width).astype(np.int64) - 1
        return np.clip(idx, 0, self.n - 1)

    def quantize_index(self, t) -> np.ndarray:
        """1-based level index, or 0 for inputs outside ``[-M, M]``."""
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) > self.M, 0, self.cell(t) + 1)

    def __call__(self, t) -> np.ndarray:
        """Representative of ``t``: its level, or the nearest boundary level on overflow."""
        return self.levels[self.cell(t)]


def make_uniform_quantizer(M: float, n: int) -> Quantizer:
    if not (M > 0) or not math.isfinite(M):
        raise ValueError(f"range M must be positive, got {M!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"number of levels must be a positive integer, got {n!r}")
    n = int(n)
    width = 2.0 * M / n
    levels = -M + width * (np.arange(n) + 0.5)
    levels.setflags(write=False)
    return Quantizer(float(M), levels)


def action_grid(M: float, n: int) -> np.ndarray:
    """Lattice ``{j * 2M/n : |j| <= n/2}``: contains 0 and is nested when ``n`` doubles."""
    step = 2.0 * M / n
    half = n // 2
    return step * np.arange(-half, half + 1, dtype=float)


def _norm_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """P(a < Z <= b) for standard normal Z, accurate in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lower = special.ndtr(b) - special.ndtr(a)
    upper = special.ndtr(-a) - special.ndtr(-b)
    return np.where(a >= 0, upper, np.where(b <= 0, lower, 1.0 - special.ndtr(a) - special.ndtr(-b)))


def cell_masses(q: Quantizer, scale: float = 1.0, mean: float = 0.0) -> np.ndarray:
    """Gaussian ``N(mean, scale^2)`` mass per cell, tails folded into the boundary cells."""
    edges = (q.edges - mean) / scale
    edges = edges.copy()
    edges[0], edges[-1] = -np.inf, np.inf
    return _norm_mass(edges[:-1], edges[1:])


def overflow_mass(q: Quantizer, scale: float = 1.0) -> float:
    return float(2.0 * special.ndtr(-q.M / scale))


# -- the continuous instance ---------------------------------------------------

@dataclass(frozen=True)
class WitsenhausenInstance:
    k: float
    sigma: float

    def __post_init__(self):
        if not (self.k > 0 and self.sigma > 0):
            raise ValueError("k and sigma must be positive")

    def cost(self, y1, u1, u2):
        return self.k**2 * (u1 - y1) ** 2 + (u2 - u1) ** 2


def reduced_density(u1, y2):
    """Density ratio of y2 given u1 against the standard normal reference."""
    u1 = np.asarray(u1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    return np.exp(-(u1**2 - 2.0 * y2 * u1) / 2.0)


@dataclass(frozen=True, eq=False)
class WitsenhausenGrids:
    """Quantizers and action grids that define one finite approximation."""

    inst: WitsenhausenInstance
    qy1: Quantizer
    qy2: Quantizer
    grid_u1: np.ndarray
    grid_u2: np.ndarray

    def __post_init__(self):
        for name in ("grid_u1", "grid_u2"):
            g = np.array(getattr(self, name), dtype=float).reshape(-1)
            if g.size == 0:
                raise ValueError("action grids must be nonempty")
            if np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            g.setflags(write=False)
            object.__setattr__(self, name, g)

    @property
    def obs_sizes(self) -> tuple[int, int]:
        return (self.qy1.n, self.qy2.n)

    @property
    def act_sizes(self) -> tuple[int, int]:
        return (self.grid_u1.size, self.grid_u2.size)


@dataclass(frozen=True, eq=False)
class WitsenhausenTeam(FiniteStaticTeam):
    """Finite static team built from a quantized Witsenhausen instance."""

    grids: WitsenhausenGrids | None = None

    @property
    def inst(self) -> WitsenhausenInstance:
        return self.grids.inst

    @property
    def qy1(self) -> Quantizer:
        return self.grids.qy1

    @property
    def qy2(self) -> Quantizer:
        return self.grids.qy2

    @property
    def grid_u1(self) -> np.ndarray:
        return self.grids.grid_u1

    @property
    def grid_u2(self) -> np.ndarray:
        return self.grids.grid_u2


def build_finite_witsenhausen(
    inst: WitsenhausenInstance, qy1: Quantizer, qy2: Quantizer, grid_u1, grid_u2,
) -> WitsenhausenTeam:
    grids = WitsenhausenGrids(inst, qy1, qy2, grid_u1, grid_u2)
    m1 = cell_masses(qy1, inst.sigma)
    m2 = cell_masses(qy2, 1.0)
    prior = np.multiply.outer(m1, m2)
    y1 = qy1.levels[:, None, None, None]
    y2 = qy2.levels[None, :, None, None]
    u1 = grids.grid_u1[None, None, :, None]
    u2 = grids.grid_u2[None, None, None, :]
    with np.errstate(over="ignore"):
        dens = reduced_density(u1, y2)
    if not np.all(np.isfinite(dens)):
        raise ValueError("reduced density overflows; shrink the y2 range or the u1 grid")
    stage = inst.k**2 * (u1 - y1) ** 2 + (u2 - u1) ** 2  # (n1, 1, a1, a2)
    return WitsenhausenTeam(
        2, 1, grids.obs_sizes, grids.act_sizes, prior[None], (stage * dens)[None], MINIMIZE, grids=grids,
    )


@dataclass(frozen=True)
class WitsenhausenConfig:
    k: float = 0.2
    sigma: float = 5.0
    n_levels: int = 64
    M_factor: float = 4.0
    quad_panels: int = 2
    seed: int = 0


def standard_grids(
    inst: WitsenhausenInstance, n_levels: int, M_factor: float = 4.0, y2_range: float | None = None,
) -> WitsenhausenGrids:
    """y1 and both action grids on ``[-M_factor sigma, M_factor sigma]``; y2 by
    default on the action range widened by ``M_factor + 1`` noise standard deviations."""
    M1 = M_factor * inst.sigma
    grid = action_grid(M1, n_levels)
    M2 = float(np.max(np.abs(grid))) + M_factor + 1.0 if y2_range is None else float(y2_range)
    return WitsenhausenGrids(
        inst, make_uniform_quantizer(M1, n_levels), make_uniform_quantizer(M2, n_levels), grid, grid,
    )


def discretize(
    inst: WitsenhausenInstance, n_levels: int, M_factor: float = 4.0, y2_range: float | None = None,
) -> WitsenhausenTeam:
    g = standard_grids(inst, n_levels, M_factor, y2_range)
    return build_finite_witsenhausen(g.inst, g.qy1, g.qy2, g.grid_u1, g.grid_u2)


# -- profiles ------------------------------------------------------------------

def _nearest(grid: np.ndarray, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    idx = np.searchsorted(grid, values)
    idx = np.clip(idx, 1, len(grid) - 1) if len(grid) > 1 else np.zeros_like(idx)
    if len(grid) == 1:
        return idx
    left = grid[idx - 1]
    right = grid[idx]
    return np.where(np.abs(values - left) <= np.abs(right - values), idx - 1, idx)


def first_stage_profile(grids: WitsenhausenGrids | WitsenhausenTeam, u1_of_y1) -> np.ndarray:
    """Grid indices approximating ``u1 = u1_of_y1(y1)`` at the y1 cell representatives."""
    return _nearest(grids.grid_u1, u1_of_y1(grids.qy1.levels))


def second_stage_profile(grids: WitsenhausenGrids | WitsenhausenTeam, u2_of_y2) -> np.ndarray:
    return _nearest(grids.grid_u2, u2_of_y2(grids.qy2.levels))


def second_stage_best_response(team: WitsenhausenTeam, gamma1: np.ndarray) -> DeterministicProfile:
    placeholder = np.zeros(team.obs_sizes[1], dtype=np.int64)
    prof = DeterministicProfile((gamma1, placeholder))
    table = _dm_action_costs(team, prof, 1)
    return DeterministicProfile((gamma1, np.argmin(table, axis=1)))


def lift_profile(profile: DeterministicProfile, coarse: WitsenhausenTeam, fine: WitsenhausenTeam) -> DeterministicProfile:
    """Carry a coarse-grid profile to a finer nested discretization."""
    parent1 = coarse.qy1.cell(fine.qy1.levels)
    parent2 = coarse.qy2.cell(fine.qy2.levels)
    a1 = coarse.grid_u1[profile.maps[0][parent1]]
    a2 = coarse.grid_u2[profile.maps[1][parent2]]
    return DeterministicProfile((_nearest(fine.grid_u1, a1), _nearest(fine.grid_u2, a2)))


def solve_witsenhausen(
    team: WitsenhausenTeam,
    inst: WitsenhausenInstance | None = None,
    max_rounds: int = 500,
    seed: int = 0,
    restarts: int = 4,
    warm_start: DeterministicProfile | None = None,
) -> tuple[float, DeterministicProfile]:
    """Alternating stage optimization from several initial first-stage maps.

    Each start sets the second stage to its best response and then
    alternates exact best responses of the two stages until a fixed point.
    Starts: zero, the affine benchmark slope, identity, two-point signaling at
    a few amplitudes, seeded random staircases, and ``warm_start`` if given.
    """
    inst = team.inst if inst is None else inst
    sigma = inst.sigma
    lam, _ = affine_benchmark(inst)
    starts = [
        lambda y: 0.0 * y,
        lambda y: lam * y,
        lambda y: y,
    ]
    for a in (0.5 * sigma, sigma, 1.5 * sigma):
        starts.append(lambda y, a=a: a * np.sign(y))
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        step = rng.uniform(0.5 * sigma, 2.0 * sigma)
        offset = rng.uniform(0.0, step)
        starts.append(lambda y, s=step, o=offset: s * np.round((y - o) / s) + o)

    inits = [second_stage_best_response(team, first_stage_profile(team, fn)) for fn in starts]
    if warm_start is not None:
        inits.append(warm_start)

    best = None
    for init in inits:
        value, prof = best_response_search(team, init, max_rounds=max_rounds)
        if best is None or value < best[0]:
            best = (value, prof)
    return best


# -- continuous evaluation -----------------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    order: int = 8  # Gauss-Legendre nodes per panel
    panels: int = 2  # panels per quantizer cell at the first pass
    tol: float = 1e-8
    max_doublings: int = 6


@dataclass(frozen=True)
class ContinuousEvaluation:
    value: float
    error_bound: float
    first_stage: float
    second_stage: float
    panels: int


def _gl_cells(edges: np.ndarray, order: int, panels: int):
    """Nodes and weights of composite Gauss-Legendre rules, one row per cell."""
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    sub = (b - a) / panels
    starts = a[:, None] + sub[:, None] * np.arange(panels)[None, :]  # (cells, panels)
    nodes = starts[..., None] + (x[None, None, :] + 1.0) * sub[:, None, None] / 2.0
    weights = np.broadcast_to(w[None, None, :] * sub[:, None, None] / 2.0, nodes.shape)
    return nodes.reshape(len(a), -1), weights.reshape(len(a), -1)


def _gauss_pdf(x, mean=0.0, scale=1.0):
    z = (x - mean) / scale
    return np.exp(-0.5 * z * z) / (scale * math.sqrt(2.0 * math.pi))


def _tail_sq_moment(a: float, t0: float, scale: float, upper: bool) -> float:
    """E[(a - Y)^2 ; Y > t0] (upper) or E[(a - Y)^2 ; Y < t0] for Y ~ N(0, scale^2)."""
    z = t0 / scale
    if upper:
        p, m1, m2 = special.ndtr(-z), scale * _gauss_pdf(z), scale**2 * (special.ndtr(-z) + z * _gauss_pdf(z))
    else:
        p, m1, m2 = special.ndtr(z), -scale * _gauss_pdf(z), scale**2 * (special.ndtr(z) - z * _gauss_pdf(z))
    return float(a * a * p - 2.0 * a * m1 + m2)


def _evaluate_once(profile: DeterministicProfile, team: WitsenhausenGrids, order: int, panels: int):
    inst, q1, q2 = team.inst, team.qy1, team.qy2
    a1 = team.grid_u1[profile.maps[0]]  # action per y1 cell
    a2 = team.grid_u2[profile.maps[1]]  # action per y2 cell
    k2 = inst.k**2
    sigma = inst.sigma

    # first stage: interior by quadrature, tails in closed form
    nodes, weights = _gl_cells(q1.edges, order, panels)
    dens = _gauss_pdf(nodes, 0.0, sigma)
    interior = np.sum(weights * dens * (a1[:, None] - nodes) ** 2, axis=1)
    first = k2 * (interior.sum()
                  + _tail_sq_moment(a1[0], -q1.M, sigma, upper=False)
                  + _tail_sq_moment(a1[-1], q1.M, sigma, upper=True))

    # probability of each first-stage cell, grouped by distinct action
    p1 = cell_masses(q1, sigma)
    second = 0.0
    nodes2, weights2 = _gl_cells(q2.edges, order, panels)
    for a in np.unique(a1):
        pa = float(p1[a1 == a].sum())
        if pa == 0.0:
            continue
        mass = np.sum(weights2 * _gauss_pdf(nodes2, a, 1.0), axis=1)
        mass[0] += special.ndtr(-q2.M - a)
        mass[-1] += special.ndtr(-(q2.M - a))
        second += pa * float(np.sum(mass * (a2 - a) ** 2))
    return first + second, first, second


def extend_and_evaluate(
    profile: DeterministicProfile,
    grids: WitsenhausenGrids | WitsenhausenTeam,
    quad: QuadratureSpec = QuadratureSpec(),
) -> ContinuousEvaluation:
    """Cost of the extended policy ``u^i = gamma^i(Q^i(y^i))`` on the continuous model.

    The error bound is the change under panel doubling; doubling continues
    until it falls below ``quad.tol`` or the doubling cap is hit.
    """
    grids = grids.grids if isinstance(grids, WitsenhausenTeam) else grids
    if len(profile.maps) != 2:
        raise ValueError("profile must have two stages")
    for i in range(2):
        m = profile.maps[i]
        if m.shape != (grids.obs_sizes[i],) or m.min() < 0 or m.max() >= grids.act_sizes[i]:
            raise ValueError(f"stage {i + 1} map does not match the grids")
    panels = quad.panels
    prev = _evaluate_once(profile, grids, quad.order, panels)
    bound = math.inf
    for _ in range(quad.max_doublings):
        panels *= 2
        cur = _evaluate_once(profile, grids, quad.order, panels)
        bound = abs(cur[0] - prev[0])
        if bound <= quad.tol:
            return ContinuousEvaluation(float(cur[0]), float(bound), float(cur[1]), float(cur[2]), panels)
        prev = cur
    raise QuadratureError(f"quadrature error estimate {bound:.3e} above tolerance {quad.tol:.1e}")


# -- affine baseline -------------------------------------------------------------

def affine_cost(inst: WitsenhausenInstance, lam):
    """Cost of ``u1 = lam y1`` followed by the conditional-mean second stage."""
    lam = np.asarray(lam, dtype=float)
    s2 = inst.sigma**2
    return inst.k**2 * s2 * (lam - 1.0) ** 2 + lam**2 * s2 / (1.0 + lam**2 * s2)


def affine_benchmark(inst: WitsenhausenInstance) -> tuple[float, float]:
    """Best slope on [0, 2] by golden-section search, bracketed from a coarse scan."""
    grid = np.linspace(0.0, 2.0, 2001)
    vals = affine_cost(inst, grid)
    i = int(np.argmin(vals))
    if i == 0 or i == len(grid) - 1:
        return float(grid[i]), float(vals[i])
    res = optimize.minimize_scalar(
        lambda x: float(affine_cost(inst, x)),
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        options={"xtol": 1e-10},
    )
    lam = float(np.clip(res.x, 0.0, 2.0))
    return lam, float(affine_cost(inst, lam))


# -- pipeline ------------------------------------------------------------------

@dataclass(frozen=True)
class GridResult:
    levels: int
    finite_value: float
    continuous_value: float
    quad_bound: float
    profile: DeterministicProfile


def refinement_levels(levels: int, start: int = 16) -> list[int]:
    """Doubling sequence ending at ``levels``, e.g. 64 -> [16, 32, 64]."""
    seq = [levels]
    while seq[0] % 2 == 0 and seq[0] // 2 >= start:
        seq.insert(0, seq[0] // 2)
    return seq


def run_pipeline(config: WitsenhausenConfig, levels: list[int] | None = None) -> list[GridResult]:
    """Solve and evaluate on each grid, warm-starting from the previous (nested) grid."""
    inst = WitsenhausenInstance(config.k, config.sigma)
    levels = refinement_levels(config.n_levels) if levels is None else levels
    quad = QuadratureSpec(panels=config.quad_panels)
    results = []
    prev_team = prev_prof = None
    for n in levels:
        team = discretize(inst, n, config.M_factor)
        warm = None
        if prev_team is not None and n % prev_team.qy1.n == 0:
            warm = lift_profile(prev_prof, prev_team, team)
        value, prof = solve_witsenhausen(team, inst, seed=config.seed, warm_start=warm)
        ev = extend_and_evaluate(prof, team, quad)
        results.append(GridResult(n, value, ev.value, ev.error_bound, prof))
        prev_team, prev_prof = team, prof
    return results


__all__ = [
    "Quantizer", "make_uniform_quantizer", "action_grid", "cell_masses", "overflow_mass",
    "WitsenhausenInstance", "WitsenhausenGrids", "WitsenhausenTeam", "WitsenhausenConfig",
    "build_finite_witsenhausen", "standard_grids", "discretize", "reduced_density",
    "first_stage_profile", "second_stage_profile", "second_stage_best_response", "lift_profile",
    "solve_witsenhausen", "extend_and_evaluate", "QuadratureSpec", "ContinuousEvaluation",
    "QuadratureError", "affine_cost", "affine_benchmark", "run_pipeline", "refinement_levels",
    "GridResult",
]
