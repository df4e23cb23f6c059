"""Numerical checks of two constructive counterexamples.

Square wave: two DMs share ``y ~ U[0, 1]`` and both play ``1`` on
``B_n = U_k [(2k-2)/(2n), (2k-1)/(2n))`` and ``0`` elsewhere.  The induced
measures ``P_n`` converge setwise to ``P(a, A, b) = 1{a=b} m(A) / 2``, under
which ``u1`` and ``u2`` are no longer conditionally independent given ``y``.
All probabilities here are computed with exact rational interval arithmetic.

Frozen-state POMDP: a single uninformative observation, hidden bits
``(x1, x2)`` that never change and a third state bit that stores the previous
action.  The reward is ``1{x3 xor u = x1 x2}``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .linprog import OPTIMAL, LpProblem, LpSolution, solve_lp
from .model import DeterministicProfile, FiniteStaticTeam, strategic_measure_of

# -- square wave -----------------------------------------------------------------


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def _b1_measure(n: int, x: Fraction) -> Fraction:
    """Lebesgue measure of ``[0, x] ∩ B_{n,1}`` for ``0 <= x <= 1``."""
    scaled = x * n
    whole = math.floor(scaled)
    return Fraction(whole, 2 * n) + min(scaled - whole, Fraction(1, 2)) / n


@dataclass(frozen=True)
class SquareWaveSystem:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")

    def cells(self) -> list[tuple[Fraction, Fraction, int]]:
        """The intervals ``L_nk`` (action 1) and ``R_nk`` (action 0) in order."""
        out = []
        for k in range(1, self.n + 1):
            out.append((Fraction(2 * k - 2, 2 * self.n), Fraction(2 * k - 1, 2 * self.n), 1))
            out.append((Fraction(2 * k - 1, 2 * self.n), Fraction(2 * k, 2 * self.n), 0))
        return out

    def action(self, y) -> int:
        """Common action ``Q_n(y)`` of both DMs."""
        y = _frac(y)
        return 1 if (y * self.n - math.floor(y * self.n)) < Fraction(1, 2) else 0

    def b1_measure(self, s, t) -> Fraction:
        return _b1_measure(self.n, _frac(t)) - _b1_measure(self.n, _frac(s))


def _check_interval(s, t, hi=1):
    s, t = _frac(s), _frac(t)
    if not (0 <= s <= t <= hi):
        raise ValueError(f"interval [{s}, {t}] is not inside [0, {hi}]")
    return s, t


def square_wave_prob(n: int, a: int, interval, b: int, exact: bool = False):
    """``P_n(u1 = a, y in [s, t], u2 = b)`` for the square-wave policies."""
    s, t = _check_interval(*interval)
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError("actions must be 0 or 1")
    if a != b:
        p = Fraction(0)
    else:
        ones = SquareWaveSystem(n).b1_measure(s, t)
        p = ones if a == 1 else (t - s) - ones
    return p if exact else float(p)


def square_wave_limit(a: int, interval, b: int, exact: bool = False):
    s, t = _check_interval(*interval)
    p = (t - s) / 2 if a == b else Fraction(0)
    return p if exact else float(p)


def dyadic_intervals(m: int) -> list[tuple[Fraction, Fraction]]:
    """All intervals ``[i/2^m, j/2^m]`` with ``i < j``."""
    pts = [Fraction(i, 2**m) for i in range(2**m + 1)]
    return [(pts[i], pts[j]) for i in range(len(pts)) for j in range(i + 1, len(pts))]


def _max_deviation(n: int, intervals) -> Fraction:
    """Max over intervals and action pairs of ``|P_n - P|``.

    Off-diagonal pairs contribute 0 and the two diagonal pairs deviate by
    opposite amounts, so only ``g(t) - g(s)`` with ``g(x) = m([0, x] ∩ B_n) - x/2``
    is needed; ``g`` is evaluated once per distinct endpoint.
    """
    g = {}
    worst = Fraction(0)
    for s, t in intervals:
        for x in (s, t):
            if x not in g:
                g[x] = _b1_measure(n, x) - x / 2
        worst = max(worst, abs(g[t] - g[s]))
    return worst


def _cellwise_ci_residual(system: SquareWaveSystem) -> float:
    """Max violation of ``P_n(u1, u2 | cell) = P_n(u1 | cell) P_n(u2 | cell)`` over the partition."""
    worst = 0.0
    for _, _, act in system.cells():
        joint = np.zeros((2, 2))
        joint[act, act] = 1.0
        prod = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        worst = max(worst, float(np.max(np.abs(joint - prod))))
    return worst


@dataclass
class CiReport:
    deviations: list[tuple[int, Fraction]]  # (n, max |P_n - P| over the test intervals)
    bounds_ok: bool
    ci_residuals: list[tuple[int, float]]
    limit_conditional: float  # P(u1 = 1 | u2 = 1) under the limit
    limit_marginal: float  # P(u1 = 1) under the limit

    @property
    def ci_fails_in_limit(self) -> bool:
        return self.limit_conditional != self.limit_marginal

    def to_text(self) -> str:
        lines = ["square-wave conditional-independence check"]
        for n, d in self.deviations:
            lines.append(f"  n={n}: max deviation {float(d):.6g} (bound 1/(2n) = {1 / (2 * n):.6g})")
        lines.append(f"  deviation bounds hold: {self.bounds_ok}")
        lines.append(f"  max cellwise CI residual of P_n: {max(r for _, r in self.ci_residuals):.3g}")
        lines.append(f"  limit: P(u1=1 | u2=1) = {self.limit_conditional}, P(u1=1) = {self.limit_marginal}")
        lines.append(f"  conditional independence fails in the limit: {self.ci_fails_in_limit}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        return _deviation_csv(self.deviations)


def _deviation_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "max_deviation"])
    for n, d in rows:
        w.writerow([n, repr(float(d))])
    return buf.getvalue()


def verify_ci_failure(n_list=(1, 2, 4, 16, 64, 256, 1024), intervals=None) -> CiReport:
    """Setwise convergence of ``P_n`` plus the loss of conditional independence in the limit."""
    intervals = dyadic_intervals(6) if intervals is None else [tuple(map(_frac, iv)) for iv in intervals]
    for s, t in intervals:
        _check_interval(s, t)
    devs = [(int(n), _max_deviation(int(n), intervals)) for n in n_list]
    bounds_ok = all(d <= Fraction(1, 2 * n) for n, d in devs)
    ci = [(int(n), _cellwise_ci_residual(SquareWaveSystem(int(n)))) for n in n_list]
    # Under the limit u1 = u2 and u1 is uniform, independently of y.
    whole = (Fraction(0), Fraction(1))
    p11 = square_wave_limit(1, whole, 1, exact=True)
    p_u2 = sum(square_wave_limit(a, whole, 1, exact=True) for a in (0, 1))
    p_u1 = sum(square_wave_limit(1, whole, b, exact=True) for b in (0, 1))
    return CiReport(devs, bounds_ok, ci, float(p11 / p_u2), float(p_u1))


# -- four-action variant -----------------------------------------------------------


def four_symbol_prob(n: int, a: int, interval, b: int, exact: bool = False):
    """``P_n(u1 = a, y in [s, t], u2 = b)`` with ``y`` uniform on ``[0, 2]``.

    On ``[0, 1]`` both DMs play the square-wave bit; on ``(1, 2]`` they play
    ``2 +`` the square-wave bit of ``y - 1``.
    """
    s, t = _check_interval(*interval, hi=2)
    if a != b:
        p = Fraction(0)
    else:
        lo, hi = (s, min(t, Fraction(1))) if a < 2 else (max(s, Fraction(1)) - 1, t - 1)
        if hi <= lo:
            p = Fraction(0)
        else:
            ones = _b1_measure(n, hi) - _b1_measure(n, lo)
            p = (ones if a % 2 == 1 else (hi - lo) - ones) / 2
    return p if exact else float(p)


def four_symbol_limit(a: int, interval, b: int, exact: bool = False):
    s, t = _check_interval(*interval, hi=2)
    if a != b:
        p = Fraction(0)
    elif a < 2:
        p = max(Fraction(0), min(t, Fraction(1)) - s) / 4
    else:
        p = max(Fraction(0), t - max(s, Fraction(1))) / 4
    return p if exact else float(p)


def lc_surrogate_team() -> FiniteStaticTeam:
    """Both DMs observe which half of ``[0, 2]`` contains ``y``; four actions each."""
    prior = np.zeros((1, 2, 2))
    prior[0, 0, 0] = prior[0, 1, 1] = 0.5
    return FiniteStaticTeam(2, 1, (2, 2), (4, 4), prior, np.zeros((1, 2, 2, 4, 4)))


def lc_limit_measure() -> np.ndarray:
    """The limit measure projected onto the two-cell surrogate."""
    probs = np.zeros((1, 2, 2, 4, 4))
    for cell, acts in ((0, (0, 1)), (1, (2, 3))):
        for a in acts:
            probs[0, cell, cell, a, a] = 0.25
    return probs


@dataclass
class LcReport:
    n: int
    convergence: list[tuple[int, Fraction]]
    pn_product_residual: float  # P_n on its own 4n-cell partition is a product of kernels
    lp_status: str
    lp_solution: LpSolution
    mixture: list[tuple[float, DeterministicProfile]]
    mixture_residual: float
    excluded: bool = field(init=False)

    def __post_init__(self):
        self.excluded = self.lp_status != OPTIMAL

    def to_text(self) -> str:
        lines = ["four-symbol common-randomness check"]
        for n, d in self.convergence:
            lines.append(f"  n={n}: max deviation {float(d):.6g}")
        lines.append(f"  P_n product-kernel residual on its partition: {self.pn_product_residual:.3g}")
        lines.append("  surrogate: y reduced to the cells [0,1] and (1,2]; mixture weights independent of y")
        lines.append(f"  mixture LP status: {self.lp_status}")
        if self.excluded:
            lines.append("  the limit is not a mixture of deterministic profiles on the surrogate")
        else:
            lines.append("  the limit IS a mixture of deterministic profiles; exclusion not certified")
            for w, prof in self.mixture:
                maps = ", ".join("(" + ",".join(str(int(v)) for v in m) + ")" for m in prof.maps)
                lines.append(f"    weight {w:.6g}: gamma = {maps}")
            lines.append(f"  witness residual: {self.mixture_residual:.3g}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        return _deviation_csv(self.convergence)


def verify_lc_failure(n: int = 64, n_list=(1, 4, 16, 64)) -> LcReport:
    """Try to certify that the four-symbol limit lies outside the common-randomness class.

    The mixture LP has one weight per deterministic profile of the surrogate
    team and asks the mixed strategic measure to equal the limit measure.
    The report states the LP outcome as is: an optimal status means a
    witness mixture exists and the exclusion is *not* certified.
    """
    SquareWaveSystem(n)
    pts = [Fraction(i, 8) for i in range(17)]
    intervals = [(pts[i], pts[j]) for i in range(17) for j in range(i + 1, 17)]
    conv = []
    for m in sorted(set(int(v) for v in (*n_list, n))):
        worst = Fraction(0)
        for (s, t), a, b in itertools.product(intervals, range(4), range(4)):
            worst = max(worst, abs(four_symbol_prob(m, a, (s, t), b, exact=True)
                                   - four_symbol_limit(a, (s, t), b, exact=True)))
        conv.append((m, worst))

    # On each of its 4n cells, P_n is a point mass on (a, a): a product of two kernels.
    residual = 0.0
    for cell_action in (0, 1, 2, 3):
        joint = np.zeros((4, 4))
        joint[cell_action, cell_action] = 1.0
        residual = max(residual, float(np.max(np.abs(joint - np.outer(joint.sum(1), joint.sum(0))))))

    team = lc_surrogate_team()
    target = lc_limit_measure()
    profiles = [
        DeterministicProfile((np.array(g1), np.array(g2)))
        for g1 in itertools.product(range(4), repeat=2)
        for g2 in itertools.product(range(4), repeat=2)
    ]
    columns = np.stack([strategic_measure_of(team, p).probs.reshape(-1) for p in profiles], axis=1)
    support = team.prior.reshape(-1).repeat(16) > 0
    A = np.vstack([columns[support], np.ones((1, len(profiles)))])
    b = np.concatenate([target.reshape(-1)[support], [1.0]])
    sol = solve_lp(LpProblem(np.zeros(len(profiles)), A, b))
    mixture, mix_res = [], math.inf
    if sol.status == OPTIMAL:
        mixture = [(float(sol.x[j]), profiles[j]) for j in np.flatnonzero(sol.x > 1e-12)]
        mix_res = float(np.max(np.abs(columns @ sol.x - target.reshape(-1))))
    return LcReport(n, conv, residual, sol.status, sol, mixture, mix_res)


# -- frozen-state POMDP ------------------------------------------------------------


class UnsupportedVariant(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PomdpCounterexample:
    pi0: np.ndarray  # (2, 2) distribution of (x1, x2)
    gamma0: np.ndarray  # (2,) distribution of x3 at time 0
    lambda_kernel: np.ndarray  # (4, 4) kernel on (x1, x2) in row-major order
    horizon: int = 10_000

    def __post_init__(self):
        pi0 = np.array(self.pi0, dtype=float).reshape(2, 2)
        g0 = np.array(self.gamma0, dtype=float).reshape(2)
        lam = np.array(self.lambda_kernel, dtype=float).reshape(4, 4)
        for name, arr in (("pi0", pi0), ("gamma0", g0)):
            if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a probability distribution")
        if np.any(lam < 0) or np.max(np.abs(lam.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("lambda_kernel rows must be probability vectors")
        if np.max(np.abs(pi0.reshape(-1) @ lam - pi0.reshape(-1))) > 1e-12:
            raise ValueError("pi0 must be invariant under lambda_kernel")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be at least 1")
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "lambda_kernel", lam)
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def frozen(cls, pi0, gamma0=(0.5, 0.5), horizon: int = 10_000) -> PomdpCounterexample:
        return cls(np.asarray(pi0, dtype=float), np.asarray(gamma0, dtype=float), np.eye(4), horizon)

    @property
    def prod_one(self) -> float:
        """``pi0(x1 x2 = 1)``."""
        return float(self.pi0[1, 1])


def pomdp_classical_value(ce: PomdpCounterexample) -> tuple[float, str]:
    """Best long-run average reward of an admissible (open-loop) action sequence.

    The reward at step n is ``1{u_{n-1} xor u_n = x1 x2}``, so a constant
    sequence collects ``pi0(prod = 0)`` and an alternating one ``pi0(prod = 1)``.
    Ties report the constant pattern.
    """
    if not np.array_equal(ce.lambda_kernel, np.eye(4)):
        raise UnsupportedVariant("only the frozen-state (identity kernel) variant is supported")
    p1 = ce.prod_one
    p0 = 1.0 - p1
    return (p0, "constant") if p0 >= p1 else (p1, "alternating")


def pomdp_open_loop_value(ce: PomdpCounterexample, actions) -> float:
    """Exact average reward of a fixed action sequence over its length."""
    if not np.array_equal(ce.lambda_kernel, np.eye(4)):
        raise UnsupportedVariant("only the frozen-state (identity kernel) variant is supported")
    actions = [int(u) for u in actions]
    p1 = ce.prod_one
    total = 0.0
    # step 0: x3 ~ gamma0, reward when x3 xor u0 = prod
    for x3 in (0, 1):
        want = x3 ^ actions[0]
        total += ce.gamma0[x3] * (p1 if want else 1.0 - p1)
    for prev, cur in zip(actions, actions[1:]):
        total += p1 if prev ^ cur else 1.0 - p1
    return total / len(actions)


@dataclass
class WideSenseRun:
    average_reward: float
    actions: np.ndarray
    prod: int
    x3_initial: int


def pomdp_widesense_run(ce: PomdpCounterexample, T: int | None = None, seed: int = 0) -> WideSenseRun:
    """One episode of the clairvoyant realization ``u_n = u_{n-1} xor x1 x2``.

    ``x3_n`` holds the previous action (``x3_0`` is drawn from ``gamma0``) and
    the reward ``1{x3_n xor u_n = x1_n x2_n}`` is therefore always earned.
    """
    T = ce.horizon if T is None else int(T)
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = np.random.default_rng(seed)
    flat = int(rng.choice(4, p=ce.pi0.reshape(-1)))
    x3 = int(rng.choice(2, p=ce.gamma0))
    x3_initial = x3
    prod_initial = (flat >> 1) & flat & 1
    lam = ce.lambda_kernel
    rewards = 0
    actions = np.empty(T, dtype=np.int64)
    for t in range(T):
        prod = (flat >> 1) & flat & 1
        u = x3 ^ prod
        rewards += int((x3 ^ u) == prod)
        actions[t] = u
        x3 = u
        flat = int(rng.choice(4, p=lam[flat]))
    return WideSenseRun(rewards / T, actions, int(prod_initial), x3_initial)


def pomdp_widesense_sim(ce: PomdpCounterexample, T: int | None = None, seed: int = 0) -> float:
    """Average reward of the clairvoyant wide-sense realization; equals 1 exactly."""
    return pomdp_widesense_run(ce, T, seed).average_reward


def widesense_marginals(ce: PomdpCounterexample, episodes: int, T: int = 8, seed: int = 0) -> np.ndarray:
    """Empirical ``P(u_n = 1)`` for ``n < T`` over independent seeded episodes."""
    counts = np.zeros(T)
    for e in range(episodes):
        run = pomdp_widesense_run(ce, T, seed=int(np.random.SeedSequence([seed, e]).generate_state(1)[0]))
        counts += run.actions
    return counts / episodes


@dataclass
class PomdpReport:
    classical_value: float
    pattern: str
    widesense_value: float
    ratio: float

    def to_text(self) -> str:
        return "\n".join([
            "frozen-state POMDP",
            f"  admissible (classical) value: {self.classical_value:.6g} via the {self.pattern} sequence",
            f"  clairvoyant wide-sense value: {self.widesense_value:.6g}",
            f"  ratio: {self.ratio:.6g}",
        ])


def pomdp_report(ce: PomdpCounterexample, T: int | None = None, seed: int = 0) -> PomdpReport:
    cv, pattern = pomdp_classical_value(ce)
    ws = pomdp_widesense_sim(ce, T, seed)
    return PomdpReport(cv, pattern, ws, ws / cv if cv > 0 else math.inf)


__all__ = [
    "SquareWaveSystem", "square_wave_prob", "square_wave_limit", "dyadic_intervals", "verify_ci_failure",
    "CiReport", "four_symbol_prob", "four_symbol_limit", "lc_surrogate_team", "lc_limit_measure",
    "verify_lc_failure", "LcReport", "PomdpCounterexample", "UnsupportedVariant", "pomdp_classical_value",
    "pomdp_open_loop_value", "pomdp_widesense_run", "pomdp_widesense_sim", "widesense_marginals",
    "PomdpReport", "pomdp_report",
]
