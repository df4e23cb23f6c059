"""Linear relaxations over strategic measures and the correlation hierarchy.

The non-signaling (NS) and local-Markov (M) programs are stated as conditional
equalities.  With the prior fixed and in product form they are linearized by
auxiliary conditional tables multiplied by the known prior:

* NS, for every DM k:  sum_{u^k} P(w, y, u) = R_k(y^{-k}, u^{-k}) mu(w, y)
* M,  for every DM k:  sum_{u^{-k}} P(w, y, u) = S_k(y^k, u^k) mu(w, y)

Cells with ``mu(w, y) = 0`` produce no conditional constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classical import enumerate_optimal
from .linprog import OPTIMAL, LpProblem, LpSolution, solve_lp
from .model import FiniteStaticTeam, StrategicMeasure

MAX_LP_ENTRIES = 5 * 10**7
CHAIN_TOL = 1e-7
CERT_TOL = 1e-7


class NonProductPriorError(ValueError):
    pass


class HierarchyViolation(AssertionError):
    def __init__(self, message: str, table):
        super().__init__(message)
        self.table = table


class ClassSolveError(RuntimeError):
    def __init__(self, cls: str, cause: Exception):
        super().__init__(f"[{cls}] {cause}")
        self.cls = cls


@dataclass(frozen=True, eq=False)
class RelaxationLp:
    """An LP over strategic measures plus the bookkeeping to read it back."""

    kind: str
    team: FiniteStaticTeam
    problem: LpProblem
    sign: float
    blocks: dict = field(default_factory=dict)  # variable block name -> (slice, shape)
    families: dict = field(default_factory=dict)  # constraint family name -> (row slice, index list)

    def measure_block(self, x: np.ndarray) -> np.ndarray:
        sl, shape = self.blocks["P"]
        return x[sl].reshape(shape)

    def value(self, sol: LpSolution) -> float:
        return self.sign * sol.objective

    def residual(self, probs: np.ndarray) -> float:
        """Constraint residual of ``probs`` with auxiliaries taken from its own conditionals."""
        x = self.auxiliaries_for(probs)
        return float(np.max(np.abs(self.problem.A @ x - self.problem.b)))

    def auxiliaries_for(self, probs: np.ndarray) -> np.ndarray:
        """Full variable vector for ``probs`` with auxiliaries read off its conditionals."""
        team = self.team
        n = team.num_dms
        x = np.zeros(self.problem.num_vars)
        sl, shape = self.blocks["P"]
        x[sl] = np.asarray(probs, dtype=float).reshape(-1)
        mu = team.prior
        pos = mu > 0
        # conditional P(u | w, y) where defined
        cond = np.divide(probs, mu.reshape(mu.shape + (1,) * n),
                         out=np.zeros_like(probs, dtype=float), where=pos.reshape(pos.shape + (1,) * n))
        for k in range(n):
            name = f"{'R' if self.kind == 'ns' else 'S'}{k}"
            bsl, bshape = self.blocks[name]
            if self.kind == "ns":
                marg = cond.sum(axis=1 + n + k)  # (w, y, u^{-k})
                table = _first_supported(marg, mu, keep_obs=[j for j in range(n) if j != k], n=n)
            else:
                other = tuple(1 + n + j for j in range(n) if j != k)
                marg = cond.sum(axis=other)  # (w, y, u^k)
                table = _first_supported(marg, mu, keep_obs=[k], n=n)
            x[bsl] = table.reshape(-1)
        return x


def _first_supported(marg: np.ndarray, mu: np.ndarray, keep_obs: list[int], n: int) -> np.ndarray:
    """Collapse (w, y, acts...) to (y_keep..., acts...) by averaging over supported cells."""
    pos = (mu > 0).astype(float)
    acts = marg.ndim - (n + 1)
    w = pos.reshape(pos.shape + (1,) * acts)
    drop = tuple([0] + [1 + j for j in range(n) if j not in keep_obs])
    num = (marg * w).sum(axis=drop)
    den = w.sum(axis=drop)
    return np.divide(num, den, out=np.full(num.shape, 1.0 / max(1, int(np.prod(num.shape[len(keep_obs):])))),
                     where=den > 0)


def _check_product(team: FiniteStaticTeam) -> None:
    if not team.is_product_prior():
        raise NonProductPriorError(
            "relaxation LPs need a product-form prior mu(w, y) = P0(w) prod Q^i(y^i); "
            "apply teamcorr.reduction.static_reduce to the sequential model first"
        )


def _build(team: FiniteStaticTeam, kind: str) -> RelaxationLp:
    _check_product(team)
    n = team.num_dms
    shape = team.shape
    nP = int(np.prod(shape))
    obs, act = team.obs_sizes, team.act_sizes
    blocks = {"P": (slice(0, nP), shape)}
    offset = nP
    aux_shapes = []
    for k in range(n):
        if kind == "ns":
            bshape = tuple(obs[j] for j in range(n) if j != k) + tuple(act[j] for j in range(n) if j != k)
            name = f"R{k}"
        else:
            bshape = (obs[k], act[k])
            name = f"S{k}"
        size = int(np.prod(bshape))
        blocks[name] = (slice(offset, offset + size), bshape)
        aux_shapes.append((name, bshape))
        offset += size
    nvar = offset

    mu = team.prior
    pidx = np.arange(nP).reshape(shape)
    rows: list[tuple[np.ndarray, np.ndarray]] = []  # (column indices, coefficients)
    rhs: list[float] = []
    families = {}

    def add_family(name, entries):
        start = len(rhs)
        labels = []
        for label, cols, coefs, b in entries:
            rows.append((cols, coefs))
            rhs.append(b)
            labels.append(label)
        families[name] = (slice(start, len(rhs)), labels)

    # (a) fixed (w, y)-marginal
    entries = []
    for wy in np.ndindex(*team.prior_shape):
        cols = pidx[wy].reshape(-1)
        entries.append((wy, cols, np.ones(cols.size), float(mu[wy])))
    add_family("marginal", entries)

    for k in range(n):
        name, bshape = aux_shapes[k]
        bsl, _ = blocks[name]
        aidx = np.arange(bsl.start, bsl.stop).reshape(bshape)
        others = [j for j in range(n) if j != k]
        entries = []
        for wy in np.ndindex(*team.prior_shape):
            m = float(mu[wy])
            if m <= 0:
                continue
            y = wy[1:]
            block = pidx[wy]  # axes u^1..u^N
            if kind == "ns":
                summed = np.moveaxis(block, k, -1)  # (u^{-k}..., u^k)
                for uo in np.ndindex(*[act[j] for j in others]):
                    cols = summed[uo].reshape(-1)
                    aux = aidx[tuple(y[j] for j in others) + uo]
                    entries.append(((wy, uo), np.append(cols, aux),
                                    np.append(np.ones(cols.size), -m), 0.0))
            else:
                summed = np.moveaxis(block, k, 0)  # (u^k, u^{-k}...)
                for uk in range(act[k]):
                    cols = summed[uk].reshape(-1)
                    aux = aidx[y[k], uk]
                    entries.append(((wy, uk), np.append(cols, aux),
                                    np.append(np.ones(cols.size), -m), 0.0))
        add_family(f"conditional{k}", entries)
        # normalization of the auxiliary conditional table
        nobs = len(bshape) // 2 if kind == "ns" else 1
        flat = aidx.reshape(int(np.prod(bshape[:nobs])), -1)
        entries = [(yk, flat[r], np.ones(flat.shape[1]), 1.0)
                   for r, yk in enumerate(np.ndindex(*bshape[:nobs]))]
        add_family(f"normalization{k}", entries)

    if len(rhs) * nvar > MAX_LP_ENTRIES:
        raise OverflowError(f"{kind} LP would have {len(rhs)} x {nvar} dense entries")
    A = np.zeros((len(rhs), nvar))
    for r, (cols, coefs) in enumerate(rows):
        np.add.at(A[r], cols, coefs)
    sign = -1.0 if team.maximize else 1.0
    c = np.zeros(nvar)
    c[:nP] = sign * team.cost.reshape(-1)
    return RelaxationLp(kind, team, LpProblem(c, A, np.array(rhs)), sign, blocks, families)


def build_ns_lp(team: FiniteStaticTeam) -> RelaxationLp:
    """LP over non-signaling strategic measures (leave-one-out conditions only)."""
    return _build(team, "ns")


def build_m_lp(team: FiniteStaticTeam) -> RelaxationLp:
    """LP over local-Markov strategic measures: P(u^k | w, y) = P(u^k | y^k)."""
    return _build(team, "m")


def solve_relaxation(lp: RelaxationLp) -> tuple[float, LpSolution]:
    sol = solve_lp(lp.problem)
    if sol.status != OPTIMAL:
        raise RuntimeError(f"{lp.kind} LP returned status {sol.status}")
    return lp.value(sol), sol


def ns_value(team: FiniteStaticTeam) -> float:
    return solve_relaxation(build_ns_lp(team))[0]


def m_value(team: FiniteStaticTeam) -> float:
    return solve_relaxation(build_m_lp(team))[0]


def centralized_bound(team: FiniteStaticTeam) -> float:
    """Value when every DM sees everything: sum_{w,y} mu * best_u c(w, y, u)."""
    flat = team.cost.reshape(team.prior_shape + (-1,))
    best = flat.max(axis=-1) if team.maximize else flat.min(axis=-1)
    return float(np.sum(team.prior * best))


def is_non_signaling(team: FiniteStaticTeam, measure: StrategicMeasure | np.ndarray, tol: float = 1e-8) -> bool:
    probs = measure.probs if isinstance(measure, StrategicMeasure) else np.asarray(measure)
    return build_ns_lp(team).residual(probs) <= tol


# -- dual certificates -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualReport:
    kind: str
    sense: str
    multipliers: dict  # family name -> array of multipliers
    bound: float  # certified bound on the team objective (lower for minimize, upper for maximize)
    lp_value: float
    max_violation: float  # max over cells of (L*(v, b) - c)_+
    ok: bool

    def to_text(self) -> str:
        lines = [
            "# teamcorr dual certificate v1",
            f"relaxation: {self.kind}",
            f"sense: {self.sense}",
            f"bound: {self.bound:.17g}",
            f"lp_value: {self.lp_value:.17g}",
            f"max_violation: {self.max_violation:.3e}",
            f"status: {'valid' if self.ok else 'INVALID'}",
        ]
        for name, values in self.multipliers.items():
            lines.append(f"[{name}]")
            lines.extend(f"{v:.17g}" for v in np.asarray(values).reshape(-1))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def dual_certificate(team: FiniteStaticTeam, lp: RelaxationLp, sol: LpSolution, tol: float = CERT_TOL) -> DualReport:
    """Check the dual solution and turn it into a machine-checkable bound.

    The dual of ``min c.x, Ax = b, x >= 0`` is ``max b.y, A^T y <= c``; any
    ``y`` meeting the inequality bounds the relaxation and hence the team
    problem (weak duality).
    """
    if sol.status != OPTIMAL:
        raise ValueError(f"dual certificate needs an optimal solution, got {sol.status}")
    A, b, c = lp.problem.A, lp.problem.b, lp.problem.c
    y = sol.y
    violation = float(max(0.0, np.max(A.T @ y - c)))
    b_dual = float(b @ y)
    multipliers = {name: y[sl] for name, (sl, _) in lp.families.items()}
    lp_value = lp.value(sol)
    bound = lp.sign * b_dual
    ok = violation <= tol and abs(bound - lp_value) <= tol
    return DualReport(lp.kind, team.sense, multipliers, bound, lp_value, violation, ok)


# -- hierarchy -----------------------------------------------------------------

def hierarchy_report(team: FiniteStaticTeam, include_quantum_xor: bool = True, tol: float = CHAIN_TOL):
    """Optimal values per correlation class, ordered from most to least restrictive.

    Returns ``[(class, value), ...]`` in the order classical, quantum (XOR-shaped
    teams only), ns, m, cj and raises :class:`HierarchyViolation` if the chain
    is not monotone within ``tol``.
    """
    from . import quantum

    table = []

    def run(cls, fn):
        try:
            table.append((cls, float(fn())))
        except Exception as exc:  # tag and propagate
            raise ClassSolveError(cls, exc) from exc

    run("classical", lambda: enumerate_optimal(team)[0])
    if include_quantum_xor:
        g = quantum.xor_weights(team)
        if g is not None:
            run("quantum", lambda: quantum.team_quantum_value(team, g))
    run("ns", lambda: ns_value(team))
    run("m", lambda: m_value(team))
    run("cj", lambda: centralized_bound(team))

    sgn = 1.0 if team.maximize else -1.0
    for (c1, v1), (c2, v2) in zip(table, table[1:]):
        if sgn * (v2 - v1) < -tol:
            raise HierarchyViolation(f"chain violated: {c1}={v1!r} vs {c2}={v2!r}", table)
    return table
