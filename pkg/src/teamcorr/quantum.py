"""Quantum-correlated strategic measures and XOR teams.

A quantum strategy is a shared density matrix on ``C^{d_1} x ... x C^{d_N}``
plus, for every DM and every observation, a POVM indexed by the DM's actions.
Its strategic measure is

    P(w, y, u) = mu(w, y) * Tr[(M^{1,y^1}(u^1) x ... x M^{N,y^N}(u^N)) rho].

For two-DM XOR teams the optimal quantum value reduces to a bilinear problem
over unit vectors, solved here by alternating maximization with restarts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import _parallel
from .model import MAXIMIZE, FiniteStaticTeam, StrategicMeasure, TeamValidationError, evaluate

QTOL = 1e-10
MAX_DIM = 64
MAX_XOR_SIDE = 64
MAX_XOR_CLASSICAL = 20


def _hermitize(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    return (a + a.conj().T) / 2


def _min_eig(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(a).min())


@dataclass(frozen=True, eq=False)
class QuantumStrategy:
    dims: tuple[int, ...]
    rho: np.ndarray
    povms: tuple  # povms[i][y] is a sequence of d_i x d_i matrices indexed by action

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        total = int(np.prod(dims))
        if total > MAX_DIM:
            raise TeamValidationError("dims", f"product {total} exceeds {MAX_DIM}")
        raw = np.asarray(self.rho, dtype=complex)
        if raw.shape != (total, total):
            raise TeamValidationError("rho", f"shape {raw.shape} != {(total, total)}")
        if np.max(np.abs(raw - raw.conj().T)) > QTOL:
            raise TeamValidationError("rho", "not Hermitian")
        rho = _hermitize(raw)
        if abs(np.trace(rho).real - 1.0) > QTOL:
            raise TeamValidationError("rho", f"trace {np.trace(rho).real!r} != 1")
        if _min_eig(rho) < -QTOL:
            raise TeamValidationError("rho", "not positive semidefinite")
        if len(self.povms) != len(dims):
            raise TeamValidationError("povms", f"expected {len(dims)} DMs")
        povms = []
        for i, per_obs in enumerate(self.povms):
            d = dims[i]
            dm = []
            for y, elems in enumerate(per_obs):
                mats = []
                for u, m in enumerate(elems):
                    m = np.asarray(m, dtype=complex)
                    if m.shape != (d, d):
                        raise TeamValidationError(f"povms[{i}][{y}][{u}]", f"shape {m.shape} != {(d, d)}")
                    if np.max(np.abs(m - m.conj().T)) > QTOL:
                        raise TeamValidationError(f"povms[{i}][{y}][{u}]", "not Hermitian")
                    m = _hermitize(m)
                    if _min_eig(m) < -QTOL:
                        raise TeamValidationError(f"povms[{i}][{y}][{u}]", "not positive semidefinite")
                    mats.append(m)
                if np.max(np.abs(sum(mats) - np.eye(d))) > QTOL:
                    raise TeamValidationError(f"povms[{i}][{y}]", "elements do not sum to the identity")
                dm.append(tuple(mats))
            povms.append(tuple(dm))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "povms", tuple(povms))

    def conditional(self) -> np.ndarray:
        """Table ``P(u | y)`` with axes ``(y^1..y^N, u^1..u^N)``."""
        n = len(self.dims)
        obs = [len(p) for p in self.povms]
        act = [len(p[0]) for p in self.povms]
        out = np.zeros((*obs, *act))
        for y in itertools.product(*[range(s) for s in obs]):
            for u in itertools.product(*[range(s) for s in act]):
                op = reduce(np.kron, [self.povms[i][y[i]][u[i]] for i in range(n)])
                out[y + u] = np.trace(op @ self.rho).real
        return out


def evaluate_quantum(team: FiniteStaticTeam, qs: QuantumStrategy) -> tuple[StrategicMeasure, float]:
    if not team.is_product_prior():
        raise TeamValidationError("prior", "quantum evaluation expects a product-form prior")
    n = team.num_dms
    if len(qs.dims) != n:
        raise TeamValidationError("povms", f"strategy has {len(qs.dims)} DMs, team has {n}")
    for i in range(n):
        if len(qs.povms[i]) != team.obs_sizes[i] or len(qs.povms[i][0]) != team.act_sizes[i]:
            raise TeamValidationError(f"povms[{i}]", "observation/action counts do not match the team")
    cond = qs.conditional()
    probs = team.prior.reshape(team.prior_shape + (1,) * n) * cond[None]
    measure = StrategicMeasure(probs)
    return measure, evaluate(team, measure)


def projector(theta: float) -> np.ndarray:
    v = np.array([math.cos(theta), math.sin(theta)])
    return np.outer(v, v)


def chsh_reference_strategy() -> QuantumStrategy:
    """Maximally entangled qubit pair with the standard CHSH measurement angles."""
    rho = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            e = np.zeros((2, 2))
            e[a, b] = 1.0
            rho += 0.5 * np.kron(e, e)
    pi = math.pi
    dm1 = ((projector(0), projector(pi / 2)), (projector(pi / 4), projector(3 * pi / 4)))
    dm2 = ((projector(pi / 8), projector(5 * pi / 8)), (projector(7 * pi / 8), projector(3 * pi / 8)))
    return QuantumStrategy((2, 2), rho, (dm1, dm2))


def behavioral_as_quantum(kernels) -> QuantumStrategy:
    """One-dimensional Hilbert spaces: POVM elements are the kernel probabilities."""
    povms = tuple(
        tuple(tuple(np.array([[p]]) for p in row) for row in np.asarray(k))
        for k in kernels
    )
    return QuantumStrategy((1,) * len(povms), np.ones((1, 1)), povms)


# -- XOR teams -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class XorTeam:
    """Two-DM binary-action team rewarding +1 when u1 xor u2 == h(y1, y2), else -1."""

    mu: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        h = np.atleast_2d(np.asarray(self.h, dtype=np.int64))
        if mu.shape != h.shape:
            raise TeamValidationError("h", f"shape {h.shape} != mu shape {mu.shape}")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise TeamValidationError("mu", "must be a probability matrix")
        if not np.all((h == 0) | (h == 1)):
            raise TeamValidationError("h", "entries must be 0 or 1")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "h", h)

    @property
    def g(self) -> np.ndarray:
        return self.mu * (-1.0) ** self.h

    @classmethod
    def from_g(cls, g) -> XorTeam:
        g = np.atleast_2d(np.asarray(g, dtype=float))
        mu = np.abs(g) / np.abs(g).sum()
        return cls(mu, (g < 0).astype(np.int64))

    def to_team(self) -> FiniteStaticTeam:
        n1, n2 = self.mu.shape
        u1 = np.arange(2).reshape(1, 1, 2, 1)
        u2 = np.arange(2).reshape(1, 1, 1, 2)
        reward = np.where((u1 ^ u2) == self.h[:, :, None, None], 1.0, -1.0)
        return FiniteStaticTeam(2, 1, (n1, n2), (2, 2), self.mu[None], reward[None], MAXIMIZE)


def xor_classical_value(x: XorTeam | np.ndarray) -> float:
    """Exact ``max over a, b in {+-1}`` of ``sum g a b``; enumerates the smaller side."""
    g = x.g if isinstance(x, XorTeam) else np.atleast_2d(np.asarray(x, dtype=float))
    if max(g.shape) > MAX_XOR_CLASSICAL:
        raise ValueError(f"classical XOR value is enumerated only up to {MAX_XOR_CLASSICAL} observations per DM")
    if g.shape[0] > g.shape[1]:
        g = g.T
    n1 = g.shape[0]
    signs = 1.0 - 2.0 * ((np.arange(2**n1)[:, None] >> np.arange(n1)[None, :]) & 1)
    # For fixed a the best b is sign(a^T g), giving sum_j |(a^T g)_j|.
    return float(np.abs(signs @ g).sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class XorSolution:
    value: float
    u: np.ndarray
    v: np.ndarray
    classical_value: float | None
    restart: int


def _normalize_rows(m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1)
    bad = norms < 1e-300
    if np.any(bad):
        m = m.copy()
        m[bad] = rng.normal(size=(int(bad.sum()), m.shape[1]))
        norms = np.linalg.norm(m, axis=1)
    return m / norms[:, None]


def _alternate(g: np.ndarray, seed: int, restart: int, tol: float, max_iter: int, trace=None):
    rng = np.random.default_rng([seed, restart])
    n1, n2 = g.shape
    dim = n1 + n2
    u = _normalize_rows(rng.normal(size=(n1, dim)), rng)
    v = _normalize_rows(g.T @ u, rng)
    value = float(np.sum(g * (u @ v.T)))
    if trace is not None:
        trace.append(value)
    for _ in range(max_iter):
        u = _normalize_rows(g @ v, rng)
        half = float(np.sum(g * (u @ v.T)))
        v = _normalize_rows(g.T @ u, rng)
        new = float(np.sum(g * (u @ v.T)))
        if trace is not None:
            trace.extend([half, new])
        gain = new - value
        value = new
        if gain < tol:
            break
    return value, u, v


def solve_xor_team(
    x: XorTeam | np.ndarray,
    restarts: int = 32,
    tol: float = 1e-15,
    seed: int = 0,
    max_iter: int = 100_000,
    with_classical: bool = True,
) -> XorSolution:
    """Lower bound on the quantum XOR value by alternating maximization over unit vectors.

    Restart ``r`` draws its initial vectors from ``default_rng([seed, r])``; the best
    restart wins, ties going to the smaller index, so the answer does not depend
    on how many threads run the restarts.
    """
    g = x.g if isinstance(x, XorTeam) else np.atleast_2d(np.asarray(x, dtype=float))
    if max(g.shape) > MAX_XOR_SIDE:
        raise ValueError(f"at most {MAX_XOR_SIDE} observations per DM")
    runs = _parallel.ordered_map(lambda r: _alternate(g, seed, r, tol, max_iter), range(restarts))
    best = max(range(restarts), key=lambda r: (runs[r][0], -r))
    value, u, v = runs[best]
    classical = None
    if with_classical and max(g.shape) <= MAX_XOR_CLASSICAL:
        classical = xor_classical_value(g)
    return XorSolution(value, u, v, classical, best)


def xor_weights(team: FiniteStaticTeam) -> np.ndarray | None:
    """Correlation weights ``g(y1, y2)`` if the cost has the form ``a(y) (-1)^(u1 xor u2)``.

    Then ``J = sum_y g(y) E[(-1)^(u1 xor u2) | y]`` with ``g = mu * a``; returns
    None for any other team.
    """
    if team.num_dms != 2 or team.omega0_size != 1 or team.act_sizes != (2, 2):
        return None
    c = team.cost[0]
    a = c[:, :, 0, 0]
    if not (np.allclose(c[:, :, 1, 1], a, rtol=0, atol=1e-12)
            and np.allclose(c[:, :, 0, 1], -a, rtol=0, atol=1e-12)
            and np.allclose(c[:, :, 1, 0], -a, rtol=0, atol=1e-12)):
        return None
    return team.prior[0] * a


def team_quantum_value(team: FiniteStaticTeam, g: np.ndarray, restarts: int = 32, seed: int = 0) -> float:
    """Quantum value of an XOR-shaped team in the team's own sense."""
    if team.maximize:
        return solve_xor_team(g, restarts=restarts, seed=seed, with_classical=False).value
    return -solve_xor_team(-g, restarts=restarts, seed=seed, with_classical=False).value


def load_xor_team(path) -> XorTeam:
    """Read an XOR team file with keys ``mu`` (matrix) and ``h`` (binary matrix)."""
    import json

    with open(path) as fh:
        data = json.load(fh)
    return XorTeam(np.asarray(data["mu"], dtype=float), np.asarray(data["h"], dtype=np.int64))
