"""Dense revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

Two phases with artificial variables, Bland's smallest-index rule for both
the entering and the leaving variable, and an explicit basis inverse that is
updated by elementary row operations and recomputed from an LU factorization
at a fixed cadence.  Redundant equality rows found at the end of phase one
are dropped; their multipliers are reported as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpConfig:
    pivot_tol: float = 1e-10
    feas_tol: float = 1e-8
    opt_tol: float = 1e-9
    refactor_every: int = 64
    max_iter: int = 200_000
    max_refactor_attempts: int = 3


DEFAULT_CONFIG = LpConfig()


class LpNumericError(RuntimeError):
    """The basis became numerically unusable despite refactorization."""


@dataclass(frozen=True, eq=False)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2:
            A = A.reshape(len(b), len(c))
        if A.shape != (b.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, c.size)}")
        for name, arr in (("c", c), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b.size


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    complementarity: float
    iterations: int

    @property
    def gap(self) -> float:
        return abs(self.objective - self.dual_objective)

    def certified(self, tol: float = 1e-8, gap_tol: float = 1e-7) -> bool:
        return (
            self.status == OPTIMAL
            and self.primal_residual <= tol
            and self.dual_residual <= tol
            and self.complementarity <= tol
            and self.gap <= gap_tol
        )


class _Simplex:
    def __init__(self, A, b, c, basis, config: LpConfig):
        self.A = A
        self.b = b
        self.c = c
        self.basis = np.array(basis, dtype=np.int64)
        self.cfg = config
        self.iterations = 0
        self.refactor()

    def refactor(self):
        m = self.A.shape[0]
        B = self.A[:, self.basis]
        try:
            lu = scipy.linalg.lu_factor(B, check_finite=False)
            self.Binv = scipy.linalg.lu_solve(lu, np.eye(m), check_finite=False)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise LpNumericError(f"basis factorization failed: {exc}") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise LpNumericError("singular basis")
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def duals(self) -> np.ndarray:
        return self.c[self.basis] @ self.Binv

    def pivot(self, enter: int, row: int, w: np.ndarray):
        piv = w[row]
        self.Binv[row] /= piv
        self.xB[row] /= piv
        others = np.arange(len(w)) != row
        coef = w[others][:, None]
        self.Binv[others] -= coef * self.Binv[row]
        self.xB[others] -= w[others] * self.xB[row]
        self.basis[row] = enter
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= self.cfg.refactor_every:
            self.refactor()

    def run(self, allowed: np.ndarray) -> str:
        """Iterate until optimal or unbounded; ``allowed`` masks columns that may enter."""
        cfg = self.cfg
        attempts = 0
        while True:
            if self.iterations > cfg.max_iter:
                raise LpNumericError(f"iteration limit {cfg.max_iter} reached")
            y = self.duals()
            d = self.c - y @ self.A
            d[self.basis] = 0.0
            candidates = np.flatnonzero(allowed & (d < -cfg.opt_tol))
            if candidates.size == 0:
                return OPTIMAL
            enter = int(candidates[0])
            w = self.Binv @ self.A[:, enter]
            pos = w > cfg.pivot_tol
            if not np.any(pos):
                return UNBOUNDED
            xB = np.maximum(self.xB, 0.0)
            ratios = np.full(len(w), np.inf)
            ratios[pos] = xB[pos] / w[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
            row = int(ties[np.argmin(self.basis[ties])])
            if abs(w[row]) < cfg.pivot_tol * 10:
                attempts += 1
                if attempts > cfg.max_refactor_attempts:
                    raise LpNumericError("pivot element too small after refactorization")
                self.refactor()
                continue
            self.pivot(enter, row, w)


def solve_lp(problem: LpProblem, config: LpConfig = DEFAULT_CONFIG) -> LpSolution:
    A0, b0, c0 = problem.A, problem.b, problem.c
    m, n = A0.shape
    if m == 0:
        if np.any(c0 < -config.feas_tol):
            return _finish(problem, UNBOUNDED, np.zeros(n), np.zeros(0), 0)
        return _finish(problem, OPTIMAL, np.zeros(n), np.zeros(0), 0)

    sign = np.where(b0 < 0, -1.0, 1.0)
    A = A0 * sign[:, None]
    b = b0 * sign

    # Phase one: artificials n..n+m-1 form the starting basis.
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    s1 = _Simplex(A1, b, c1, np.arange(n, n + m), config)
    s1.run(np.concatenate([np.ones(n, bool), np.zeros(m, bool)]))
    s1.refactor()
    infeas = float(np.sum(np.maximum(s1.xB, 0.0)[s1.basis >= n]))
    scale = max(1.0, float(np.max(np.abs(b))))
    if infeas > config.feas_tol * scale:
        return _finish(problem, INFEASIBLE, np.zeros(n), np.zeros(m), s1.iterations)

    # Drive artificials out of the basis; rows where that is impossible are redundant.
    redundant = []
    for row in range(m):
        if s1.basis[row] < n:
            continue
        tableau_row = s1.Binv[row] @ A
        tableau_row[s1.basis[s1.basis < n]] = 0.0
        cand = np.flatnonzero(np.abs(tableau_row) > 1e-9)
        if cand.size:
            j = int(cand[np.argmax(np.abs(tableau_row[cand]) >= 0.1 * np.max(np.abs(tableau_row[cand])))])
            s1.pivot(j, row, s1.Binv @ A[:, j])
        else:
            redundant.append(int(s1.basis[row] - n))
    keep = np.setdiff1d(np.arange(m), redundant)
    basis = np.array([j for j in s1.basis if j < n], dtype=np.int64)
    A2, b2 = A[keep], b[keep]
    s2 = _Simplex(A2, b2, c0, basis, config)
    s2.iterations = s1.iterations
    status = s2.run(np.ones(n, bool))
    s2.refactor()
    x = np.zeros(n)
    x[s2.basis] = np.maximum(s2.xB, 0.0)
    y = np.zeros(m)
    y[keep] = s2.duals()
    y *= sign
    if status == UNBOUNDED:
        return _finish(problem, UNBOUNDED, x, y, s2.iterations)
    return _finish(problem, OPTIMAL, x, y, s2.iterations)


def _finish(problem: LpProblem, status: str, x, y, iterations) -> LpSolution:
    A, b, c = problem.A, problem.b, problem.c
    if status != OPTIMAL:
        return LpSolution(status, x, y, float("nan"), float("nan"), float("nan"),
                          float("nan"), float("nan"), iterations)
    reduced = c - A.T @ y if A.size else c.copy()
    primal_res = float(np.max(np.abs(A @ x - b))) if b.size else 0.0
    dual_res = float(max(0.0, -np.min(reduced))) if reduced.size else 0.0
    comp = float(np.max(np.abs(x * reduced))) if x.size else 0.0
    return LpSolution(
        status, x, y,
        objective=float(c @ x),
        dual_objective=float(b @ y),
        primal_residual=primal_res,
        dual_residual=dual_res,
        complementarity=comp,
        iterations=iterations,
    )


def reduced_costs(problem: LpProblem, solution: LpSolution) -> np.ndarray:
    return problem.c - problem.A.T @ solution.y
