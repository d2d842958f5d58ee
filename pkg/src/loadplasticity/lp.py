"""Linear programs behind a small solver interface.

Two backends: a dense two-phase tableau simplex (Bland's rule, no
dependencies beyond numpy) and HiGHS through scipy for large sparse models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


class InfeasibleLP(ValueError):
    pass


class UnboundedLP(ValueError):
    pass


@dataclass
class LinearProgram:
    """min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi."""

    c: np.ndarray
    A_ub: object = None
    b_ub: np.ndarray | None = None
    A_eq: object = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    row_names: list[str] = field(default_factory=list)
    integrality: np.ndarray | None = None  # 1 marks integer columns (HiGHS only)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float)
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def size(self) -> int:
        rows = sum(0 if A is None else A.shape[0] for A in (self.A_ub, self.A_eq))
        return rows * self.n_vars


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    backend: str
    iterations: int = 0


class DenseSimplex:
    """Two-phase tableau simplex with Bland's anti-cycling rule."""

    name = "simplex"

    def __init__(self, tol: float = 1e-9, max_iter: int = 50_000):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, lp: LinearProgram) -> LpResult:
        if lp.integrality is not None and np.any(lp.integrality):
            raise ValueError("the dense simplex solves continuous problems only")
        n = lp.n_vars
        dense = lambda A: np.zeros((0, n)) if A is None else (A.toarray() if sp.issparse(A) else np.asarray(A, float))
        A_ub, A_eq = dense(lp.A_ub), dense(lp.A_eq)
        b_ub = np.zeros(0) if lp.b_ub is None else np.asarray(lp.b_ub, float)
        b_eq = np.zeros(0) if lp.b_eq is None else np.asarray(lp.b_eq, float)

        # map x to nonnegative y: x = shift + T y
        cols, shift = [], np.zeros(n)
        extra_ub_rows, extra_ub_rhs = [], []
        for j in range(n):
            lo, hi = lp.lo[j], lp.hi[j]
            if np.isfinite(lo):
                shift[j] = lo
                cols.append((j, 1.0))
                if np.isfinite(hi):
                    extra_ub_rows.append(len(cols) - 1)
                    extra_ub_rhs.append(hi - lo)
            elif np.isfinite(hi):
                shift[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        m_y = len(cols)
        T = np.zeros((n, m_y))
        for k, (j, s) in enumerate(cols):
            T[j, k] = s

        c_y = lp.c @ T
        const = float(lp.c @ shift)
        Aub_y = A_ub @ T
        bub_y = b_ub - A_ub @ shift
        if extra_ub_rows:
            E = np.zeros((len(extra_ub_rows), m_y))
            E[np.arange(len(extra_ub_rows)), extra_ub_rows] = 1.0
            Aub_y = np.vstack([Aub_y, E])
            bub_y = np.concatenate([bub_y, extra_ub_rhs])
        Aeq_y = A_eq @ T
        beq_y = b_eq - A_eq @ shift

        m_ub, m_eq = Aub_y.shape[0], Aeq_y.shape[0]
        # standard form with slacks
        A = np.zeros((m_ub + m_eq, m_y + m_ub))
        A[:m_ub, :m_y] = Aub_y
        A[:m_ub, m_y:] = np.eye(m_ub)
        A[m_ub:, :m_y] = Aeq_y
        b = np.concatenate([bub_y, beq_y])
        c = np.concatenate([c_y, np.zeros(m_ub)])
        neg = b < 0
        A[neg] *= -1
        b[neg] *= -1

        y, iters = self._two_phase(A, b, c)
        x = shift + T @ y[:m_y]
        return LpResult(x, float(lp.c @ x), self.name, iters)

    def _two_phase(self, A, b, c):
        m, n = A.shape
        tol = self.tol
        # phase 1 tableau: [A | I | b], objective = sum of artificials
        tab = np.zeros((m + 1, n + m + 1))
        tab[:m, :n] = A
        tab[:m, n : n + m] = np.eye(m)
        tab[:m, -1] = b
        basis = list(range(n, n + m))
        tab[m, :] = 0.0
        tab[m, n : n + m] = 1.0
        for i in range(m):
            tab[m] -= tab[i]
        iters = self._iterate(tab, basis, n + m)
        if tab[m, -1] < -1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            raise InfeasibleLP(f"phase-1 residual {-tab[m, -1]:.3g}")
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n:
                row = tab[i, :n]
                cand = np.nonzero(np.abs(row) > tol)[0]
                if cand.size:
                    self._pivot(tab, basis, i, int(cand[0]))
        keep = [i for i in range(m) if basis[i] < n]
        tab = np.vstack([tab[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
        basis = [basis[i] for i in keep]
        mm = len(keep)
        tab[mm, :n] = c
        for i, j in enumerate(basis):
            if tab[mm, j] != 0:
                tab[mm] -= tab[mm, j] * tab[i]
        iters += self._iterate(tab, basis, n)
        y = np.zeros(n)
        for i, j in enumerate(basis):
            y[j] = tab[i, -1]
        return y, iters

    def _iterate(self, tab, basis, n_cols) -> int:
        m = tab.shape[0] - 1
        tol = self.tol
        for it in range(self.max_iter):
            red = tab[m, :n_cols]
            entering = np.nonzero(red < -tol)[0]
            if entering.size == 0:
                return it
            j = int(entering[0])
            col = tab[:m, j]
            pos = col > tol
            if not pos.any():
                raise UnboundedLP(f"column {j} unbounded")
            ratios = np.full(m, np.inf)
            ratios[pos] = tab[:m, -1][pos] / col[pos]
            best = ratios.min()
            ties = np.nonzero(ratios <= best + tol)[0]
            i = int(min(ties, key=lambda r: basis[r]))
            self._pivot(tab, basis, i, j)
        raise RuntimeError("simplex iteration limit reached")

    @staticmethod
    def _pivot(tab, basis, i, j):
        tab[i] /= tab[i, j]
        col = tab[:, j].copy()
        col[i] = 0.0
        tab -= np.outer(col, tab[i])
        basis[i] = j


class HighsSolver:
    name = "highs"

    def solve(self, lp: LinearProgram) -> LpResult:
        bounds = np.column_stack([lp.lo, lp.hi])
        bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h) for l, h in bounds]
        res = linprog(
            lp.c, A_ub=lp.A_ub, b_ub=lp.b_ub, A_eq=lp.A_eq, b_eq=lp.b_eq, bounds=bounds, method="highs",
            integrality=lp.integrality,
        )
        if res.status == 2:
            raise InfeasibleLP(res.message)
        if res.status == 3:
            raise UnboundedLP(res.message)
        if res.status != 0:
            raise RuntimeError(f"HiGHS failed: {res.message}")
        return LpResult(np.asarray(res.x), float(res.fun), self.name, int(getattr(res, "nit", 0)))


DENSE_SIZE_LIMIT = 40_000  # rows * columns handled by the dense backend under "auto"


def solve(lp: LinearProgram, backend: str = "auto") -> LpResult:
    if backend == "auto":
        integer = lp.integrality is not None and np.any(lp.integrality)
        backend = "simplex" if lp.size <= DENSE_SIZE_LIMIT and not integer else "highs"
    if backend == "simplex":
        return DenseSimplex().solve(lp)
    if backend == "highs":
        return HighsSolver().solve(lp)
    raise ValueError(f"unknown LP backend {backend!r}")
