"""
LP relaxation by a dense-tableau, bounded-variable primal simplex, or by
HiGHS for models too large for a dense tableau.

Every row gets a slack (bounds depend on the row sense) so rows read
a·x + s = b. Rows the slack cannot absorb at the starting point get an
artificial variable, driven to zero in phase I. Nonbasic variables sit at a
bound (or at zero when free), so no variable substitution is needed for
general bounds.

Entering variables are picked by largest reduced cost until a run of
degenerate pivots is seen; from then on Bland's rule (lowest index) is used
for both entering and leaving choices, which rules out cycling.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from catmip.mip import MipModel, ModelError, Sense, VarId

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-6
COST_TOL = 1e-9
DEGENERATE_RUN = 50


class UnboundedLPError(ValueError):
    pass


class LPEngine(Enum):
    SIMPLEX = "simplex"
    "The dense bounded-variable simplex in this module."

    HIGHS = "highs"
    "scipy's HiGHS interface on the sparse constraint matrix."


@dataclass
class LPResult:
    feasible: bool
    objective: float
    x: np.ndarray | None
    "Full-length primal values (fixed variables included)."

    iterations: int
    exhausted: bool = False
    "The deadline or iteration limit stopped the solve; feasible is False and nothing is known."


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, senses: np.ndarray, lo: np.ndarray, hi: np.ndarray):
        m, n = A.shape
        self.m, self.n = m, n

        s_lo = np.where(senses == 1, -np.inf, 0.0)   # >= rows: slack in (-inf, 0]
        s_hi = np.where(senses == -1, np.inf, 0.0)   # <= rows: slack in [0, inf)

        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        resid = b - A @ x0
        absorbed = (resid >= s_lo - FEAS_TOL) & (resid <= s_hi + FEAS_TOL)
        art_rows = np.flatnonzero(~absorbed)
        sigma = np.where(resid[art_rows] >= 0, 1.0, -1.0)
        a = len(art_rows)
        self.num_art = a

        E = np.zeros((m, a))
        E[art_rows, np.arange(a)] = sigma
        self.M = np.hstack([A, np.eye(m), E])
        self.b = b
        self.L = np.concatenate([lo, s_lo, np.zeros(a)])
        self.U = np.concatenate([hi, s_hi, np.full(a, np.inf)])

        self.basis = np.arange(n, n + m)
        self.basis[art_rows] = n + m + np.arange(a)
        self.is_basic = np.zeros(n + m + a, dtype=bool)
        self.is_basic[self.basis] = True

        # the starting basis is diagonal with entries ±1, so B^-1 is itself
        scale = np.ones(m)
        scale[art_rows] = sigma
        self.T = self.M * scale[:, None]

        self.x = np.concatenate([x0, np.zeros(m), np.zeros(a)])
        self.x[n:n + m] = np.clip(resid, s_lo, s_hi)
        self.x[n + m + np.arange(a)] = np.abs(resid[art_rows])
        self.x[n + art_rows] = 0.0

        self.iterations = 0
        self.bland = False

    @property
    def art_slice(self) -> slice:
        return slice(self.n + self.m, self.n + self.m + self.num_art)

    def run(self, cost: np.ndarray, max_iterations: int, deadline: float | None = None) -> bool:
        """
        Pivot to optimality for `cost`. Returns False, leaving the tableau
        mid-solve, when max_iterations or the monotonic-clock deadline is hit.
        """
        T, x, L, U = self.T, self.x, self.L, self.U
        d = cost - cost[self.basis] @ T
        degenerate = 0

        while True:
            if self.iterations >= max_iterations:
                logger.debug("simplex: iteration limit %d reached", max_iterations)
                return False
            if deadline is not None and time.monotonic() > deadline:
                logger.debug("simplex: deadline passed after %d iterations", self.iterations)
                return False

            can_up = (d > COST_TOL) & (x < U - FEAS_TOL)
            can_down = (d < -COST_TOL) & (x > L + FEAS_TOL)
            eligible = ~self.is_basic & (can_up | can_down)
            candidates = np.flatnonzero(eligible)
            if len(candidates) == 0:
                return True

            if self.bland:
                q = candidates[0]
            else:
                q = candidates[np.argmax(np.abs(d[candidates]))]
            direction = 1.0 if d[q] > 0 else -1.0

            rate = -direction * T[:, q]
            xb = x[self.basis]
            limits = np.full(self.m, np.inf)
            up = rate > PIVOT_TOL
            down = rate < -PIVOT_TOL
            with np.errstate(invalid="ignore"):
                limits[up] = (U[self.basis][up] - xb[up]) / rate[up]
                limits[down] = (L[self.basis][down] - xb[down]) / rate[down]
            limits = np.maximum(np.nan_to_num(limits, nan=np.inf), 0.0)

            theta = limits.min() if self.m else np.inf
            flip = U[q] - L[q]

            self.iterations += 1

            if flip <= theta:
                if not np.isfinite(flip):
                    raise UnboundedLPError("LP relaxation is unbounded")
                x[q] += direction * flip
                x[self.basis] += rate * flip
                degenerate = 0
                continue

            tied = np.flatnonzero(limits <= theta + 1e-12)
            r = tied[np.argmin(self.basis[tied])]
            leaving = self.basis[r]

            x[self.basis] += rate * theta
            x[q] += direction * theta
            x[leaving] = U[leaving] if rate[r] > 0 else L[leaving]

            pivot_row = T[r] / T[r, q]
            col = T[:, q].copy()
            col[r] = 0.0
            T -= np.outer(col, pivot_row)
            T[r] = pivot_row
            d -= d[q] * pivot_row
            d[q] = 0.0

            self.basis[r] = q
            self.is_basic[leaving] = False
            self.is_basic[q] = True

            if theta <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_RUN and not self.bland:
                    logger.debug("simplex: switching to Bland's rule after %d degenerate pivots", degenerate)
                    self.bland = True
            else:
                degenerate = 0

    def refresh(self) -> None:
        "Recompute basic values from the nonbasic ones to shed accumulated error."
        if self.m == 0:
            return
        nonbasic = ~self.is_basic
        rhs = self.b - self.M[:, nonbasic] @ self.x[nonbasic]
        try:
            self.x[self.basis] = np.linalg.solve(self.M[:, self.basis], rhs)
        except np.linalg.LinAlgError:
            logger.debug("simplex: singular basis on refresh, keeping tableau values")


def simplex(A: np.ndarray, b: np.ndarray, senses: np.ndarray, c: np.ndarray,
            lo: np.ndarray, hi: np.ndarray, max_iterations: int | None = None,
            deadline: float | None = None) -> LPResult:
    """
    Maximize c·x subject to A x (senses) b, lo <= x <= hi.
    senses holds -1 for <=, 0 for =, +1 for >=.
    """
    m, n = A.shape
    if np.any(lo > hi + FEAS_TOL):
        return LPResult(False, -np.inf, None, 0)
    if max_iterations is None:
        max_iterations = 50 * (m + n) + 1000

    tab = _Tableau(A, b, senses, lo, hi)
    width = n + m + tab.num_art

    if tab.num_art:
        phase1 = np.zeros(width)
        phase1[tab.art_slice] = -1.0
        if not tab.run(phase1, max_iterations, deadline):
            return LPResult(False, -np.inf, None, tab.iterations, exhausted=True)
        if tab.x[tab.art_slice].sum() > FEAS_TOL:
            return LPResult(False, -np.inf, None, tab.iterations)
        tab.U[tab.art_slice] = 0.0
        nonbasic_art = ~tab.is_basic[tab.art_slice]
        tab.x[tab.art_slice][nonbasic_art] = 0.0

    phase2 = np.zeros(width)
    phase2[:n] = c
    if not tab.run(phase2, max_iterations, deadline):
        return LPResult(False, -np.inf, None, tab.iterations, exhausted=True)
    tab.refresh()

    x = np.clip(tab.x[:n], lo, hi)
    return LPResult(True, float(c @ x), x, tab.iterations)


class LinearRelaxation:
    """
    Sparse arrays of a frozen model, reusable across many bound sets.

    The simplex engine presolves by removing fixed variables and the rows
    they leave empty, then works on a dense copy of what remains. The HiGHS
    engine hands the sparse matrix over as is and lets HiGHS presolve.
    """

    def __init__(self, model: MipModel, engine: LPEngine = LPEngine.SIMPLEX):
        if not model.frozen:
            raise ModelError("freeze the model before relaxing it")
        self.model = model
        self.engine = engine
        n, m = model.num_vars, model.num_constraints

        rows, cols, data = [], [], []
        self.b = np.zeros(m)
        self.senses = np.zeros(m, dtype=int)
        for i, con in enumerate(model.constraints):
            for v, coef in con.expr.terms.items():
                rows.append(i)
                cols.append(v.index)
                data.append(coef)
            self.b[i] = con.rhs
            self.senses[i] = {Sense.LE: -1, Sense.EQ: 0, Sense.GE: 1}[con.sense]
        self.A = sparse.csc_matrix((data, (rows, cols)), shape=(m, n), dtype=float)

        self.c = np.zeros(n)
        for v, coef in model.objective.terms.items():
            self.c[v.index] = coef
        self.constant = float(model.objective.constant)
        self.lo = model.lower_bounds()
        self.hi = model.upper_bounds()

        if engine is LPEngine.HIGHS:
            csr = self.A.tocsr()
            le, ge, eq = (np.flatnonzero(self.senses == s) for s in (-1, 1, 0))
            self.A_ub = sparse.vstack([csr[le], -csr[ge]], format="csr") if len(le) + len(ge) else None
            self.b_ub = np.concatenate([self.b[le], -self.b[ge]]) if self.A_ub is not None else None
            self.A_eq = csr[eq] if len(eq) else None
            self.b_eq = self.b[eq] if self.A_eq is not None else None

    @property
    def row_lower(self) -> np.ndarray:
        return np.where(self.senses == -1, -np.inf, self.b)

    @property
    def row_upper(self) -> np.ndarray:
        return np.where(self.senses == 1, np.inf, self.b)

    def solve(self, lo: np.ndarray | None = None, hi: np.ndarray | None = None,
              deadline: float | None = None) -> LPResult:
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        if np.any(lo > hi + FEAS_TOL):
            return LPResult(False, -np.inf, None, 0)
        if deadline is not None and time.monotonic() > deadline:
            return LPResult(False, -np.inf, None, 0, exhausted=True)
        if self.engine is LPEngine.HIGHS and np.any(lo < hi):
            return self._solve_highs(lo, hi, deadline)
        return self._solve_simplex(lo, hi, deadline)

    def _solve_simplex(self, lo: np.ndarray, hi: np.ndarray, deadline: float | None) -> LPResult:
        fixed = np.flatnonzero(lo == hi)
        free = np.flatnonzero(lo != hi)
        b = self.b - self.A[:, fixed] @ lo[fixed]
        A = self.A[:, free].tocsr()

        keep = np.diff(A.indptr) > 0
        if not np.all(keep):
            s, r = self.senses[~keep], b[~keep]
            bad = ((s == -1) & (r < -FEAS_TOL)) | ((s == 1) & (r > FEAS_TOL)) | ((s == 0) & (np.abs(r) > FEAS_TOL))
            if np.any(bad):
                return LPResult(False, -np.inf, None, 0)
        rows = np.flatnonzero(keep)
        A, b, senses = A[rows].toarray(), b[rows], self.senses[rows]

        inner = simplex(A, b, senses, self.c[free], lo[free], hi[free], deadline=deadline)
        if not inner.feasible:
            return LPResult(False, -np.inf, None, inner.iterations, inner.exhausted)

        x = lo.copy()
        x[free] = inner.x
        return LPResult(True, float(self.c @ x) + self.constant, x, inner.iterations)

    def _solve_highs(self, lo: np.ndarray, hi: np.ndarray, deadline: float | None) -> LPResult:
        options = {"presolve": True}
        if deadline is not None:
            options["time_limit"] = max(deadline - time.monotonic(), 1e-3)
        res = linprog(-self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=np.column_stack([lo, hi]), method="highs", options=options)
        iterations = int(getattr(res, "nit", 0) or 0)
        match res.status:
            case 0:
                x = np.clip(res.x, lo, hi)
                return LPResult(True, float(self.c @ x) + self.constant, x, iterations)
            case 1:
                return LPResult(False, -np.inf, None, iterations, exhausted=True)
            case 2:
                return LPResult(False, -np.inf, None, iterations)
            case 3:
                raise UnboundedLPError("LP relaxation is unbounded")
        logger.warning("highs: %s; retrying with the dense simplex", res.message)
        return self._solve_simplex(lo, hi, deadline)


def lp_relax(model: MipModel, fixings: Mapping[VarId, float] | None = None,
             engine: LPEngine = LPEngine.SIMPLEX) -> float | None:
    """
    Upper bound on the model's objective with integrality dropped, or None
    when the fixings make the relaxation infeasible.
    """
    relax = LinearRelaxation(model, engine)
    lo, hi = relax.lo.copy(), relax.hi.copy()
    for v, value in (fixings or {}).items():
        if not lo[v.index] <= value <= hi[v.index]:
            raise ModelError(f"fixing {v.name}={value} lies outside [{lo[v.index]},{hi[v.index]}]")
        lo[v.index] = hi[v.index] = value
    result = relax.solve(lo, hi)
    return result.objective if result.feasible else None
