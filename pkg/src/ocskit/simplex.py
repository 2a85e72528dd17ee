"""Dense two-phase primal simplex on a condensed tableau.

Problem form::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                x[j] >= 0 for j not in ``free``

The tableau stores one row per basic variable, ``x_B = beta - T @ x_N``,
and one row per objective written the same way (``z = z0 - t @ x_N``), so a
pivot is a single in-place rank-1 update of the whole array.  Pricing is
Dantzig's largest coefficient rule; after a run of degenerate pivots it falls
back to Bland's rule until the objective moves again.  The final point is
recomputed from the original rows of the optimal basis.

Degenerate programs (many zero right-hand sides) are solved with a small,
seeded perturbation of the right-hand side; the unperturbed basic values
are carried along every pivot, and once the perturbed problem is optimal
they are restored and any remaining primal infeasibility is repaired with
dual simplex pivots.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import blas

DEFAULT_TOL = 1e-9
PIVOT_TOL = 1e-10
STALL_LIMIT = 50
PERTURB = 1e-7
FEAS_TOL = 1e-12


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


class SimplexError(RuntimeError):
    pass


class InfeasibleError(SimplexError):
    pass


class UnboundedError(SimplexError):
    pass


@dataclass
class SimplexResult:
    status: Status
    x: np.ndarray
    objective: float
    iterations: int
    phase1_iterations: int = 0
    bland_pivots: int = 0
    basis: list = field(default_factory=list)


class _Tableau:
    """Condensed tableau with objective rows appended at the bottom."""

    def __init__(self, T: np.ndarray, beta: np.ndarray, basic: list, nonbasic: list, n_obj: int,
                 shift: Optional[np.ndarray] = None):
        self.T = np.asfortranarray(T)
        self.exact = beta.copy()
        self.beta = beta if shift is None else beta + shift
        self.basic = basic
        self.nonbasic = nonbasic
        self.m = T.shape[0] - n_obj
        self.ger = blas.get_blas_funcs("ger", (self.T,))

    def pivot(self, r: int, s: int):
        T, beta = self.T, self.beta
        p = T[r, s]
        row = T[r, :] / p
        col = T[:, s].copy()
        col[r] = 0.0
        for vec in (beta, self.exact):
            br = vec[r] / p
            vec -= col * br
            vec[r] = br
        self.T = T = self.ger(-1.0, col, row, a=T, overwrite_a=True)
        T[r, :] = row
        T[:, s] = -col / p
        T[r, s] = 1.0 / p
        self.basic[r], self.nonbasic[s] = self.nonbasic[s], self.basic[r]


def _ratio_test(tab: _Tableau, s: int, bland: bool, tol: float) -> int:
    col = tab.T[: tab.m, s]
    pos = np.flatnonzero(col > PIVOT_TOL)
    if pos.size == 0:
        return -1
    beta = np.maximum(tab.beta[: tab.m][pos], 0.0)
    ratios = beta / col[pos]
    best = ratios.min()
    ties = pos[ratios <= best + tol]
    if bland:
        return int(min(ties, key=lambda i: tab.basic[i]))
    return int(ties[np.argmax(col[ties])])


def _run(tab: _Tableau, obj_row: int, tol: float, max_iter: int, blocked: np.ndarray,
         counters: dict) -> Status:
    stall = 0
    bland = False
    last = tab.beta[obj_row]
    for _ in range(max_iter):
        d = tab.T[obj_row].copy()
        d[blocked] = 0.0
        if bland:
            cand = np.flatnonzero(d < -tol)
            if cand.size == 0:
                return Status.OPTIMAL
            s = int(min(cand, key=lambda j: tab.nonbasic[j]))
        else:
            s = int(np.argmin(d))
            if d[s] >= -tol:
                return Status.OPTIMAL
        r = _ratio_test(tab, s, bland, tol)
        if r < 0:
            return Status.UNBOUNDED
        tab.pivot(r, s)
        counters["iterations"] += 1
        counters["bland"] += int(bland)
        if tab.beta[obj_row] > last + tol:
            last = tab.beta[obj_row]
            stall = 0
            bland = False
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True
    return Status.ITERATION_LIMIT


def _dual_repair(tab: _Tableau, obj_row: int, tol: float, max_iter: int, blocked: np.ndarray,
                 counters: dict) -> Status:
    """Dual simplex pivots from a dual-feasible basis until the basic values are non-negative."""
    for _ in range(max_iter):
        vals = tab.beta[: tab.m]
        r = int(np.argmin(vals))
        if vals[r] >= -FEAS_TOL:
            return Status.OPTIMAL
        row = tab.T[r].copy()
        row[blocked] = 0.0
        cand = np.flatnonzero(row < -PIVOT_TOL)
        if cand.size == 0:
            return Status.INFEASIBLE
        d = np.maximum(tab.T[obj_row, cand], 0.0)
        ratios = d / -row[cand]
        best = ratios.min()
        ties = cand[ratios <= best + tol]
        s = int(ties[np.argmin(row[ties])])
        tab.pivot(r, s)
        counters["iterations"] += 1
    return Status.ITERATION_LIMIT


def solve(c: np.ndarray, A_ub: Optional[np.ndarray] = None, b_ub: Optional[np.ndarray] = None,
          A_eq: Optional[np.ndarray] = None, b_eq: Optional[np.ndarray] = None,
          free: Sequence[int] = (), tol: float = DEFAULT_TOL,
          max_iter: int = 200_000, perturb: bool = True) -> SimplexResult:
    """Maximize ``c @ x``; see the module docstring for the problem form."""
    c = np.asarray(c, dtype=float)
    n0 = c.size
    A_ub = np.zeros((0, n0)) if A_ub is None else np.asarray(A_ub, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n0)) if A_eq is None else np.asarray(A_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)

    # free variables become x+ - x-; the extra columns are appended
    free = sorted(set(free))
    if free:
        c = np.concatenate([c, -c[free]])
        A_ub = np.hstack([A_ub, -A_ub[:, free]])
        A_eq = np.hstack([A_eq, -A_eq[:, free]])
    n = c.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Row i: basic = slack (b >= 0) or artificial (b < 0, or equality rows).
    # Variable ids: structurals 0..n-1, slack of row i is n+i, artificial of row i is n+m+i.
    neg = b_ub < 0
    surplus_rows = np.flatnonzero(neg)
    T = np.zeros((m + 2, n + surplus_rows.size))
    beta = np.zeros(m + 2)
    sign = np.where(neg, -1.0, 1.0)
    T[:m_ub, :n] = A_ub * sign[:, None]
    beta[:m_ub] = b_ub * sign
    # artificial rows: art = b' - (sign*A x - s)  =>  surplus column enters with -1
    for j, i in enumerate(surplus_rows):
        T[i, n + j] = -1.0
    esign = np.where(b_eq < 0, -1.0, 1.0)
    T[m_ub:m, :n] = A_eq * esign[:, None]
    beta[m_ub:m] = b_eq * esign

    basic = [n + i if not (i < m_ub and neg[i]) else n + m + i for i in range(m_ub)]
    basic += [n + m + i for i in range(m_ub, m)]
    nonbasic = list(range(n)) + [n + int(i) for i in surplus_rows]
    art_rows = [i for i in range(m) if basic[i] >= n + m]

    # phase-2 objective row: z = c x  =>  T_obj = -c
    T[m + 1, :n] = -c
    # phase-1 objective: maximize -sum(art) = -sum(beta_i - T_i x) over artificial rows
    if art_rows:
        T[m, :] = -T[art_rows, :].sum(axis=0)
        beta[m] = -beta[art_rows].sum()

    shift = None
    if perturb and m:
        rng = np.random.default_rng(0)
        shift = np.zeros(m + 2)
        shift[:m] = PERTURB * (1.0 + rng.random(m)) * np.maximum(1.0, np.abs(beta[:m]))
    tab = _Tableau(T, beta, basic, nonbasic, n_obj=2, shift=shift)
    counters = {"iterations": 0, "bland": 0}
    blocked = np.zeros(tab.T.shape[1], dtype=bool)
    phase1 = 0
    if art_rows:
        status = _run(tab, m, tol, max_iter, blocked, counters)
        phase1 = counters["iterations"]
        if status is Status.ITERATION_LIMIT:
            return SimplexResult(status, np.full(n0, np.nan), np.nan, phase1, phase1)
        scale = max(1.0, np.abs(b_ub).max(initial=0), np.abs(b_eq).max(initial=0))
        if tab.exact[m] < -max(10 * tol, 1e-6 if shift is not None else 0.0) * scale:
            return SimplexResult(Status.INFEASIBLE, np.full(n0, np.nan), np.nan, phase1, phase1)
        # drive remaining (zero-level) artificials out of the basis where possible
        for r in range(tab.m):
            if tab.basic[r] >= n + m:
                row = tab.T[r].copy()
                row[[j for j, v in enumerate(tab.nonbasic) if v >= n + m]] = 0.0
                s = int(np.argmax(np.abs(row)))
                if abs(row[s]) > 1e-7:
                    tab.pivot(r, s)
        blocked = np.array([v >= n + m for v in tab.nonbasic])

    status = _run(tab, m + 1, tol, max_iter - counters["iterations"], blocked, counters)
    if status is Status.OPTIMAL and shift is not None:
        # drop the perturbation, repair feasibility, then re-optimize from there
        tab.beta = tab.exact.copy()
        for _ in range(10):
            status = _dual_repair(tab, m + 1, tol, max_iter - counters["iterations"], blocked,
                                  counters)
            if status is not Status.OPTIMAL:
                break
            status = _run(tab, m + 1, tol, max_iter - counters["iterations"], blocked, counters)
            if status is not Status.OPTIMAL or tab.beta[: tab.m].min() >= -FEAS_TOL:
                break
    x = np.zeros(n + m)
    if status is Status.OPTIMAL:
        x = _refine(tab, A_ub, b_ub, A_eq, b_eq, n, m)
    xs = x[:n].copy()
    if free:
        xs[free] -= xs[n0:]
    xs = xs[:n0]
    obj = float(c[:n0] @ xs) if status is Status.OPTIMAL else np.nan
    return SimplexResult(status, xs, obj, counters["iterations"], phase1, counters["bland"],
                         list(tab.basic))


def _refine(tab: _Tableau, A_ub, b_ub, A_eq, b_eq, n: int, m: int) -> np.ndarray:
    """Recompute the basic solution from the original rows.

    Rows whose slack is nonbasic (plus equality rows) are tight; the basic
    structural variables solve that square system exactly.  Falls back to the
    tableau values if the system is singular.
    """
    x = np.zeros(n + m)
    for r, v in enumerate(tab.basic):
        if v < n:
            x[v] = max(tab.beta[r], 0.0)
    m_ub = A_ub.shape[0]
    basic_struct = [v for v in tab.basic if v < n]
    slack_basic = {v - n for v in tab.basic if n <= v < n + m}
    tight = [i for i in range(m_ub) if i not in slack_basic]
    rows = np.vstack([A_ub[tight], A_eq]) if A_eq.shape[0] else A_ub[tight]
    rhs = np.concatenate([b_ub[tight], b_eq])
    if rows.shape[0] == len(basic_struct) and basic_struct:
        try:
            sol = np.linalg.solve(rows[:, basic_struct], rhs)
        except np.linalg.LinAlgError:
            return x
        if np.all(np.isfinite(sol)):
            x[basic_struct] = np.maximum(sol, 0.0)
    return x
