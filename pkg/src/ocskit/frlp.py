"""Factor-revealing linear programs for the matching algorithms.

Both programs maximize a ratio ``G`` over tables ``a(k, l)`` and ``b(k, l)``
indexed by how many times an offline vertex was sent to the two-way (``k``)
and three-way (``l``) selector.  The unweighted program orders the index
pairs by ``1 - zeta(k) * eta(l)`` and truncates at a limit pair; the weighted
program uses a rectangle ``{0..kmax} x {0..ellmax}``.  Past the truncation,
``a`` is pinned to its value at the limit and ``b`` to zero, which also
stands in for the deterministic-match state ``(inf, inf)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import simplex
from .bounds import BoundParams, zeta_product

GAMMA = "G"
SENSES = ("<=", ">=", "=")
INF = math.inf


class FrlpError(ValueError):
    pass


def a_name(k: int, l: int) -> str:
    return f"a({k},{l})"


def b_name(k: int, l: int) -> str:
    return f"b({k},{l})"


# ---------------------------------------------------------------------------
# ordering of index pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QOrder:
    """Index pairs sorted by ``1 - zeta(k) eta(l)``, ties lexicographic.

    ``pairs`` holds every pair up to and including ``limit`` followed by the
    limit's successor.  Pairs missing from ``pairs`` lie strictly after the
    limit.
    """

    pairs: tuple
    limit: tuple
    products: tuple

    def __post_init__(self):
        object.__setattr__(self, "_pos", {p: i for i, p in enumerate(self.pairs)})

    @property
    def limit_pos(self) -> int:
        return self._pos[self.limit]

    def position(self, p) -> Optional[int]:
        return self._pos.get(tuple(p))

    def within(self, p) -> bool:
        """True iff ``p`` precedes or equals the limit."""
        i = self._pos.get(tuple(p))
        return i is not None and i <= self.limit_pos

    def next(self, p) -> tuple:
        i = self._pos[tuple(p)]
        if i + 1 >= len(self.pairs):
            raise FrlpError(f"no successor stored for {p}")
        return self.pairs[i + 1]

    def retained(self) -> tuple:
        return self.pairs[: self.limit_pos + 1]

    def clamp(self, p) -> tuple:
        """The pair whose ``a`` value stands for ``p`` (the limit once past it)."""
        if any(math.isinf(v) for v in p):
            return self.limit
        return tuple(p) if self.within(p) else self.limit


def sorted_q(limit_pair, zeta_fn: Callable[[int], float], eta_fn: Callable[[int], float],
             margin: float = 0.2) -> QOrder:
    """Sort the index pairs needed by the unweighted program.

    Candidates are all pairs with ``zeta*eta >= margin * zeta*eta(limit)``.
    Both factors drop by at most a constant ratio per step, so this set
    contains every pair up to the limit and the limit's successor.
    """
    K, L = limit_pair
    if K < 0 or L < 0:
        raise FrlpError("limit pair must be non-negative")
    cut = margin * zeta_fn(K) * eta_fn(L)
    cands = []
    k = 0
    while zeta_fn(k) >= cut:
        z = zeta_fn(k)
        l = 0
        while z * eta_fn(l) >= cut:
            cands.append(((k, l), z * eta_fn(l)))
            l += 1
        k += 1
    cands.sort(key=lambda c: (-c[1], c[0]))
    pos = next(i for i, (p, _) in enumerate(cands) if p == (K, L))
    keep = cands[: pos + 2]
    if len(keep) < pos + 2:
        raise FrlpError("candidate set too small to contain the successor of the limit")
    return QOrder(tuple(p for p, _ in keep), (K, L), tuple(v for _, v in keep))


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Row:
    tag: str
    terms: tuple  # ((variable name, coefficient), ...)
    sense: str
    rhs: float


@dataclass
class LpModel:
    """Maximize ``G`` subject to tagged rows; every variable but ``G`` is non-negative."""

    kind: str
    variables: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    qorder: Optional[QOrder] = field(default=None, repr=False)

    def __post_init__(self):
        self._index = {v: i for i, v in enumerate(self.variables)}
        if GAMMA not in self._index:
            self.var(GAMMA)

    def var(self, name: str) -> int:
        i = self._index.get(name)
        if i is None:
            i = self._index[name] = len(self.variables)
            self.variables.append(name)
        return i

    def index(self, name: str) -> int:
        return self._index[name]

    def add(self, tag: str, terms: Iterable, sense: str, rhs: float):
        if sense not in SENSES:
            raise FrlpError(f"unknown sense {sense!r}")
        merged = {}
        for name, coef in terms:
            if name is None:
                continue
            self.var(name)
            merged[name] = merged.get(name, 0.0) + float(coef)
        self.rows.append(Row(tag, tuple(merged.items()), sense, float(rhs)))

    def tags(self) -> dict:
        out = {}
        for r in self.rows:
            out[r.tag] = out.get(r.tag, 0) + 1
        return out

    # table lookups with truncation applied
    def a_key(self, k, l) -> str:
        if self.kind == "unweighted":
            return a_name(*self.qorder.clamp((k, l)))
        K, L = self.meta["kmax"], self.meta["ellmax"]
        if k > K or l > L:
            return a_name(K, L)
        return a_name(k, l)

    def b_key(self, k, l) -> Optional[str]:
        if self.kind == "unweighted":
            return b_name(k, l) if not math.isinf(k) and self.qorder.within((k, l)) else None
        if k > self.meta["kmax"] or l > self.meta["ellmax"]:
            return None
        return b_name(k, l)

    def to_arrays(self):
        n = len(self.variables)
        ub, ub_rhs, eq, eq_rhs = [], [], [], []
        for r in self.rows:
            v = np.zeros(n)
            for name, coef in r.terms:
                v[self._index[name]] += coef
            if r.sense == "<=":
                ub.append(v)
                ub_rhs.append(r.rhs)
            elif r.sense == ">=":
                ub.append(-v)
                ub_rhs.append(-r.rhs)
            else:
                eq.append(v)
                eq_rhs.append(r.rhs)
        c = np.zeros(n)
        c[self._index[GAMMA]] = 1.0
        A_ub = np.array(ub) if ub else np.zeros((0, n))
        A_eq = np.array(eq) if eq else np.zeros((0, n))
        return c, A_ub, np.array(ub_rhs), A_eq, np.array(eq_rhs)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_unweighted(kmax: int, ellmax: int, params: Optional[BoundParams] = None,
                     zeta_fn=None, eta_fn=None) -> LpModel:
    """Program for the unweighted algorithm truncated at the pair ``(kmax, ellmax)``."""
    params = params or BoundParams.paper()
    zeta_fn = zeta_fn or params.zeta_single_run
    eta_fn = eta_fn or params.eta
    q = sorted_q((kmax, ellmax), zeta_fn, eta_fn)
    lim = q.limit
    model = LpModel("unweighted", qorder=q,
                    meta={"kmax": kmax, "ellmax": ellmax, "params": params.as_dict()})

    def A(p):
        return a_name(*q.clamp(p))

    def B(p):
        return b_name(*p) if q.within(p) else None

    for p in q.retained():
        model.var(a_name(*p))
        model.var(b_name(*p))
    model.add("start", [(A((0, 0)), 1)], "=", 0)
    for p in q.retained():
        k, l = p
        z, e = zeta_fn(k), eta_fn(l)
        nxt = q.next(p)
        model.add("monotone", [(A(p), 1), (A(nxt), -1)], "<=", 0)
        model.add("deterministic", [(A(lim), 1), (A(p), -1), (B(nxt), 1)], "<=", z * e)
        model.add("two-way", [(A((k + 1, l)), 2), (A(p), -2), (B(nxt), 1)], "<=",
                  2 * e * (z - zeta_fn(k + 1)))
        model.add("three-way", [(A((k, l + 1)), 3), (A(p), -3), (B(p), 1)], "<=",
                  3 * z * (e - eta_fn(l + 1)))
        model.add("feasible", [(A(p), 1), (B(p), 1), (GAMMA, -1)], ">=", 0)
    model.add("feasible-limit", [(A(lim), 1), (GAMMA, -1)], ">=", 0)
    return model


def build_weighted(kmax: int, ellmax: int, params: Optional[BoundParams] = None) -> LpModel:
    """Program for the edge-weighted algorithm over the rectangle ``{0..kmax} x {0..ellmax}``."""
    if kmax < 3 or ellmax < 3:
        raise FrlpError("the weighted program needs kmax, ellmax >= 3")
    params = params or BoundParams.paper()
    g, d1, d2 = params.gamma_b, params.delta1, params.delta2
    sr, sd = params.sigma_r2, params.sigma_d
    K, L = kmax, ellmax
    model = LpModel("weighted", meta={"kmax": K, "ellmax": L, "params": params.as_dict()})

    def z(k):
        return zeta_product(k, g)

    et = params.eta_pow

    def A(k, l):
        return a_name(K, L) if k > K or l > L else a_name(k, l)

    def B(k, l):
        return b_name(k, l)

    for k in range(K + 1):
        for l in range(L + 1):
            model.var(a_name(k, l))
            model.var(b_name(k, l))
    top = A(K, L)
    model.add("start", [(A(0, 0), 1)], "=", 0)
    for k in range(K + 1):
        for l in range(L + 1):
            ze = z(k) * et(l)
            model.add("monotone-k", [(A(k, l), 1), (A(k + 1, l), -1)], "<=", 0)
            model.add("monotone-l", [(A(k, l), 1), (A(k, l + 1), -1)], "<=", 0)
            model.add("deterministic", [(top, 1), (A(k, l), -1), (B(k, l), sd)], "<=", ze)
            if k >= 1:
                model.add("two-way", [(A(k + 1, l), 1), (A(k, l), -1), (B(k, l), sr)], "<=",
                          (1 + g) / 2 * ze)
            if l >= 2:
                model.add("three-way", [(A(k, l + 1), 1), (A(k, l), -1), (B(k, l), 1)], "<=",
                          (1 + 2 * d1 + 2 * d2 - 2 * d1 * d2) / 3 * ze)
            model.add("feasible-three-way", [(A(k, l), 1), (B(k, l), 3), (GAMMA, -1)], ">=", 0)
            model.add("feasible-after-triple", [(A(k, l + 1), 1), (B(k, l), sd), (GAMMA, -1)],
                      ">=", 0)
            model.add("feasible-after-pair", [(A(k + 1, l), 1), (B(k, l), sd), (GAMMA, -1)],
                      ">=", 0)
    for l in range(L + 1):
        model.add("two-way-fresh", [(A(1, l), 1), (A(0, l), -1), (B(0, l), sr)], "<=", et(l) / 2)
    for k in range(K + 1):
        model.add("three-way-fresh", [(A(k, 1), 1), (A(k, 0), -1), (B(k, 0), 1)], "<=", z(k) / 3)
        model.add("three-way-second", [(A(k, 2), 1), (A(k, 1), -1), (B(k, 1), 1)], "<=",
                  (2 + 4 * d1) / 9 * z(k))
    model.add("floor-two-way", [(A(1, 0), 1)], ">=", 3 * g / (4 * sr))
    model.add("floor-three-way-1", [(A(0, 1), 1)], ">=",
              2 * d1 * et(1) + 2 * (d2 - d1 * d2) * et(2))
    model.add("floor-three-way-2", [(A(0, 2), 1)], ">=",
              2 * (d1 + d2 - d1 * d2) * et(2) + 2 * (d2 - d1 * d2) * et(3))
    model.add("feasible-limit", [(top, 1), (GAMMA, -1)], ">=", 0)
    return model


# ---------------------------------------------------------------------------
# solving and certification
# ---------------------------------------------------------------------------

@dataclass
class LpSolution:
    gamma: float
    a: dict
    b: dict
    status: str
    max_violation: float
    iterations: int = 0
    seconds: float = 0.0
    backend: str = "simplex"
    model: Optional[LpModel] = field(default=None, repr=False)

    def a_at(self, k, l) -> float:
        return self.a[_parse_pair(self.model.a_key(k, l))]

    def b_at(self, k, l) -> float:
        key = self.model.b_key(k, l)
        return 0.0 if key is None else self.b[_parse_pair(key)]

    @property
    def optimal(self) -> bool:
        return self.status == simplex.Status.OPTIMAL.value


def _parse_pair(name: str) -> tuple:
    k, l = name[2:-1].split(",")
    return int(k), int(l)


def _solution_from_x(model: LpModel, x: np.ndarray, status: str, iterations: int,
                     seconds: float, backend: str) -> LpSolution:
    a, b = {}, {}
    for i, name in enumerate(model.variables):
        if name.startswith("a("):
            a[_parse_pair(name)] = float(x[i])
        elif name.startswith("b("):
            b[_parse_pair(name)] = float(x[i])
    viol = check_solution(model, x).max_violation if status == "optimal" else math.inf
    return LpSolution(float(x[model.index(GAMMA)]), a, b, status, viol, iterations, seconds,
                      backend, model)


def simplex_solve(model: LpModel, tol: float = simplex.DEFAULT_TOL,
                  backend: str = "simplex") -> LpSolution:
    """Solve ``model``.  ``backend="highs"`` uses scipy's HiGHS instead of the built-in simplex."""
    c, A_ub, b_ub, A_eq, b_eq = model.to_arrays()
    g = model.index(GAMMA)
    t0 = time.perf_counter()
    if backend == "simplex":
        res = simplex.solve(c, A_ub, b_ub, A_eq, b_eq, free=[g], tol=tol)
        status, x, iters = res.status.value, res.x, res.iterations
    elif backend == "highs":
        from scipy.optimize import linprog

        bounds = [(0, None)] * len(c)
        bounds[g] = (None, None)
        res = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq if A_eq.size else None,
                      b_eq=b_eq if A_eq.size else None, bounds=bounds, method="highs")
        status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "iteration_limit")
        x, iters = (res.x if res.x is not None else np.full(len(c), np.nan)), int(res.nit)
    else:
        raise FrlpError(f"unknown backend {backend!r}")
    seconds = time.perf_counter() - t0
    if status == "infeasible":
        raise simplex.InfeasibleError(f"{model.kind} program is infeasible")
    if status == "unbounded":
        raise simplex.UnboundedError(f"{model.kind} program is unbounded")
    return _solution_from_x(model, x, status, iters, seconds, backend)


@dataclass
class CheckReport:
    max_violation: float
    worst_by_tag: dict
    violated: list
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def _values(model: LpModel, sol) -> dict:
    if isinstance(sol, LpSolution):
        vals = {GAMMA: sol.gamma}
        vals.update({a_name(*p): v for p, v in sol.a.items()})
        vals.update({b_name(*p): v for p, v in sol.b.items()})
        return vals
    return dict(zip(model.variables, (float(v) for v in sol)))


def check_solution(model: LpModel, sol, tol: float = 1e-8) -> CheckReport:
    """Re-evaluate every row (and non-negativity) with compensated summation."""
    vals = _values(model, sol)
    worst = {}
    violated = []
    overall = 0.0
    for i, r in enumerate(model.rows):
        lhs = math.fsum(coef * vals.get(name, 0.0) for name, coef in r.terms)
        if r.sense == "<=":
            v = lhs - r.rhs
        elif r.sense == ">=":
            v = r.rhs - lhs
        else:
            v = abs(lhs - r.rhs)
        v = max(v, 0.0)
        if v > worst.get(r.tag, (-1.0, -1))[0]:
            worst[r.tag] = (v, i)
        if v > tol:
            violated.append((i, r.tag, v))
        overall = max(overall, v)
    for name, value in vals.items():
        if name != GAMMA and value < 0:
            v = -value
            if v > worst.get("non-negative", (-1.0, -1))[0]:
                worst["non-negative"] = (v, -1)
            if v > tol:
                violated.append((-1, "non-negative", v))
            overall = max(overall, v)
    return CheckReport(overall, worst, violated, tol)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def export_lp_text(model: LpModel) -> str:
    """Render ``model`` as text, one row per line: ``tag: +c*var -c*var SENSE rhs``.

    Lines starting with ``#`` are comments; the ``# kind`` and ``# vars``
    headers fix the model kind and variable order.  Coefficients use
    ``repr`` so parsing reproduces them exactly.
    """
    lines = [f"# kind {model.kind}", f"# maximize {GAMMA}",
             f"# all variables >= 0 except {GAMMA}",
             "# vars " + " ".join(model.variables)]
    for key in ("kmax", "ellmax"):
        if key in model.meta:
            lines.append(f"# {key} {model.meta[key]}")
    for r in model.rows:
        terms = " ".join(f"{'+' if c >= 0 else '-'}{abs(c)!r}*{n}" for n, c in r.terms)
        lines.append(f"{r.tag}: {terms} {r.sense} {r.rhs!r}")
    return "\n".join(lines) + "\n"


def parse_lp_text(text: str) -> LpModel:
    kind, variables, meta = "custom", [], {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "kind":
                kind = parts[1]
            elif parts and parts[0] == "vars":
                variables = parts[1:]
            elif parts and parts[0] in ("kmax", "ellmax"):
                meta[parts[0]] = int(parts[1])
            continue
        try:
            tag, body = line.split(":", 1)
            tokens = body.split()
            sense, rhs = tokens[-2], float(tokens[-1])
            terms = []
            for tok in tokens[:-2]:
                coef, name = tok.split("*", 1)
                terms.append((name, float(coef)))
        except (ValueError, IndexError) as exc:
            raise FrlpError(f"line {lineno}: cannot parse {line!r}") from exc
        if sense not in SENSES:
            raise FrlpError(f"line {lineno}: unknown sense {sense!r}")
        rows.append(Row(tag.strip(), tuple(terms), sense, rhs))
    model = LpModel(kind, variables=list(variables), meta=meta)
    for r in rows:
        for name, _ in r.terms:
            model.var(name)
    model.rows = rows
    return model


# ---------------------------------------------------------------------------
# convenience
# ---------------------------------------------------------------------------

def solve_tables(variant: str, kmax: int, ellmax: int, params: Optional[BoundParams] = None,
                 backend: str = "simplex") -> LpSolution:
    if variant == "unweighted":
        model = build_unweighted(kmax, ellmax, params)
    elif variant == "weighted":
        model = build_weighted(kmax, ellmax, params)
    else:
        raise FrlpError(f"unknown variant {variant!r}")
    return simplex_solve(model, backend=backend)
