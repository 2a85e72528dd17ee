"""Selector-driven online bipartite matching with runtime duality audits.

Two algorithms share this module.  The unweighted one orders offline
vertices by how often they were sent to each selector and always works on the
earliest class.  The edge-weighted one (free disposal) prices every offline
vertex against the solved dual tables over its history of weight levels and
picks between a triple, a pair, a deterministic match or leaving the arrival
exposed.

Each run keeps a :class:`DualAudit`: the primal bound increment and the dual
increment of every iteration, the offline invariant, and the final dual
values.  :func:`dual_audit_check` turns it into a report.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .bounds import BoundParams
from .frlp import FrlpError, LpSolution, QOrder, solve_tables
from .instances import KINDS, Instance, generate_instance, offline_optimum
from .ocs import ThreeWayOCS, TwoWayOCS

DETERMINISTIC = "deterministic"
TWO_WAY = "two-way"
THREE_WAY = "three-way"
EXPOSED = "exposed"
WEIGHTED_KINDS = ("uniform-weights", "exponential-weights")


class MatchingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# audit records
# ---------------------------------------------------------------------------

@dataclass
class StepRecord:
    arrival: int
    case: str
    chosen: tuple
    primal_inc: float
    dual_inc: float
    beta: float
    invariant_gap: float = math.inf  # min over touched points of alpha - a(k, l)


@dataclass
class DualAudit:
    kind: str
    gamma: float
    steps: list = field(default_factory=list)
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)  # (u, v, w)
    x: dict = field(default_factory=dict)  # unweighted primal variables per edge
    primal: float = 0.0
    dual: float = 0.0

    def record(self, step: StepRecord):
        self.steps.append(step)
        self.primal += step.primal_inc
        self.dual += step.dual_inc
        self.beta[step.arrival] = step.beta


@dataclass
class AuditReport:
    tol: float
    increment_violations: list = field(default_factory=list)
    prefix_violations: list = field(default_factory=list)
    invariant_violations: list = field(default_factory=list)
    feasibility_violations: list = field(default_factory=list)
    min_increment_slack: float = math.inf
    min_feasibility_slack: float = math.inf

    @property
    def passed(self) -> bool:
        return not (self.increment_violations or self.prefix_violations
                    or self.invariant_violations or self.feasibility_violations)

    def summary(self) -> str:
        return (f"increments={len(self.increment_violations)} "
                f"prefix={len(self.prefix_violations)} "
                f"invariant={len(self.invariant_violations)} "
                f"feasibility={len(self.feasibility_violations)}")


def dual_audit_check(audit: DualAudit, tol: float = 1e-9) -> AuditReport:
    """Check reverse weak duality per iteration and per prefix, the offline
    invariant, and final approximate dual feasibility on every edge."""
    rep = AuditReport(tol)
    p = d = 0.0
    for i, s in enumerate(audit.steps):
        slack = s.primal_inc - s.dual_inc
        rep.min_increment_slack = min(rep.min_increment_slack, slack)
        if slack < -tol:
            rep.increment_violations.append((i, s.arrival, slack))
        p += s.primal_inc
        d += s.dual_inc
        if p - d < -tol:
            rep.prefix_violations.append((i, s.arrival, p - d))
        if s.invariant_gap < -tol:
            rep.invariant_violations.append((i, s.arrival, s.invariant_gap))
    for u, v, w in audit.edges:
        slack = audit.alpha.get(u, 0.0) + audit.beta.get(v, 0.0) - audit.gamma * w
        rep.min_feasibility_slack = min(rep.min_feasibility_slack, slack)
        if slack < -tol:
            rep.feasibility_violations.append((u, v, slack))
    return rep


@dataclass
class MatchResult:
    """Final assignment (offline vertex -> (online id, weight)) and its value."""

    assignment: dict
    value: float
    exposed: list = field(default_factory=list)

    def is_valid(self) -> bool:
        online = [v for v, _ in self.assignment.values()]
        return len(online) == len(set(online))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def params_of(sol: LpSolution) -> BoundParams:
    """Rebuild the parameter bundle stored with a solved program."""
    meta = sol.model.meta["params"]
    keys = ("gamma_a", "gamma_b", "delta1", "delta2", "sigma_r2", "sigma_d", "mode")
    return BoundParams(**{k: meta[k] for k in keys})


def _selectors(seed):
    ss = np.random.SeedSequence(seed)
    pair, pick, a, b = (np.random.default_rng(c) for c in ss.spawn(4))
    return TwoWayOCS(pair), ThreeWayOCS(pick, TwoWayOCS(a), TwoWayOCS(b))


def _check_params(sol: LpSolution, params: BoundParams):
    meta = sol.model.meta["params"]
    for k in ("gamma_b", "delta1", "delta2", "sigma_r2", "sigma_d"):
        if not math.isclose(meta[k], getattr(params, k), rel_tol=1e-12, abs_tol=1e-15):
            raise MatchingError(f"tables were solved with {k}={meta[k]}, run uses "
                                f"{getattr(params, k)}")


# ---------------------------------------------------------------------------
# unweighted
# ---------------------------------------------------------------------------

@dataclass
class OfflineLedger:
    """Per offline vertex: selector counters ``(k, l)`` or the deterministic flag."""

    k: list
    l: list
    det: list
    mate: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int) -> "OfflineLedger":
        return cls([0] * n, [0] * n, [False] * n)

    def state(self, u: int) -> tuple:
        return (math.inf, math.inf) if self.det[u] else (self.k[u], self.l[u])


def run_unweighted(instance: Instance, qorder: QOrder, tables: LpSolution, seed=0,
                   params: Optional[BoundParams] = None):
    """Run the unweighted algorithm; returns ``(MatchResult, DualAudit)``."""
    if tables.model is None or tables.model.kind != "unweighted":
        raise MatchingError("tables must come from the unweighted program")
    if tables.model.qorder != qorder:
        raise MatchingError("tables were solved for a different index ordering")
    params = params or params_of(tables)
    _check_params(tables, params)
    zeta, eta = params.zeta_single_run, params.eta
    pair_ocs, triple_ocs = _selectors(seed)
    led = OfflineLedger.empty(instance.offline)
    audit = DualAudit("unweighted", tables.gamma)
    a_inf = tables.a_at(math.inf, math.inf)
    exposed = []
    for u in range(instance.offline):
        audit.alpha[u] = 0.0

    def b_next(p):
        return tables.b_at(*qorder.next(p)) if qorder.within(p) else 0.0

    for arrival in instance.arrivals:
        v = arrival.id
        nbrs = sorted({u for u, _ in arrival.edges})
        audit.edges.extend((u, v, 1.0) for u in nbrs)
        live = [u for u in nbrs if not led.det[u]]
        if not live:
            exposed.append(v)
            audit.record(StepRecord(v, EXPOSED, (), 0.0, 0.0, 0.0))
            continue
        keys = {u: (-zeta(led.k[u]) * eta(led.l[u]), led.k[u], led.l[u]) for u in live}
        best = min(keys.values())
        star = [u for u in live if keys[u] == best]
        k, l = led.k[star[0]], led.l[star[0]]
        p = (k, l)
        a_now = tables.a_at(k, l)
        if len(star) == 1:
            case, group = DETERMINISTIC, (star[0],)
            x_inc = zeta(k) * eta(l)
            new_alpha = a_inf
            beta = b_next(p)
            chosen = star[0]
            led.det[chosen] = True
        elif len(star) == 2:
            case, group = TWO_WAY, tuple(star)
            x_inc = eta(l) * (zeta(k) - zeta(k + 1))
            new_alpha = tables.a_at(k + 1, l)
            beta = b_next(p)
            chosen = pair_ocs.select(*group)
            for u in group:
                led.k[u] += 1
        else:
            case, group = THREE_WAY, tuple(star[:3])
            x_inc = zeta(k) * (eta(l) - eta(l + 1))
            new_alpha = tables.a_at(k, l + 1)
            beta = tables.b_at(k, l)
            chosen = triple_ocs.select(*group)
            for u in group:
                led.l[u] += 1
        dual_inc = beta
        gap = math.inf
        for u in group:
            dual_inc += new_alpha - audit.alpha[u]
            audit.alpha[u] = new_alpha
            audit.x[(u, v)] = audit.x.get((u, v), 0.0) + x_inc
            gap = min(gap, audit.alpha[u] - tables.a_at(*led.state(u)))
        led.mate[chosen] = v
        audit.record(StepRecord(v, case, group, x_inc * len(group), dual_inc, beta, gap))
    assignment = {u: (v, 1.0) for u, v in led.mate.items()}
    return MatchResult(assignment, float(len(assignment)), exposed), audit


# ---------------------------------------------------------------------------
# edge-weighted
# ---------------------------------------------------------------------------

@dataclass
class WeightProfile:
    """History of one offline vertex over weight levels.

    ``pairs`` and ``triples`` list the weight levels of every pair and triple
    containing the vertex, in arrival order; ``det`` is the largest weight it
    was deterministically matched with (0 if never).  ``points`` are the
    breakpoints of the dual step function and ``alpha[i]`` its value on
    ``(points[i-1], points[i]]``; the function is zero past the last point.
    """

    pairs: list = field(default_factory=list)
    triples: list = field(default_factory=list)
    det: float = 0.0
    points: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def grid(self, w: float):
        """Breakpoints with ``w`` added, and the dual values on the refined grid."""
        pts, alpha = self.points, self.alpha
        if w > 0:
            i = int(np.searchsorted(pts, w))
            if i == pts.size or pts[i] != w:
                fill = alpha[i] if i < pts.size else 0.0
                pts = np.insert(pts, i, w)
                alpha = np.insert(alpha, i, fill)
        return pts, alpha

    def counts(self, pts: np.ndarray):
        """``k(w)``, ``l(w)`` and the deterministic flag at every point."""
        k = _at_least(self.pairs, pts).sum(axis=1)
        l = _at_least(self.triples, pts).sum(axis=1)
        return k, l, self.det >= pts

    def integral(self) -> float:
        if self.points.size == 0:
            return 0.0
        return float(np.diff(self.points, prepend=0.0) @ self.alpha)


def _at_least(levels: list, pts: np.ndarray) -> np.ndarray:
    return np.asarray(levels, dtype=float)[None, :] >= pts[:, None]


def _runs(mask: np.ndarray):
    """Run count and singleton-run count of each row of a boolean matrix."""
    if mask.shape[1] == 0:
        z = np.zeros(mask.shape[0], dtype=int)
        return z, z
    pad = np.zeros((mask.shape[0], 1), dtype=bool)
    prev = np.hstack([pad, mask[:, :-1]])
    nxt = np.hstack([mask[:, 1:], pad])
    starts = mask & ~prev
    return starts.sum(axis=1), (starts & ~nxt).sum(axis=1)


class WeightedTables:
    """Dense lookups of the solved weighted tables, truncation included."""

    def __init__(self, sol: LpSolution, params: BoundParams):
        if sol.model is None or sol.model.kind != "weighted":
            raise MatchingError("tables must come from the weighted program")
        _check_params(sol, params)
        K, L = sol.model.meta["kmax"], sol.model.meta["ellmax"]
        self.K, self.L = K, L
        self.a_inf = sol.a[(K, L)]
        self.A = np.full((K + 2, L + 2), self.a_inf)
        self.B = np.zeros((K + 2, L + 2))
        for (k, l), v in sol.a.items():
            self.A[k, l] = v
        for (k, l), v in sol.b.items():
            self.B[k, l] = v
        self.gamma = sol.gamma
        self.g, self.d1, self.d2 = params.gamma_b, params.delta1, params.delta2

    def _idx(self, k, l, inf):
        kk = np.where(inf, self.K + 1, np.minimum(k, self.K + 1))
        ll = np.where(inf, self.L + 1, np.minimum(l, self.L + 1))
        return kk, ll

    def a(self, k, l, inf):
        return self.A[self._idx(k, l, inf)]

    def b(self, k, l, inf):
        return self.B[self._idx(k, l, inf)]

    def zeta(self, k):
        k = np.asarray(k, dtype=float)
        return 0.5 ** k * (1 - self.g) ** np.maximum(k - 1, 0)

    def eta(self, l):
        l = np.asarray(l, dtype=float)
        return ((2 / 3) ** l * (1 - self.d1) ** np.maximum(l - 1, 0)
                * (1 - self.d2) ** np.maximum(l - 2, 0))

    def ze(self, k, l, inf):
        return np.where(inf, 0.0, self.zeta(np.where(inf, 0, k)) * self.eta(np.where(inf, 0, l)))

    def ybar(self, prof: WeightProfile, pts: np.ndarray, pairs=None, triples=None, det=None):
        """Primal lower bound on Pr[matched with weight >= w] at every point."""
        pairs = prof.pairs if pairs is None else pairs
        triples = prof.triples if triples is None else triples
        det = prof.det if det is None else det
        mp, mt = _at_least(pairs, pts), _at_least(triples, pts)
        K, Lt = mp.sum(axis=1), mt.sum(axis=1)
        rp, _ = _runs(mp)
        rt, st = _runs(mt)
        never = (0.5 ** K * (1 - self.g) ** (K - rp) * (2 / 3) ** Lt
                 * (1 - self.d1) ** (Lt - rt) * (1 - self.d2) ** (Lt - 2 * rt + st))
        return np.where(det >= pts, 1.0, 1.0 - never)


def delta_beta(tab: WeightedTables, prof: WeightProfile, w: float) -> float:
    """Price of offline vertex ``prof`` for an edge of weight ``w``: the gain of
    ``b`` below ``w`` minus a third of ``a`` above it, as a finite sum."""
    pts, _ = prof.grid(w)
    if pts.size == 0:
        return 0.0
    width = np.diff(pts, prepend=0.0)
    k, l, inf = prof.counts(pts)
    below = pts <= w
    return float(width[below] @ tab.b(k, l, inf)[below]
                 - width[~below] @ tab.a(k, l, inf)[~below] / 3)


def _alpha_increment(tab: WeightedTables, prof: WeightProfile, case: str, w: float,
                     pts: np.ndarray) -> np.ndarray:
    k, l, inf = prof.counts(pts)
    below = pts <= w
    ze = tab.ze(k, l, inf)
    a_now = tab.a(k, l, inf)
    if case == DETERMINISTIC:
        return np.where(below, tab.a_inf - a_now, 0.0)
    if case == TWO_WAY:
        last = prof.pairs[-1] if prof.pairs else 0.0
        base = tab.a(k + 1, l, inf) - a_now
        deficit = np.where((k >= 1) & (pts > last), tab.g / 2 * ze, 0.0)
        prepay = np.where(k >= 1, tab.g / 2 * ze, 0.0)
        return np.where(below, base - deficit, prepay)
    d1, d2 = tab.d1, tab.d2
    last = prof.triples[-1] if prof.triples else 0.0
    second = prof.triples[-2] if len(prof.triples) >= 2 else 0.0
    first_term = np.where(l == 1, 2 * d1 / 3, np.where(l >= 2, 2 * (d1 + d2 - d1 * d2) / 3, 0.0))
    second_term = 2 * (d2 - d1 * d2) / 3
    ze_next = tab.ze(k, l + 1, inf)
    prepay = np.where(l >= 1, first_term * ze + second_term * ze_next, 0.0)
    base = tab.a(k, l + 1, inf) - a_now
    deficit = np.where(pts > last, first_term * ze,
                       np.where((pts > second) & (l >= 2), second_term * ze, 0.0))
    return np.where(below, base - deficit, prepay)


def run_weighted(instance: Instance, tables: LpSolution, params: Optional[BoundParams] = None,
                 seed=0):
    """Run the edge-weighted algorithm; returns ``(MatchResult, DualAudit)``."""
    params = params or params_of(tables)
    tab = WeightedTables(tables, params)
    sr, sd = params.sigma_r2, params.sigma_d
    pair_ocs, triple_ocs = _selectors(seed)
    profs = [WeightProfile() for _ in range(instance.offline)]
    audit = DualAudit("weighted", tables.gamma)
    value: dict = {}
    exposed = []
    for u in range(instance.offline):
        audit.alpha[u] = 0.0

    for arrival in instance.arrivals:
        v = arrival.id
        weights = dict(arrival.edges)
        audit.edges.extend((u, v, w) for u, w in arrival.edges)
        price = sorted((-delta_beta(tab, profs[u], w), u) for u, w in weights.items())
        top = [(-p, u) for p, u in price]
        options = []
        if len(top) >= 1:
            options.append((sd * top[0][0], 0, DETERMINISTIC, (top[0][1],)))
        if len(top) >= 2:
            options.append((sr * (top[0][0] + top[1][0]), 1, TWO_WAY,
                            tuple(sorted(u for _, u in top[:2]))))
        if len(top) >= 3:
            options.append((sum(d for d, _ in top[:3]), 2, THREE_WAY,
                            tuple(sorted(u for _, u in top[:3]))))
        if not options or max(o[0] for o in options) <= 0:
            exposed.append(v)
            audit.record(StepRecord(v, EXPOSED, (), 0.0, 0.0, 0.0))
            continue
        beta, _, case, group = max(options, key=lambda o: (o[0], -o[1]))
        if case == DETERMINISTIC:
            chosen = group[0]
        elif case == TWO_WAY:
            chosen = pair_ocs.select(*group)
        else:
            chosen = triple_ocs.select(*group)

        primal_inc = 0.0
        dual_inc = beta
        gap = math.inf
        for u in group:
            prof, w = profs[u], weights[u]
            pts, alpha = prof.grid(w)
            width = np.diff(pts, prepend=0.0)
            inc = _alpha_increment(tab, prof, case, w, pts)
            pairs, triples, det = prof.pairs, prof.triples, prof.det
            if case == DETERMINISTIC:
                det = max(det, w)
            elif case == TWO_WAY:
                pairs = pairs + [w]
            else:
                triples = triples + [w]
            primal_inc += float(width @ (tab.ybar(prof, pts, pairs, triples, det)
                                         - tab.ybar(prof, pts)))
            dual_inc += float(width @ inc)
            prof.points, prof.alpha = pts, alpha + inc
            prof.pairs, prof.triples, prof.det = pairs, triples, det
            k, l, inf = prof.counts(pts)
            if pts.size:
                gap = min(gap, float((prof.alpha - tab.a(k, l, inf)).min()))
            audit.alpha[u] = prof.integral()
        w = weights[chosen]
        if w >= value.get(chosen, (None, -1.0))[1]:
            value[chosen] = (v, w)
        audit.record(StepRecord(v, case, group, primal_inc, dual_inc, beta, gap))
    total = float(sum(w for _, w in value.values()))
    return MatchResult(value, total, exposed), audit


# ---------------------------------------------------------------------------
# tables and experiments
# ---------------------------------------------------------------------------

DEFAULT_SIZES = {"unweighted": (8, 0), "weighted": (25, 25)}


@lru_cache(maxsize=None)
def cached_tables(variant: str, mode: str = "consistent", kmax: Optional[int] = None,
                  ellmax: Optional[int] = None, sigma_r2: float = 1.3,
                  sigma_d: float = 2.2) -> LpSolution:
    """Solve (once per process) the program a run needs."""
    if variant not in DEFAULT_SIZES:
        raise MatchingError(f"unknown variant {variant!r}")
    dk, dl = DEFAULT_SIZES[variant]
    kmax = dk if kmax is None else kmax
    ellmax = dl if ellmax is None else ellmax
    params = BoundParams.for_mode(mode, sigma_r2=sigma_r2, sigma_d=sigma_d)
    sol = solve_tables(variant, kmax, ellmax, params)
    if not sol.optimal:
        raise FrlpError(f"{variant} program did not solve: {sol.status}")
    return sol


def run(variant: str, instance: Instance, tables: LpSolution, seed=0):
    if variant == "unweighted":
        return run_unweighted(instance, tables.model.qorder, tables, seed)
    if variant == "weighted":
        return run_weighted(instance, tables, seed=seed)
    raise MatchingError(f"unknown variant {variant!r}")


@dataclass
class RatioRow:
    seed: int
    alg: float
    opt: float
    ratio: float
    audit_pass: bool


@dataclass
class RatioSummary:
    rows: list
    gamma: float

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows if r.opt > 0])

    @property
    def mean(self) -> float:
        return float(self.ratios.mean()) if self.ratios.size else math.nan

    @property
    def min(self) -> float:
        return float(self.ratios.min()) if self.ratios.size else math.nan

    @property
    def stderr(self) -> float:
        r = self.ratios
        return float(r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0

    def ci(self, z: float = 3.0) -> tuple:
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    @property
    def audits_passed(self) -> bool:
        return all(r.audit_pass for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "alg", "opt", "ratio", "audit_pass"])
        for r in self.rows:
            w.writerow([r.seed, repr(r.alg), repr(r.opt), repr(r.ratio), int(r.audit_pass)])
        return buf.getvalue()


def ratio_experiment(kind: str, n: int, trials: int, seed=0, variant: Optional[str] = None,
                     tables: Optional[LpSolution] = None, mode: str = "consistent",
                     audit: bool = True, tol: float = 1e-9,
                     fixed_instance: bool = False) -> RatioSummary:
    """ALG/OPT over ``trials`` seeded runs.

    Trial ``i`` uses seed ``seed + i`` for the algorithm's coins and, unless
    ``fixed_instance``, for a fresh instance of ``kind`` as well.
    """
    if kind not in KINDS:
        raise MatchingError(f"unknown kind {kind!r}")
    variant = variant or ("weighted" if kind in WEIGHTED_KINDS else "unweighted")
    tables = tables or cached_tables(variant, mode)
    rows = []
    inst = generate_instance(kind, n, seed) if fixed_instance else None
    opt_fixed = offline_optimum(inst) if fixed_instance else None
    for i in range(trials):
        s = seed + i
        if fixed_instance:
            cur, opt = inst, opt_fixed
        else:
            cur = generate_instance(kind, n, s)
            opt = offline_optimum(cur)
        res, aud = run(variant, cur, tables, s)
        ok = dual_audit_check(aud, tol).passed if audit else True
        ratio = res.value / opt if opt > 0 else 1.0
        rows.append(RatioRow(s, res.value, opt, ratio, ok))
    return RatioSummary(rows, tables.gamma)
