"""Exact and Monte Carlo verification of the selection bounds.

All checks are phrased through a *choice pattern*: for an element ``u``
occurring ``r`` times in the input, bit ``p`` of the pattern is set when
``u`` was selected at its ``p``-th occurrence.  Exhaustive enumeration (or
sampling) produces a histogram over the ``2**r`` patterns, and the
probability that ``u`` is never selected inside a set of windows is a sum
over that histogram.  One enumeration thus answers every window spec.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence, Union

import numpy as np
from scipy.stats import binomtest

from . import bounds
from .ocs import (TRIPLE_SPLITS, PairQuery, TripleQuery, simulate_three_way_lanes,
                  simulate_two_way_lanes)

MAX_PAIRS = 8
MAX_TRIPLES = 3
HARD_MAX_TRIPLES = 4
CHUNK = 1 << 20
CONFIDENCE = 0.999

GAMMA_OCS = Fraction(1, 16)


class EnumerationTooLarge(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class SubsequenceSpec:
    """Disjoint windows over the occurrences of ``element``.

    Each window ``(start, stop)`` is a half-open range of occurrence
    positions, so it is consecutive by construction: it holds every query
    containing the element between its first and last member.
    """

    element: int
    windows: tuple

    def __post_init__(self):
        wins = tuple(sorted((int(s), int(e)) for s, e in self.windows))
        object.__setattr__(self, "windows", wins)
        for s, e in wins:
            if not 0 <= s < e:
                raise WindowError(f"window ({s}, {e}) is empty or negative")
        for (_, e1), (s2, _) in zip(wins, wins[1:]):
            if s2 < e1:
                raise WindowError(f"windows overlap: {wins}")

    @property
    def lengths(self):
        return tuple(e - s for s, e in self.windows)

    def mask(self) -> int:
        m = 0
        for s, e in self.windows:
            for p in range(s, e):
                m |= 1 << p
        return m

    def check_against(self, n_occurrences: int):
        if self.windows and self.windows[-1][1] > n_occurrences:
            raise WindowError(
                f"windows {self.windows} exceed the {n_occurrences} occurrences of {self.element}"
            )

    def label(self) -> str:
        return format_windows(self.windows)


def format_windows(windows) -> str:
    return ";".join(f"{s}:{e}" for s, e in windows) or "-"


def parse_windows(text: str) -> tuple:
    """Parse ``"0:2;3:4"`` (commas also accepted) into window tuples."""
    text = text.strip()
    if text in ("", "-"):
        return ()
    out = []
    for part in text.replace(",", ";").split(";"):
        try:
            s, e = part.split(":")
            out.append((int(s), int(e)))
        except ValueError as exc:
            raise WindowError(f"bad window {part!r}; expected start:stop") from exc
    return tuple(out)


def all_window_specs(element: int, n_occurrences: int) -> Iterator[SubsequenceSpec]:
    """Every non-empty family of disjoint windows over ``n_occurrences`` positions."""

    def families(start):
        if start >= n_occurrences:
            yield ()
            return
        yield from families(start + 1)  # position ``start`` uncovered
        for stop in range(start + 1, n_occurrences + 1):
            for rest in families(stop):
                yield ((start, stop),) + rest

    for fam in families(0):
        if fam:
            yield SubsequenceSpec(element, fam)


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------

def _as_tuples(queries) -> list:
    out = []
    for q in queries:
        if isinstance(q, PairQuery):
            out.append((q.a, q.b))
        elif isinstance(q, TripleQuery):
            out.append((q.a, q.b, q.c))
        else:
            out.append(tuple(int(e) for e in q))
    return out


def _compact(queries, element):
    """Relabel element ids to 0..m-1 with ``element`` first."""
    ids = {element: 0}
    out = []
    for q in queries:
        if len(set(q)) != len(q):
            raise ValueError(f"query {q} repeats an element")
        out.append(tuple(ids.setdefault(e, len(ids)) for e in q))
    return out


def occurrences(queries, element) -> list:
    return [i for i, q in enumerate(_as_tuples(queries)) if element in q]


# ---------------------------------------------------------------------------
# pattern histograms
# ---------------------------------------------------------------------------

def _patterns(outputs: np.ndarray, occ: Sequence[int]) -> np.ndarray:
    pattern = np.zeros(outputs.shape[0], dtype=np.int64)
    for p, step in enumerate(occ):
        pattern |= (outputs[:, step] == 0).astype(np.int64) << p
    return pattern


def _two_way_coins(lanes: np.ndarray, n: int) -> np.ndarray:
    shifts = 3 * np.arange(n, dtype=np.int64)
    return ((lanes[:, None] >> shifts) & 7).astype(np.uint8)


def _three_way_draws(lanes: np.ndarray, n: int):
    bits = lanes & ((1 << (6 * n)) - 1)
    digits = lanes >> (6 * n)
    powers = 3 ** np.arange(n, dtype=np.int64)
    choices = (digits[:, None] // powers) % 3
    shifts = 3 * np.arange(n, dtype=np.int64)
    coins_a = ((bits[:, None] >> shifts) & 7).astype(np.uint8)
    coins_b = ((bits[:, None] >> (shifts + 3 * n)) & 7).astype(np.uint8)
    return choices, coins_a, coins_b


def brute_force_pattern_counts(queries, element, max_lanes: int = 1 << 22):
    """Pattern histogram by running the lane simulator on every randomness assignment.

    Exponential and slow; kept as an independent check of the exact
    state-space computation below.
    """
    queries = _as_tuples(queries)
    n = len(queries)
    three = bool(queries) and len(queries[0]) == 3
    total = 3**n * (1 << (6 * n)) if three else 1 << (3 * n)
    if total > max_lanes:
        raise EnumerationTooLarge(f"{total} assignments exceeds {max_lanes}")
    occ = occurrences(queries, element)
    compact = _compact(queries, element)
    counts = np.zeros(1 << len(occ), dtype=np.int64)
    for start in range(0, total, CHUNK):
        lanes = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        if three:
            out = simulate_three_way_lanes(compact, *_three_way_draws(lanes, n))
        else:
            out = simulate_two_way_lanes(compact, _two_way_coins(lanes, n)).outputs
        counts += np.bincount(_patterns(out, occ), minlength=counts.size)
    return counts, total


# Exact computation over the selector's state space.  Per element the only
# state that influences the future is whether the last pair containing it was
# a sender wanting it, and if so whether that pair chose it:
#   0 = no pending sender, 1 = pending sender that chose it, 2 = pending
#   sender that did not choose it.
# Link partners are fixed by the input (the previous pair holding the wanted
# element), so they never need to be stored.

_COINS = [(c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8)]


def _pair_step(state: list, a: int, b: int, coin) -> tuple:
    """Apply one pair to ``state`` in place; return ``(output, linked_element or -1)``."""
    receiver, want_b, out_b = coin
    want, other = (b, a) if want_b else (a, b)
    pending = state[want]
    if receiver and pending:
        out = other if pending == 1 else want
        linked = want
    else:
        out = b if out_b else a
        linked = -1
    if receiver:
        state[a] = state[b] = 0
    else:
        state[want] = 1 if out == want else 2
        state[other] = 0
    return out, linked


def _last_use(queries) -> dict:
    last = {}
    for i, q in enumerate(queries):
        for e in q:
            last[e] = i
    return last


def _retire(state: list, q, i: int, last: dict):
    for e in q:
        if last[e] == i:
            state[e] = 0


def _check_size(n: int, three: bool, allow_four: bool):
    if three:
        cap = HARD_MAX_TRIPLES if allow_four else MAX_TRIPLES
        if n > cap:
            raise EnumerationTooLarge(f"{n} triples exceeds the enumeration cap of {cap}")
    elif n > MAX_PAIRS:
        raise EnumerationTooLarge(f"{n} pairs exceeds the enumeration cap of {MAX_PAIRS}")


def two_way_pattern_counts(pairs, element, track_links: bool = False):
    """Exact histogram of choice patterns over all ``8**n`` coin assignments.

    Returns ``(counts, total)``; ``counts[pattern]`` is the number of coin
    assignments producing that pattern.  With ``track_links`` the histogram
    is instead a dict keyed by ``(pattern, links)`` where ``links`` is a
    tuple of ``(earlier_step, later_step)`` correlation links between
    occurrences of ``element``.
    """
    pairs = _as_tuples(pairs)
    if any(len(p) != 2 for p in pairs):
        raise ValueError("two-way input must consist of pairs")
    _check_size(len(pairs), False, False)
    compact = _compact(pairs, element)
    m = 1 + max((max(p) for p in compact), default=0)
    last = _last_use(compact)
    prev_step = {}
    occ_pos = {}
    dist = {((0,) * m, 0, ()): 1}
    for i, (a, b) in enumerate(compact):
        prev = {e: prev_step.get(e) for e in (a, b)}
        has_u = 0 in (a, b)
        if has_u:
            occ_pos[i] = len(occ_pos)
        nxt = {}
        for (st, pattern, links), w in dist.items():
            for coin in _COINS:
                s = list(st)
                out, linked = _pair_step(s, a, b, coin)
                _retire(s, (a, b), i, last)
                p2 = pattern | (1 << occ_pos[i]) if has_u and out == 0 else pattern
                l2 = links
                if track_links and linked >= 0 and has_u and prev[linked] in occ_pos:
                    l2 = links + ((prev[linked], i),)
                key = (tuple(s), p2, l2)
                nxt[key] = nxt.get(key, 0) + w
        dist = nxt
        prev_step[a] = prev_step[b] = i
    total = 8 ** len(compact)
    if track_links:
        out = {}
        for (_, pattern, links), w in dist.items():
            out[(pattern, links)] = out.get((pattern, links), 0) + w
        return out, total
    counts = np.zeros(1 << len(occ_pos), dtype=np.int64)
    for (_, pattern, _), w in dist.items():
        counts[pattern] += w
    return counts, total


def three_way_pattern_counts(triples, element, allow_four: bool = False):
    """Exact histogram over sub-pair choices and both selectors' coins."""
    triples = _as_tuples(triples)
    if any(len(t) != 3 for t in triples):
        raise ValueError("three-way input must consist of triples")
    _check_size(len(triples), True, allow_four)
    compact = _compact(triples, element)
    m = 1 + max((max(t) for t in compact), default=0)
    last = _last_use(compact)
    occ = occurrences(compact, 0)
    zero = (0,) * m
    dist = {(zero, zero, 0): 1}
    for i, t in enumerate(compact):
        has_u = 0 in t
        nxt = {}
        for (sa, sb, pattern), w in dist.items():
            for split in TRIPLE_SPLITS:
                x, y, left = t[split[0]], t[split[1]], t[split[2]]
                for coin_a in _COINS:
                    s1 = list(sa)
                    first, _ = _pair_step(s1, x, y, coin_a)
                    _retire(s1, t, i, last)
                    k1 = tuple(s1)
                    for coin_b in _COINS:
                        s2 = list(sb)
                        out, _ = _pair_step(s2, first, left, coin_b)
                        _retire(s2, t, i, last)
                        p2 = pattern | (1 << occ.index(i)) if has_u and out == 0 else pattern
                        key = (k1, tuple(s2), p2)
                        nxt[key] = nxt.get(key, 0) + w
        dist = nxt
    total = 3 ** len(compact) * 64 ** len(compact)
    counts = np.zeros(1 << len(occ), dtype=np.int64)
    for (_, _, pattern), w in dist.items():
        counts[pattern] += w
    return counts, total


def never_count(counts: np.ndarray, spec: SubsequenceSpec) -> int:
    """Number of outcomes in which no window position has its bit set."""
    mask = spec.mask()
    patterns = np.arange(counts.size)
    return int(counts[(patterns & mask) == 0].sum())


def exact_two_way_never(pairs, spec: SubsequenceSpec) -> Fraction:
    counts, total = two_way_pattern_counts(pairs, spec.element)
    spec.check_against(counts.size.bit_length() - 1)
    return Fraction(never_count(counts, spec), total)


def exact_three_way_never(triples, spec: SubsequenceSpec, allow_four: bool = False) -> Fraction:
    counts, total = three_way_pattern_counts(triples, spec.element, allow_four)
    spec.check_against(counts.size.bit_length() - 1)
    return Fraction(never_count(counts, spec), total)


def exact_no_internal_edge(pairs, element) -> dict:
    """For every consecutive window over the element's occurrences, the exact
    probability that no realized correlation link has both endpoints inside it."""
    pairs = _as_tuples(pairs)
    hist, total = two_way_pattern_counts(pairs, element, track_links=True)
    occ = occurrences(pairs, element)
    pos = {step: p for p, step in enumerate(occ)}
    r = len(occ)
    good = {(s, e): 0 for s in range(r) for e in range(s + 1, r + 1)}
    for (_, links), w in hist.items():
        spans = [(pos[a], pos[b]) for a, b in links]
        for s, e in good:
            if not any(s <= a and b < e for a, b in spans):
                good[(s, e)] += w
    return {k: Fraction(v, total) for k, v in good.items()}


# ---------------------------------------------------------------------------
# bounds for window families
# ---------------------------------------------------------------------------

def two_way_product_bound(spec: SubsequenceSpec, gamma=GAMMA_OCS):
    return math.prod((bounds.zeta_product(k, gamma) for k in spec.lengths), start=Fraction(1))


def three_way_product_bound(spec: SubsequenceSpec, gamma_a=GAMMA_OCS, gamma_b=GAMMA_OCS):
    return math.prod((bounds.eta_sum(k, gamma_a, gamma_b) for k in spec.lengths),
                     start=Fraction(1))


def no_edge_bound(length: int, gamma=GAMMA_OCS):
    return (1 - gamma) ** max(length - 1, 0)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    trials: int
    lower: float
    upper: float
    successes: int = 0
    confidence: float = CONFIDENCE

    @property
    def halfwidth(self) -> float:
        return (self.upper - self.lower) / 2

    def contains(self, value) -> bool:
        return self.lower <= float(value) <= self.upper


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> EstimateWithCI:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return EstimateWithCI(successes / trials, trials, float(ci.low), float(ci.high),
                          successes, confidence)


def _chunk_rng(master_seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(chunk,)))


def mc_pattern_counts(queries, element, trials: int, master_seed: int = 0):
    """Sampled pattern histogram.

    Trial ``t`` draws its coins from block ``t // CHUNK`` of a stream keyed by
    ``(master_seed, t // CHUNK)``, so each trial's randomness depends only on
    the master seed and its index.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    queries = _as_tuples(queries)
    arity = {len(q) for q in queries}
    if len(arity) != 1 or arity - {2, 3}:
        raise ValueError("queries must be all pairs or all triples")
    three = arity == {3}
    n = len(queries)
    occ = occurrences(queries, element)
    compact = _compact(queries, element)
    counts = np.zeros(1 << len(occ), dtype=np.int64)
    for chunk, start in enumerate(range(0, trials, CHUNK)):
        size = min(CHUNK, trials - start)
        rng = _chunk_rng(master_seed, chunk)
        if three:
            choices = rng.integers(0, 3, size=(CHUNK, n))[:size]
            ca = rng.integers(0, 8, size=(CHUNK, n), dtype=np.uint8)[:size]
            cb = rng.integers(0, 8, size=(CHUNK, n), dtype=np.uint8)[:size]
            out = simulate_three_way_lanes(compact, choices, ca, cb)
        else:
            coins = rng.integers(0, 8, size=(CHUNK, n), dtype=np.uint8)[:size]
            out = simulate_two_way_lanes(compact, coins).outputs
        counts += np.bincount(_patterns(out, occ), minlength=counts.size)
    return counts, trials


def mc_never(queries, spec: SubsequenceSpec, trials: int, master_seed: int = 0) -> EstimateWithCI:
    """Monte Carlo estimate of the never-selected probability with a Wilson interval."""
    if callable(queries):
        queries = queries()
    counts, n = mc_pattern_counts(queries, spec.element, trials, master_seed)
    spec.check_against(counts.size.bit_length() - 1)
    return wilson_interval(never_count(counts, spec), n)


def bound_holds(estimate: EstimateWithCI, bound) -> bool:
    """Sampled bound check: the upper limit may exceed the bound by at most one half-width."""
    return estimate.upper <= float(bound) + estimate.halfwidth


# ---------------------------------------------------------------------------
# input families
# ---------------------------------------------------------------------------

FAMILIES = ("all-same", "alternating", "chained", "interleaved", "random-k-regular")


def adversarial_family(name: str, size: int, arity: int = 3, seed: int = 0) -> list:
    """Deterministic input families; element 0 is the element under test.

    all-same          the same query ``size`` times
    alternating       two queries sharing only element 0, alternated
    chained           query i is {0, i+1, ..., i+arity-1}: consecutive queries
                      also share their last/first other element
    interleaved       queries with element 0 separated by queries without it
                      that touch the same partner elements
    random-k-regular  element 0 plus ``arity - 1`` others drawn uniformly from
                      a universe of ``arity + 1`` elements (seeded)
    """
    if arity not in (2, 3):
        raise ValueError("arity must be 2 or 3")
    if size < 0:
        raise ValueError("size must be non-negative")
    if name == "all-same":
        return [tuple(range(arity))] * size
    if name == "alternating":
        qa = tuple(range(arity))
        qb = (0,) + tuple(range(arity, 2 * arity - 1))
        return [qa if i % 2 == 0 else qb for i in range(size)]
    if name == "chained":
        return [(0,) + tuple(range(i + 1, i + arity)) for i in range(size)]
    if name == "interleaved":
        out = []
        for i in range(size):
            others = tuple(1 + (i + j) % arity for j in range(arity - 1))
            if i % 2 == 0:
                out.append((0,) + others)
            else:
                out.append(tuple(1 + (i + j) % arity for j in range(arity)))
        return out
    if name == "random-k-regular":
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(size, arity)))
        universe = np.arange(1, arity + 2)
        return [(0,) + tuple(int(e) for e in rng.choice(universe, arity - 1, replace=False))
                for _ in range(size)]
    raise ValueError(f"unknown family {name!r}; choose from {FAMILIES}")


def two_way_corpus() -> list:
    """Named pair inputs (at most ``MAX_PAIRS`` pairs) used by the exact bound suite."""
    corpus = [("single", [(0, 1)]), ("repeat-2", [(0, 1), (0, 1)])]
    for name in FAMILIES:
        for size in (3, 5, 8):
            corpus.append((f"{name}-{size}", adversarial_family(name, size, 2)))
    for seed in (1, 2):
        corpus.append((f"random-k-regular-8-s{seed}",
                       adversarial_family("random-k-regular", 8, 2, seed)))
    corpus.append(("mixed", [(0, 1), (1, 2), (0, 2), (2, 3), (0, 3), (1, 3), (0, 1), (0, 2)]))
    corpus.append(("hub", [(1, 2), (0, 1), (1, 3), (0, 3), (2, 3), (0, 2), (0, 1)]))
    return corpus


def three_way_corpus() -> list:
    """Named triple inputs (at most ``MAX_TRIPLES`` triples)."""
    corpus = [("single", [(0, 1, 2)])]
    for name in FAMILIES:
        for size in (2, 3):
            corpus.append((f"{name}-{size}", adversarial_family(name, size, 3)))
    for seed in (1, 2):
        corpus.append((f"random-k-regular-3-s{seed}",
                       adversarial_family("random-k-regular", 3, 3, seed)))
    corpus.append(("shared-pair", [(0, 1, 2), (0, 1, 3), (0, 1, 2)]))
    corpus.append(("gap", [(0, 1, 2), (1, 2, 3), (0, 2, 3)]))
    return corpus


@dataclass(frozen=True)
class BoundCheck:
    input: str
    spec: str
    value: float
    bound: float
    passed: bool
    exact: bool = True


def check_input(name: str, queries, element: int = 0, windows=None, trials: int = 0,
                seed: int = 0, allow_four: bool = False) -> list:
    """Check every window family (or the given one) for an input.

    Exact results are compared exactly against the product bound; Monte Carlo
    results (``trials > 0``) use :func:`bound_holds`.
    """
    queries = _as_tuples(queries)
    three = len(queries[0]) == 3 if queries else False
    n_occ = len(occurrences(queries, element))
    specs = ([SubsequenceSpec(element, windows)] if windows is not None
             else list(all_window_specs(element, n_occ)))
    bound_fn = three_way_product_bound if three else two_way_product_bound
    rows = []
    enumerable = len(queries) <= (MAX_TRIPLES if three else MAX_PAIRS) or (three and allow_four and len(queries) <= HARD_MAX_TRIPLES)
    if enumerable:
        if three:
            counts, total = three_way_pattern_counts(queries, element, allow_four)
        else:
            counts, total = two_way_pattern_counts(queries, element)
        for spec in specs:
            spec.check_against(n_occ)
            p = Fraction(never_count(counts, spec), total)
            b = bound_fn(spec)
            rows.append(BoundCheck(name, spec.label(), float(p), float(b), p <= b))
    if trials:
        counts, total = mc_pattern_counts(queries, element, trials, seed)
        for spec in specs:
            spec.check_against(n_occ)
            est = wilson_interval(never_count(counts, spec), total)
            b = bound_fn(spec)
            rows.append(BoundCheck(name, spec.label(), est.estimate, float(b),
                                   bound_holds(est, b), exact=False))
    return rows
