"""Two-way and three-way online correlated selection.

The two-way selector draws three fair bits per pair: a role bit (sender or
receiver), an element bit (which element the pair wants to correlate on) and
an output bit.  A receiver wanting ``e`` is linked to the immediately
preceding pair containing ``e`` when that pair was a sender wanting ``e``; a
linked receiver makes the opposite decision on ``e``.  Links are resolved
lazily when the receiver arrives, so the state is one record per element.

The three-way selector picks one of the three sub-pairs uniformly, lets a
first two-way selector choose from it, and lets a second two-way selector
choose between that output and the left-out element.

Besides the online classes, :func:`simulate_two_way_lanes` and
:func:`simulate_three_way_lanes` run the same decision rule on many
independent coin assignments at once (one "lane" per assignment); the
oracle uses them for exhaustive enumeration and Monte Carlo.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, Optional, Protocol, Sequence, Union

import numpy as np

SENDER = "sender"
RECEIVER = "receiver"

# sub-pairs of a triple (positions) and the position left out
TRIPLE_SPLITS = ((0, 1, 2), (0, 2, 1), (1, 2, 0))


class InputOrderError(ValueError):
    """A query arrived with a step index not above every earlier one."""


class MalformedQueryError(ValueError):
    """A query repeats an element."""


@dataclass(frozen=True)
class PairQuery:
    a: int
    b: int
    step: int


@dataclass(frozen=True)
class TripleQuery:
    a: int
    b: int
    c: int
    step: int

    @property
    def elements(self):
        return (self.a, self.b, self.c)


@dataclass(frozen=True)
class CoinTriple:
    role_bit: int
    element_bit: int
    output_bit: int

    @classmethod
    def from_int(cls, v: int) -> "CoinTriple":
        return cls(v & 1, (v >> 1) & 1, (v >> 2) & 1)

    def as_int(self) -> int:
        return self.role_bit | (self.element_bit << 1) | (self.output_bit << 2)


@dataclass(frozen=True)
class TraceStep:
    step: int
    a: int
    b: int
    role: str
    want: int
    matched: Optional[int]  # step of the linked sender, if any
    annotation: Optional[int]  # element shared with the linked sender
    output: int


class TwoWayTrace(list):
    """Per-step record of a two-way run, in arrival order."""

    def matched_pairs(self):
        return [(t.matched, t.step, t.annotation) for t in self if t.matched is not None]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(t), sort_keys=True) + "\n" for t in self)


class TwoWaySelector(Protocol):
    def select(self, a: int, b: int, step: Optional[int] = None) -> int: ...


@dataclass
class _LastPair:
    step: int
    sender_wants_it: bool
    chose_it: bool


class TwoWayOCS:
    """Online two-way selector with quality 1/16.

    Coins come from ``rng`` (a :class:`numpy.random.Generator`) unless an
    explicit ``coins`` iterable is given, in which case each step consumes
    one :class:`CoinTriple` (or its integer encoding) from it.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None,
                 coins: Optional[Iterable[Union[CoinTriple, int]]] = None):
        if rng is None and coins is None:
            rng = np.random.default_rng()
        self._rng = rng
        self._coins: Optional[Iterator] = iter(coins) if coins is not None else None
        self._last: dict[int, _LastPair] = {}
        self._step = -1
        self._trace = TwoWayTrace()

    def _draw(self) -> CoinTriple:
        if self._coins is not None:
            c = next(self._coins)
            return c if isinstance(c, CoinTriple) else CoinTriple.from_int(int(c))
        return CoinTriple.from_int(int(self._rng.integers(0, 8)))

    def select(self, a: int, b: int, step: Optional[int] = None) -> int:
        if a == b:
            raise MalformedQueryError(f"pair repeats element {a}")
        if step is None:
            step = self._step + 1
        elif step <= self._step:
            raise InputOrderError(f"step {step} does not follow step {self._step}")
        coin = self._draw()
        receiver = coin.role_bit == 1
        want = b if coin.element_bit else a
        other = a if want == b else b

        matched = annotation = None
        prev = self._last.get(want)
        if receiver and prev is not None and prev.sender_wants_it:
            matched, annotation = prev.step, want
            output = other if prev.chose_it else want
        else:
            output = b if coin.output_bit else a

        for e in (a, b):
            self._last[e] = _LastPair(step, not receiver and want == e, output == e)
        self._step = step
        self._trace.append(TraceStep(step, a, b, RECEIVER if receiver else SENDER,
                                     want, matched, annotation, output))
        return output

    def select_query(self, q: PairQuery) -> int:
        return self.select(q.a, q.b, q.step)

    def trace(self) -> TwoWayTrace:
        return TwoWayTrace(self._trace)


@dataclass(frozen=True)
class ThreeWayStep:
    step: int
    triple: tuple
    pair: tuple
    left_out: int
    first_output: int
    output: int


class ThreeWayOCS:
    """Three-way selector composed from two independent two-way selectors."""

    def __init__(self, pair_rng: np.random.Generator, selector_a: TwoWayOCS,
                 selector_b: TwoWaySelector, choices: Optional[Iterable[int]] = None):
        self._rng = pair_rng
        self._choices = iter(choices) if choices is not None else None
        self.selector_a = selector_a
        self.selector_b = selector_b
        self._step = -1
        self._trace: list[ThreeWayStep] = []

    def _choose_split(self) -> int:
        if self._choices is not None:
            return int(next(self._choices))
        return int(self._rng.integers(0, 3))

    def select(self, a: int, b: int, c: int, step: Optional[int] = None) -> int:
        if len({a, b, c}) != 3:
            raise MalformedQueryError(f"triple ({a}, {b}, {c}) repeats an element")
        if step is None:
            step = self._step + 1
        elif step <= self._step:
            raise InputOrderError(f"step {step} does not follow step {self._step}")
        triple = (a, b, c)
        i, j, left = TRIPLE_SPLITS[self._choose_split()]
        first = self.selector_a.select(triple[i], triple[j], step)
        out = self.selector_b.select(first, triple[left], step)
        self._step = step
        self._trace.append(ThreeWayStep(step, triple, (triple[i], triple[j]),
                                        triple[left], first, out))
        return out

    def select_query(self, q: TripleQuery) -> int:
        return self.select(q.a, q.b, q.c, q.step)

    def trace(self) -> list:
        return list(self._trace)


def _streams(seed, n: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def new_two_way(seed=None) -> TwoWayOCS:
    return TwoWayOCS(_streams(seed, 1)[0])


def new_three_way(seed=None, b_selector: Optional[TwoWaySelector] = None) -> ThreeWayOCS:
    """Three-way selector whose pair-choice, A and B randomness are independent substreams."""
    pick, rng_a, rng_b = _streams(seed, 3)
    if b_selector is None:
        b_selector = TwoWayOCS(rng_b)
    return ThreeWayOCS(pick, TwoWayOCS(rng_a), b_selector)


# ---------------------------------------------------------------------------
# replay format
# ---------------------------------------------------------------------------

def parse_replay(text: str) -> list:
    """Parse ``P a b`` / ``T a b c`` lines; blank lines and ``#`` comments are skipped."""
    queries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *ids = line.split()
        try:
            ids = [int(t) for t in ids]
        except ValueError as exc:
            raise MalformedQueryError(f"line {lineno}: non-integer id in {raw!r}") from exc
        step = len(queries)
        if kind == "P" and len(ids) == 2:
            if ids[0] == ids[1]:
                raise MalformedQueryError(f"line {lineno}: pair repeats an element")
            queries.append(PairQuery(ids[0], ids[1], step))
        elif kind == "T" and len(ids) == 3:
            if len(set(ids)) != 3:
                raise MalformedQueryError(f"line {lineno}: triple repeats an element")
            queries.append(TripleQuery(ids[0], ids[1], ids[2], step))
        else:
            raise MalformedQueryError(f"line {lineno}: expected 'P a b' or 'T a b c', got {raw!r}")
    return queries


def format_replay(queries: Sequence) -> str:
    lines = []
    for q in queries:
        if isinstance(q, PairQuery):
            lines.append(f"P {q.a} {q.b}")
        else:
            lines.append(f"T {q.a} {q.b} {q.c}")
    return "\n".join(lines) + "\n"


def replay(queries: Sequence, seed=None) -> list:
    """Run pair queries through a two-way selector and triple queries through a
    three-way selector (independent instances); return one JSON-ready dict per query."""
    two_seed, three_seed = np.random.SeedSequence(seed).spawn(2)
    two = TwoWayOCS(np.random.default_rng(two_seed))
    three = new_three_way(three_seed)
    rows = []
    for q in queries:
        if isinstance(q, PairQuery):
            two.select_query(q)
            t = two.trace()[-1]
            rows.append({"step": q.step, "kind": "P", "role": t.role,
                         "matched": t.matched, "output": t.output})
        else:
            three.select_query(q)
            t = three.trace()[-1]
            a_t = three.selector_a.trace()[-1]
            b_t = three.selector_b.trace()[-1] if hasattr(three.selector_b, "trace") else None
            rows.append({
                "step": q.step, "kind": "T",
                "pair": list(t.pair), "first_output": t.first_output,
                "role": b_t.role if b_t else None,
                "matched": b_t.matched if b_t else None,
                "first_role": a_t.role, "first_matched": a_t.matched,
                "output": t.output,
            })
    return rows


def trace_jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


# ---------------------------------------------------------------------------
# lane simulation: the same rule over many coin assignments at once
# ---------------------------------------------------------------------------

@dataclass
class LaneResult:
    outputs: np.ndarray  # (lanes, steps) chosen element id
    partner: np.ndarray  # (lanes, steps) linked sender step or -1


class _Lanes:
    """Vectorized state of one two-way selector over ``lanes`` independent runs.

    State is stored lane-major and flattened so per-lane lookups are a single
    1-D gather at ``lane * n_elements + element``.
    """

    def __init__(self, n_elements: int, lanes: int):
        self.m = n_elements
        self.base = np.arange(lanes, dtype=np.int64) * n_elements
        self.last = np.full(lanes * n_elements, -1, dtype=np.int16)
        self.fwd = np.zeros(lanes * n_elements, dtype=bool)
        self.chose = np.zeros(lanes * n_elements, dtype=bool)

    def step(self, i: int, first: np.ndarray, second: np.ndarray, coins: np.ndarray):
        receiver = (coins & 1).astype(bool)
        want_second = (coins & 2).astype(bool)
        out_second = (coins & 4).astype(bool)
        want = np.where(want_second, second, first)
        other = np.where(want_second, first, second)

        at_want = self.base + want
        linked = receiver & self.fwd[at_want]
        prev_chose = self.chose[at_want]
        free_out = np.where(out_second, second, first)
        out = np.where(linked, np.where(prev_chose, other, want), free_out)
        partner = np.where(linked, self.last[at_want], -1)

        sender = ~receiver
        for e in (first, second):
            at = self.base + e
            self.last[at] = i
            self.fwd[at] = sender & (want == e)
            self.chose[at] = out == e
        return out, partner


def _as_lanes(a, lanes):
    a = np.asarray(a)
    return np.broadcast_to(a, (lanes,)) if a.ndim == 0 else a


def simulate_two_way_lanes(pairs: Sequence[tuple], coins: np.ndarray) -> LaneResult:
    """Run the two-way rule on fixed ``pairs`` for every row of ``coins``.

    ``coins`` has shape ``(lanes, len(pairs))`` with entries in 0..7 using the
    :class:`CoinTriple` integer encoding; element ids must be small
    non-negative integers.
    """
    coins = np.asarray(coins)
    lanes, n = coins.shape
    m = max(max(p) for p in pairs) + 1 if pairs else 0
    state = _Lanes(m, lanes)
    outputs = np.empty((lanes, n), dtype=np.int16)
    partner = np.empty((lanes, n), dtype=np.int16)
    for i, (a, b) in enumerate(pairs):
        out, par = state.step(i, _as_lanes(a, lanes), _as_lanes(b, lanes), coins[:, i])
        outputs[:, i] = out
        partner[:, i] = par
    return LaneResult(outputs, partner)


def simulate_three_way_lanes(triples: Sequence[tuple], choices: np.ndarray,
                             coins_a: np.ndarray, coins_b: np.ndarray) -> np.ndarray:
    """Run the three-way rule for every lane; returns chosen element ids ``(lanes, steps)``.

    ``choices`` holds the sub-pair index (0..2, see ``TRIPLE_SPLITS``) per lane
    and step; ``coins_a`` / ``coins_b`` feed the first and second selector.
    """
    choices = np.asarray(choices)
    lanes, n = choices.shape
    m = max(max(t) for t in triples) + 1 if triples else 0
    sel_a, sel_b = _Lanes(m, lanes), _Lanes(m, lanes)
    split = np.array(TRIPLE_SPLITS)
    outputs = np.empty((lanes, n), dtype=np.int16)
    for i, triple in enumerate(triples):
        t = np.asarray(triple)
        pos = split[choices[:, i]]
        first, second, left = t[pos[:, 0]], t[pos[:, 1]], t[pos[:, 2]]
        a_out, _ = sel_a.step(i, first, second, coins_a[:, i])
        out, _ = sel_b.step(i, a_out, left, coins_b[:, i])
        outputs[:, i] = out
    return outputs
