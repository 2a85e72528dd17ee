"""Bipartite instances for online matching, their generators and offline optima."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

KINDS = ("random-bipartite", "upper-triangular-adversarial", "uniform-weights",
         "exponential-weights")


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Arrival:
    id: int
    edges: tuple  # ((offline vertex, weight), ...)


@dataclass
class Instance:
    offline: int
    arrivals: list = field(default_factory=list)

    def __post_init__(self):
        if self.offline < 0:
            raise InstanceError("offline vertex count must be non-negative")
        seen = set()
        arrivals = []
        for a in self.arrivals:
            if not isinstance(a, Arrival):
                a = Arrival(int(a[0]), tuple(a[1]))
            edges = tuple((int(u), float(w)) for u, w in a.edges)
            us = [u for u, _ in edges]
            if len(set(us)) != len(us):
                raise InstanceError(f"arrival {a.id} lists an offline vertex twice")
            for u, w in edges:
                if not 0 <= u < self.offline:
                    raise InstanceError(f"arrival {a.id}: offline id {u} out of range")
                if not w >= 0:
                    raise InstanceError(f"arrival {a.id}: negative weight {w}")
            if a.id in seen:
                raise InstanceError(f"duplicate online id {a.id}")
            seen.add(a.id)
            arrivals.append(Arrival(a.id, edges))
        self.arrivals = arrivals

    @property
    def online(self) -> int:
        return len(self.arrivals)

    def edges(self):
        for j, a in enumerate(self.arrivals):
            for u, w in a.edges:
                yield u, j, w

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.offline, self.online))
        for u, j, w in self.edges():
            W[u, j] = w
        return W

    def is_unit(self) -> bool:
        return all(w == 1.0 for _, _, w in self.edges())

    def to_json(self) -> str:
        return json.dumps({
            "offline": self.offline,
            "arrivals": [{"id": a.id, "edges": [[u, w] for u, w in a.edges]}
                         for a in self.arrivals],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        try:
            data = json.loads(text)
            return cls(int(data["offline"]),
                       [Arrival(int(a["id"]), tuple((int(u), float(w)) for u, w in a["edges"]))
                        for a in data["arrivals"]])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InstanceError):
                raise
            raise InstanceError(f"malformed instance: {exc}") from exc


def from_adjacency(offline: int, neighbours: Sequence[Sequence], weights=None) -> Instance:
    """Unit-weight (or given-weight) instance from per-arrival neighbour lists."""
    arrivals = []
    for j, nb in enumerate(neighbours):
        ws = weights[j] if weights is not None else [1.0] * len(nb)
        arrivals.append(Arrival(j, tuple(zip(nb, ws))))
    return Instance(offline, arrivals)


def generate_instance(kind: str, n: int, seed=0, p: float = 0.3) -> Instance:
    """Deterministic instance of ``n`` offline and ``n`` online vertices.

    random-bipartite               each edge present with probability ``p``, weight 1
    upper-triangular-adversarial   arrival i sees offline vertices i..n-1, weight 1
    uniform-weights                random edges with weights uniform on (0, 1]
    exponential-weights            random edges with exponential(1) weights
    """
    if n < 0:
        raise InstanceError("n must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(KINDS.index(kind)
                                                                         if kind in KINDS else 99,)))
    if kind == "upper-triangular-adversarial":
        return from_adjacency(n, [list(range(i, n)) for i in range(n)])
    if kind not in KINDS:
        raise InstanceError(f"unknown kind {kind!r}; choose from {KINDS}")
    mask = rng.random((n, n)) < p
    if kind == "random-bipartite":
        W = np.ones((n, n))
    elif kind == "uniform-weights":
        W = 1.0 - rng.random((n, n))
    else:
        W = rng.exponential(1.0, (n, n))
    arrivals = []
    for j in range(n):
        us = np.flatnonzero(mask[:, j])
        arrivals.append(Arrival(j, tuple((int(u), float(W[u, j])) for u in us)))
    return Instance(n, arrivals)


def offline_optimum(inst: Instance) -> float:
    """Maximum matching size (unit weights) or maximum matching weight."""
    if inst.offline == 0 or inst.online == 0:
        return 0.0
    if inst.is_unit():
        rows, cols = [], []
        for u, j, _ in inst.edges():
            rows.append(u)
            cols.append(j)
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(inst.offline, inst.online))
        match = maximum_bipartite_matching(graph, perm_type="column")
        return float((match >= 0).sum())
    W = inst.weight_matrix()
    r, c = linear_sum_assignment(W, maximize=True)
    return float(W[r, c].sum())
