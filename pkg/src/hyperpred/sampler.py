"""Heuristic negative hyperedge samplers and the hyperedge-size distribution.

* SNS: ``n`` nodes uniformly at random.
* MNS: a connected ``n``-node set of the clique expansion, grown from a
  random expansion edge by repeatedly adding a random adjacent node.
* CNS: take a hyperedge ``e``, drop one member ``u`` and add an outside node
  ``v`` adjacent to every remaining member.

All samplers are pure functions of their inputs and the supplied
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ParameterError, SamplingExhausted, StateError
from .hypergraph import CliqueExpansion, Edge, Hypergraph, clique_expand

MAX_RETRIES = 100
METHODS = ("sns", "mns", "cns")


@dataclass(frozen=True)
class SizeDistribution:
    sizes: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_sizes(cls, observed: Iterable[int], min_size: int = 2) -> "SizeDistribution":
        values, counts = np.unique(
            np.array([s for s in observed if s >= min_size], dtype=np.int64), return_counts=True
        )
        total = counts.sum()
        return cls(values, counts / total if total else counts.astype(np.float64))

    @classmethod
    def from_hypergraph(cls, h: Hypergraph, min_size: int = 2) -> "SizeDistribution":
        return cls.from_sizes(h.edge_sizes(), min_size)

    def __len__(self) -> int:
        return len(self.sizes)


def sample_size(dist: SizeDistribution, rng: np.random.Generator) -> int:
    if len(dist) == 0:
        raise StateError("size distribution is empty")
    return int(dist.sizes[rng.choice(len(dist), p=dist.probs)])


def _check_size(n: int, num_nodes: int, min_size: int) -> None:
    if n < min_size:
        raise ParameterError(f"negative size {n} below floor {min_size}")
    if n > num_nodes:
        raise ParameterError(f"negative size {n} exceeds node count {num_nodes}")


def sns(h: Hypergraph, n: int, rng: np.random.Generator, min_size: int = 2) -> Edge:
    _check_size(n, h.num_nodes, min_size)
    return tuple(sorted(int(v) for v in rng.choice(h.num_nodes, size=n, replace=False)))


def mns(
    h: Hypergraph,
    n: int,
    rng: np.random.Generator,
    expansion: CliqueExpansion | None = None,
    min_size: int = 2,
    max_retries: int = MAX_RETRIES,
) -> Edge:
    _check_size(n, h.num_nodes, min_size)
    g = expansion if expansion is not None else clique_expand(h)
    if len(g.edges) == 0:
        raise SamplingExhausted("clique expansion has no edges")
    for _ in range(max_retries):
        u, v = g.edges[rng.integers(len(g.edges))]
        if n == 1:
            return (int(u),)
        chosen = {int(u), int(v)}
        frontier = (g.neighbor_set(int(u)) | g.neighbor_set(int(v))) - chosen
        while len(chosen) < n and frontier:
            pick = sorted(frontier)[rng.integers(len(frontier))]
            chosen.add(pick)
            frontier = (frontier | g.neighbor_set(pick)) - chosen
        if len(chosen) == n:
            return tuple(sorted(chosen))
    raise SamplingExhausted(f"no connected {n}-node set found after {max_retries} attempts")


def cns(
    h: Hypergraph,
    rng: np.random.Generator,
    expansion: CliqueExpansion | None = None,
    max_retries: int = MAX_RETRIES,
    dedup_positives: bool = False,
) -> Edge:
    """Corrupt one member of a random hyperedge.

    ``e`` is uniform over hyperedges, then ``u`` uniform over its members,
    then ``v`` uniform over valid replacements.  ``expansion`` defaults to
    the clique expansion of ``h`` itself; pass a larger one to draw ``e``
    from a subset of hyperedges while judging adjacency on the whole graph.
    """
    if h.num_edges == 0:
        raise SamplingExhausted("hypergraph has no hyperedges")
    g = expansion if expansion is not None else clique_expand(h)
    all_nodes = frozenset(range(h.num_nodes))
    for _ in range(max_retries):
        e = h.edges[rng.integers(h.num_edges)]
        u = e[rng.integers(len(e))]
        rest = [w for w in e if w != u]
        if rest:
            candidates = set(g.neighbor_set(rest[0]))
            for w in rest[1:]:
                candidates &= g.neighbor_set(w)
        else:
            candidates = set(all_nodes)
        candidates -= set(e)
        if not candidates:
            continue
        v = sorted(candidates)[rng.integers(len(candidates))]
        out = tuple(sorted(rest + [v]))
        if dedup_positives and out in h.edge_set:
            continue
        return out
    raise SamplingExhausted(f"no valid (e, u, v) replacement found after {max_retries} attempts")


def sample_negatives(
    h: Hypergraph,
    method: str,
    count: int,
    rng: np.random.Generator,
    sizes: SizeDistribution | None = None,
    expansion: CliqueExpansion | None = None,
    dedup_positives: bool = False,
) -> list[Edge]:
    """Draw ``count`` negatives with one method.

    SNS and MNS sizes come from ``sizes`` (default: the sizes of ``h``).
    """
    if method not in METHODS:
        raise ParameterError(f"unknown sampling method {method!r}; expected one of {METHODS}")
    if method != "sns" and expansion is None:
        expansion = clique_expand(h)
    if method != "cns" and sizes is None:
        sizes = SizeDistribution.from_hypergraph(h)
    out: list[Edge] = []
    for _ in range(count):
        if method == "cns":
            out.append(cns(h, rng, expansion, dedup_positives=dedup_positives))
            continue
        n = sample_size(sizes, rng)
        if method == "sns":
            out.append(sns(h, n, rng))
        else:
            out.append(mns(h, n, rng, expansion))
    return out
