"""Hypergraph data model, text-file ingestion, clique expansion and splits."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import FormatError, ParameterError, ReferentialError
from .rng import substream

logger = logging.getLogger(__name__)

Edge = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Nodes ``0..num_nodes-1``, a list of hyperedges and node features.

    Hyperedges are stored as sorted tuples of distinct node ids, in input
    order, without duplicates.  The object is treated as immutable.
    """

    num_nodes: int
    edges: tuple[Edge, ...]
    features: np.ndarray = field(repr=False)

    def __post_init__(self):
        for j, e in enumerate(self.edges):
            if not e:
                raise FormatError(f"hyperedge {j} is empty")
            if e[0] < 0 or e[-1] >= self.num_nodes:
                raise ReferentialError(
                    f"hyperedge {j} references node outside [0, {self.num_nodes})"
                )
        if self.features.shape[0] != self.num_nodes:
            raise FormatError(
                f"{self.features.shape[0]} feature rows for {self.num_nodes} nodes"
            )

    @classmethod
    def from_edges(
        cls, num_nodes: int, edges: Iterable[Iterable[int]], features: np.ndarray | None = None
    ) -> "Hypergraph":
        """Build from arbitrary node collections, collapsing duplicates.

        Missing features default to the identity matrix.
        """
        unique: dict[Edge, None] = {}
        dropped = 0
        for e in edges:
            key = tuple(sorted(set(int(v) for v in e)))
            if key in unique:
                dropped += 1
            unique[key] = None
        if dropped:
            logger.warning("dropped %d duplicate hyperedge(s)", dropped)
        if features is None:
            features = np.eye(num_nodes)
        return cls(int(num_nodes), tuple(unique), np.asarray(features, dtype=np.float64))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """``|V| x |E|`` 0/1 matrix with a one where node i lies in edge j."""
        rows = np.fromiter((v for e in self.edges for v in e), dtype=np.int64)
        cols = np.repeat(np.arange(self.num_edges), [len(e) for e in self.edges])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.num_nodes, self.num_edges))

    @cached_property
    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def edge_sizes(self) -> np.ndarray:
        return np.array([len(e) for e in self.edges], dtype=np.int64)

    def degrees(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=1)).ravel()

    def subgraph(self, edge_indices: Sequence[int]) -> "Hypergraph":
        """Same nodes and features, keeping only the selected hyperedges."""
        return Hypergraph(self.num_nodes, tuple(self.edges[i] for i in edge_indices), self.features)


def edges_from_incidence(matrix: sp.spmatrix) -> list[Edge]:
    """Recover hyperedges (columns) from an incidence matrix."""
    csc = sp.csc_matrix(matrix)
    csc.sort_indices()
    return [
        tuple(int(v) for v in csc.indices[csc.indptr[j] : csc.indptr[j + 1]])
        for j in range(csc.shape[1])
    ]


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _data_lines(path: str | os.PathLike) -> list[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return [(no, line) for no, line in enumerate(lines, 1) if not line.lstrip().startswith("#")]


def read_features(path: str | os.PathLike) -> np.ndarray:
    rows = []
    for no, line in _data_lines(path):
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise FormatError(f"{path}:{no}: bad feature value ({exc})") from None
    if not rows:
        raise FormatError(f"{path}: no feature rows")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width or width == 0:
            raise FormatError(f"{path}: ragged feature row {i} ({len(row)} values, expected {width})")
    return np.array(rows, dtype=np.float64)


def read_edges(path: str | os.PathLike) -> list[list[int]]:
    edges = []
    for no, line in _data_lines(path):
        tokens = [t.strip() for t in line.split(",") if t.strip()]
        if not tokens:
            raise FormatError(f"{path}:{no}: empty hyperedge line")
        try:
            edges.append([int(t) for t in tokens])
        except ValueError:
            raise FormatError(f"{path}:{no}: non-integer node id in {line!r}") from None
    return edges


def parse_hypergraph(edge_file: str | os.PathLike, feature_file: str | os.PathLike) -> Hypergraph:
    """Read an edge file and a feature file into a :class:`Hypergraph`.

    The node count is the number of feature rows.
    """
    features = read_features(feature_file)
    num_nodes = features.shape[0]
    edges = read_edges(edge_file)
    for j, e in enumerate(edges):
        bad = [v for v in e if v < 0 or v >= num_nodes]
        if bad:
            raise ReferentialError(
                f"{edge_file}: hyperedge {j} references node {bad[0]} but only {num_nodes} nodes have features"
            )
    return Hypergraph.from_edges(num_nodes, edges, features)


def write_edges(path: str | os.PathLike, edges: Iterable[Iterable[int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in edges:
            fh.write(",".join(str(int(v)) for v in e) + "\n")


def write_features(path: str | os.PathLike, features: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.asarray(features, dtype=np.float64):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# clique expansion
# ---------------------------------------------------------------------------


class CliqueExpansion:
    """Simple undirected graph joining every pair of nodes sharing a hyperedge."""

    def __init__(self, num_nodes: int, adjacency: sp.csr_matrix):
        self.num_nodes = num_nodes
        self.adjacency = adjacency
        self.neighbors: list[np.ndarray] = [
            adjacency.indices[adjacency.indptr[i] : adjacency.indptr[i + 1]]
            for i in range(num_nodes)
        ]
        self._neighbor_sets = [frozenset(int(v) for v in n) for n in self.neighbors]
        upper = sp.triu(adjacency, k=1).tocoo()
        self.edges: np.ndarray = np.column_stack([upper.row, upper.col]).astype(np.int64)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._neighbor_sets[u]

    def neighbor_set(self, u: int) -> frozenset[int]:
        return self._neighbor_sets[u]

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}


def clique_expand(h: Hypergraph) -> CliqueExpansion:
    inc = h.incidence
    co = (inc @ inc.T).tocsr()
    co.setdiag(0)
    co.eliminate_zeros()
    co.data[:] = 1.0
    co.sort_indices()
    return CliqueExpansion(h.num_nodes, co)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSet:
    train: tuple[int, ...]
    valid: tuple[int, ...]
    test: tuple[int, ...]

    def __getitem__(self, name: str) -> tuple[int, ...]:
        if name not in ("train", "valid", "test"):
            raise KeyError(name)
        return getattr(self, name)


def split_dataset(h: Hypergraph, seed: int, fractions=(0.6, 0.2, 0.2)) -> SplitSet:
    """Random 60/20/20 partition of hyperedge indices."""
    n = h.num_edges
    if n < 5:
        raise ParameterError(f"need at least 5 hyperedges to split, got {n}")
    perm = substream(seed, "split").permutation(n)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    return SplitSet(
        tuple(int(i) for i in perm[:n_train]),
        tuple(int(i) for i in perm[n_train : n_train + n_valid]),
        tuple(int(i) for i in perm[n_train + n_valid :]),
    )


def write_split(path: str | os.PathLike, split: SplitSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in ("train", "valid", "test"):
            fh.write(f"{name}: " + ",".join(str(i) for i in split[name]) + "\n")


def read_split(path: str | os.PathLike) -> SplitSet:
    parts: dict[str, tuple[int, ...]] = {}
    for no, line in _data_lines(path):
        if not line.strip():
            continue
        name, sep, rest = line.partition(":")
        name = name.strip()
        if not sep or name not in ("train", "valid", "test"):
            raise FormatError(f"{path}:{no}: expected 'train:', 'valid:' or 'test:'")
        try:
            parts[name] = tuple(int(t) for t in rest.split(",") if t.strip())
        except ValueError:
            raise FormatError(f"{path}:{no}: non-integer edge index") from None
    missing = {"train", "valid", "test"} - parts.keys()
    if missing:
        raise FormatError(f"{path}: missing section(s) {sorted(missing)}")
    return SplitSet(parts["train"], parts["valid"], parts["test"])
