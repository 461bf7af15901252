"""Planted-community hypergraphs with a learnable signal."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from .config import read_key_values
from .errors import ParameterError
from .hypergraph import Hypergraph, write_edges, write_features
from .rng import substream

FEATURE_NOISE = 0.1
_MAX_RESAMPLE = 1000


@dataclass(frozen=True)
class SyntheticSpec:
    num_nodes: int = 200
    num_communities: int = 20
    edges_per_community: int = 15
    size_range: tuple[int, int] = (3, 6)
    noise_edge_fraction: float = 0.05
    feature_dim: int | None = None  # defaults to num_communities
    seed: int = 7

    def __post_init__(self):
        s_min, s_max = self.size_range
        if s_min < 2 or s_max < s_min:
            raise ParameterError(f"invalid size range {self.size_range}")
        if self.num_communities < 1 or self.num_nodes < self.num_communities:
            raise ParameterError("need 1 <= num_communities <= num_nodes")
        if self.num_nodes // self.num_communities < s_min:
            raise ParameterError(
                f"communities of ~{self.num_nodes // self.num_communities} nodes are smaller than s_min={s_min}"
            )
        if not 0.0 <= self.noise_edge_fraction <= 1.0:
            raise ParameterError("noise_edge_fraction must lie in [0, 1]")
        if self.feature_dim is not None and self.feature_dim < self.num_communities:
            raise ParameterError("feature_dim must be >= num_communities")

    @property
    def num_edges(self) -> int:
        return self.num_communities * self.edges_per_community

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SyntheticSpec":
        raw = read_key_values(path)
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs: dict = {}
        for key, value in raw.items():
            if key not in known:
                raise ParameterError(f"unknown synthetic spec key {key!r}")
            if key == "size_range":
                lo, _, hi = value.replace(" ", "").partition(",")
                kwargs[key] = (int(lo), int(hi or lo))
            elif key == "noise_edge_fraction":
                kwargs[key] = float(value)
            else:
                kwargs[key] = int(value)
        return cls(**kwargs)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Hypergraph, np.ndarray]:
    """Hypergraph whose hyperedges mostly stay inside one community.

    ``round(noise_edge_fraction * total)`` hyperedges are instead drawn over
    all nodes and span at least two communities.  Features are the one-hot
    community indicator plus N(0, 0.1^2) noise (extra columns pure noise).
    """
    rng = substream(spec.seed, "synthetic")
    labels = np.empty(spec.num_nodes, dtype=np.int64)
    labels[rng.permutation(spec.num_nodes)] = np.arange(spec.num_nodes) % spec.num_communities
    members = [np.flatnonzero(labels == c) for c in range(spec.num_communities)]
    s_min, s_max = spec.size_range

    total = spec.num_edges
    n_noise = int(round(spec.noise_edge_fraction * total))
    noisy = set(rng.choice(total, size=n_noise, replace=False).tolist()) if n_noise else set()

    edges: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    for j in range(total):
        community = j // spec.edges_per_community
        for _ in range(_MAX_RESAMPLE):
            if j in noisy:
                size = int(rng.integers(s_min, min(s_max, spec.num_nodes) + 1))
                nodes = rng.choice(spec.num_nodes, size=size, replace=False)
                if len(set(labels[nodes].tolist())) < 2:
                    continue
            else:
                pool = members[community]
                size = int(rng.integers(s_min, min(s_max, len(pool)) + 1))
                nodes = rng.choice(pool, size=size, replace=False)
            edge = tuple(sorted(int(v) for v in nodes))
            if edge not in seen:
                break
        else:
            raise ParameterError(f"could not draw a distinct hyperedge for community {community}")
        seen.add(edge)
        edges.append(edge)

    dim = spec.feature_dim or spec.num_communities
    features = rng.normal(0.0, FEATURE_NOISE, size=(spec.num_nodes, dim))
    features[np.arange(spec.num_nodes), labels] += 1.0
    return Hypergraph(spec.num_nodes, tuple(edges), features), labels


def write_synthetic(directory: str | os.PathLike, h: Hypergraph, labels: np.ndarray) -> dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {
        "edges": os.path.join(directory, "edges.txt"),
        "features": os.path.join(directory, "features.txt"),
        "labels": os.path.join(directory, "labels.txt"),
    }
    write_edges(paths["edges"], h.edges)
    write_features(paths["features"], h.features)
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(c)}\n" for c in labels)
    return paths
