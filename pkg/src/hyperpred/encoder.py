"""Two-stage (node -> hyperedge -> node) hypergraph encoder."""

from __future__ import annotations

import weakref
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Value
from .errors import ShapeError
from .hypergraph import Hypergraph
from .params import ParameterSet, glorot

Activation = Callable[[Value], Value] | None

_OPERATORS: "weakref.WeakKeyDictionary[Hypergraph, tuple[sp.csr_matrix, sp.csr_matrix]]" = (
    weakref.WeakKeyDictionary()
)


def propagation_operators(h: Hypergraph) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Degree-normalised ``(node->edge, edge->node)`` aggregation matrices.

    The first averages member nodes per hyperedge (``|E| x |V|``), the
    second averages incident hyperedges per node (``|V| x |E|``).  Isolated
    nodes get a zero row.
    """
    cached = _OPERATORS.get(h)
    if cached is not None:
        return cached
    inc = h.incidence
    edge_size = np.maximum(np.asarray(inc.sum(axis=0)).ravel(), 1.0)
    node_deg = np.maximum(np.asarray(inc.sum(axis=1)).ravel(), 1.0)
    to_edges = sp.diags(1.0 / edge_size) @ inc.T
    to_nodes = sp.diags(1.0 / node_deg) @ inc
    ops = (sp.csr_matrix(to_edges), sp.csr_matrix(to_nodes))
    _OPERATORS[h] = ops
    return ops


class EncoderParams(ParameterSet):
    """Per layer ``l``: ``edge.l.w``, ``edge.l.b``, ``node.l.w``, ``node.l.b``."""

    def __init__(self, arrays, frozen=frozenset()):
        super().__init__(arrays, frozen)
        self.num_layers = sum(1 for k in self.values if k.startswith("edge.") and k.endswith(".w"))

    @classmethod
    def init(cls, in_dim: int, dim: int, num_layers: int, rng: np.random.Generator) -> "EncoderParams":
        arrays = {}
        prev = in_dim
        for layer in range(num_layers):
            arrays[f"edge.{layer}.w"] = glorot(rng, (prev, dim), prev, dim)
            arrays[f"edge.{layer}.b"] = np.zeros(dim)
            arrays[f"node.{layer}.w"] = glorot(rng, (dim, dim), dim, dim)
            arrays[f"node.{layer}.b"] = np.zeros(dim)
            prev = dim
        return cls(arrays)

    @property
    def out_dim(self) -> int | None:
        if self.num_layers == 0:
            return None
        return self.values[f"node.{self.num_layers - 1}.w"].shape[1]


def encode(
    h: Hypergraph,
    params: EncoderParams,
    activation: Activation = ad.leaky_relu,
    features: Value | None = None,
) -> tuple[Value, Value]:
    """Return node embeddings ``P`` (``|V| x d``) and hyperedge embeddings ``Q``.

    ``features`` overrides ``h.features`` (e.g. to differentiate w.r.t. X).
    With zero layers, ``P`` is the raw features and ``Q`` their per-edge mean.
    """
    to_edges, to_nodes = propagation_operators(h)
    act = activation if activation is not None else (lambda v: v)
    p = features if features is not None else Value(h.features)
    q = ad.spmm(to_edges, p)
    for layer in range(params.num_layers):
        w_e = params[f"edge.{layer}.w"]
        if w_e.shape[0] != p.shape[1]:
            raise ShapeError(f"layer {layer}: input width {p.shape[1]} but weight is {w_e.shape}")
        q = act(ad.spmm(to_edges, p) @ w_e + params[f"edge.{layer}.b"])
        p = act(ad.spmm(to_nodes, q) @ params[f"node.{layer}.w"] + params[f"node.{layer}.b"])
    return p, q
