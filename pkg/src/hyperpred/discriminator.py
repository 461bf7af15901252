"""Candidate scorer: max-min pooling of member embeddings and an MLP head."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import DomainError, ParameterError
from .params import ParameterSet, glorot

HIDDEN = (128, 8)


class DiscriminatorParams(ParameterSet):
    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "DiscriminatorParams":
        widths = (dim, *HIDDEN, 1)
        arrays = {}
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            arrays[f"fc{i}.w"] = glorot(rng, (a, b), a, b)
            arrays[f"fc{i}.b"] = np.zeros(b)
        return cls(arrays)


def aggregate_maxmin(node_embs, weights=None) -> Value:
    """Element-wise max minus min over the rows of ``(m, d)`` embeddings.

    ``weights`` (shape ``(m,)``, each in (0, 1]) scale rows before pooling.
    """
    node_embs = ad.as_value(node_embs)
    m = node_embs.shape[0]
    if m == 0:
        raise DomainError("cannot pool an empty candidate")
    if weights is not None:
        weights = ad.as_value(weights)
        if np.any(weights.data <= 0) or np.any(weights.data > 1):
            raise ParameterError("pooling weights must lie in (0, 1]")
        weights = ad.reshape(weights, (1, m))
    pooled = ad.pool_candidates(node_embs, [range(m)], weights)
    return ad.reshape(pooled, (node_embs.shape[1],))


def predict(q: Value, params: DiscriminatorParams) -> Value:
    """Probability that a pooled candidate ``(d,)`` or batch ``(B, d)`` is real."""
    q = ad.as_value(q)
    single = q.data.ndim == 1
    h = ad.reshape(q, (1, q.shape[0])) if single else q
    h = ad.leaky_relu(h @ params["fc0.w"] + params["fc0.b"])
    h = ad.leaky_relu(h @ params["fc1.w"] + params["fc1.b"])
    logit = h @ params["fc2.w"] + params["fc2.b"]
    y = ad.sigmoid(logit)
    return ad.reshape(y, ()) if single else ad.reshape(y, (y.shape[0],))


def _as_set(candidate: Iterable[int], num_nodes: int) -> tuple[int, ...]:
    nodes = tuple(sorted(set(int(v) for v in candidate)))
    if not nodes:
        raise DomainError("empty hyperedge candidate")
    if nodes[0] < 0 or nodes[-1] >= num_nodes:
        raise DomainError(f"candidate {nodes} has node ids outside [0, {num_nodes})")
    return nodes


def score_candidates(
    candidates: Sequence[Iterable[int]],
    P: Value,
    params: DiscriminatorParams,
    weights: Value | None = None,
    straight_through: bool = False,
) -> tuple[Value, Value]:
    """Score a batch of candidates; returns ``(scores (B,), pooled (B, d))``.

    ``weights`` is an optional ``(B, |V|)`` membership matrix whose row ``b``
    scales the embeddings of candidate ``b``'s members (see
    :func:`~hyperpred.autodiff.pool_candidates` for ``straight_through``).
    """
    sets = [_as_set(c, P.shape[0]) for c in candidates]
    pooled = ad.pool_candidates(P, sets, weights, straight_through)
    return predict(pooled, params), pooled


def score_candidate(e_prime: Iterable[int], P: Value, params: DiscriminatorParams, weights=None) -> Value:
    nodes = _as_set(e_prime, P.shape[0])
    embs = ad.gather_rows(P, list(nodes))
    if weights is not None:
        weights = ad.gather_rows(ad.as_value(weights), list(nodes))
    return predict(aggregate_maxmin(embs, weights), params)
