"""Ranking metrics and the three-regime (SNS/MNS/CNS) evaluation protocol."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .checkpoint import Checkpoint
from .errors import ParameterError, SamplingExhausted
from .hypergraph import CliqueExpansion, Edge, Hypergraph, SplitSet, clique_expand, read_edges, write_edges
from .model import ModelParameters
from .rng import substream
from .sampler import cns, mns, sns

logger = logging.getLogger(__name__)

REGIMES = ("sns", "mns", "cns")
PARTS = {"valid": 0, "test": 1}
CSV_COLUMNS = (
    "sns_auroc", "mns_auroc", "cns_auroc", "avg_auroc",
    "sns_ap", "mns_ap", "cns_ap", "avg_ap",
)  # fmt: skip


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _check_scores(pos, neg) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ParameterError("AUROC needs at least one positive and one negative score")
    return pos, neg


def auroc(pos_scores, neg_scores) -> float:
    """Mann-Whitney AUROC: P(positive outscores negative), ties count one half."""
    pos, neg = _check_scores(pos_scores, neg_scores)
    ranks = rankdata(np.concatenate([pos, neg]))  # average ranks on ties
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def average_precision(pos_scores, neg_scores) -> float:
    """Mean precision at the rank of each positive.

    Candidates are sorted by descending score with a stable sort over the
    input order ``positives + negatives``, so tied positives rank ahead of
    tied negatives.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0:
        raise ParameterError("average precision needs at least one positive")
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    ranked = labels[np.argsort(-scores, kind="stable")]
    return average_precision_ranked(ranked)


def average_precision_ranked(labels) -> float:
    """AP of an already ranked 0/1 label sequence."""
    labels = np.asarray(labels, dtype=np.float64)
    hits = np.cumsum(labels)
    ranks = np.arange(1, labels.size + 1)
    n_pos = labels.sum()
    if n_pos == 0:
        raise ParameterError("average precision needs at least one positive")
    return float((hits / ranks)[labels == 1].sum() / n_pos)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    regimes: dict[str, dict[str, float] | None]
    epoch: int = 0
    seed: int = 0
    counts: dict[str, int] = field(default_factory=dict)

    def _available(self) -> list[dict[str, float]]:
        return [m for m in (self.regimes.get(r) for r in REGIMES) if m is not None]

    @property
    def avg_auroc(self) -> float | None:
        avail = self._available()
        return float(np.mean([m["auroc"] for m in avail])) if avail else None

    @property
    def avg_ap(self) -> float | None:
        avail = self._available()
        return float(np.mean([m["ap"] for m in avail])) if avail else None

    def metrics(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for metric in ("auroc", "ap"):
            for r in REGIMES:
                m = self.regimes.get(r)
                out[f"{r}_{metric}"] = None if m is None else m[metric]
        out["avg_auroc"] = self.avg_auroc
        out["avg_ap"] = self.avg_ap
        return out

    def to_dict(self) -> dict:
        return {**self.metrics(), "epoch": self.epoch, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> str:
        values = self.metrics()
        return ",".join("" if values[c] is None else repr(values[c]) for c in CSV_COLUMNS)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)


def select_best(history: Sequence[tuple[int, EvalReport]]) -> int:
    """Epoch with the highest average validation AUROC (earliest on ties)."""
    if not history:
        raise ParameterError("empty validation history")
    best_epoch, best = history[0][0], -np.inf
    for epoch, report in history:
        value = report.avg_auroc if report.avg_auroc is not None else -np.inf
        if value > best:
            best_epoch, best = epoch, value
    return best_epoch


# ---------------------------------------------------------------------------
# negative sets and scoring
# ---------------------------------------------------------------------------


@dataclass
class EvalSets:
    positives: list[Edge]
    negatives: dict[str, list[Edge] | None]


def _regime_negatives(
    regime: str,
    h: Hypergraph,
    positives_idx: Sequence[int],
    rng: np.random.Generator,
    expansion: CliqueExpansion,
) -> list[Edge] | None:
    positives = [h.edges[i] for i in positives_idx]
    try:
        if regime == "sns":
            return [sns(h, len(e), rng, min_size=1) for e in positives]
        if regime == "mns":
            return [mns(h, len(e), rng, expansion, min_size=1) for e in positives]
        base = h.subgraph(positives_idx)
        return [cns(base, rng, expansion) for _ in positives]
    except SamplingExhausted as exc:
        logger.warning("%s negatives unavailable: %s", regime.upper(), exc)
        return None


def build_eval_sets(
    h: Hypergraph, positives_idx: Sequence[int], seed: int, part: str = "test", workers: int = 1
) -> EvalSets:
    """One negative per positive for each regime.

    SNS/MNS negatives copy the size of their paired positive; CNS corrupts
    positives of the same part.  Adjacency is judged on the clique
    expansion of all of ``h``.  A regime that cannot be sampled is ``None``.
    """
    if part not in PARTS:
        raise ParameterError(f"unknown split part {part!r}")
    expansion = clique_expand(h)

    def run(i_regime):
        i, regime = i_regime
        rng = substream(seed, "eval", PARTS[part], i)
        return regime, _regime_negatives(regime, h, positives_idx, rng, expansion)

    jobs = list(enumerate(REGIMES))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(run, jobs))
    else:
        results = dict(map(run, jobs))
    return EvalSets([h.edges[i] for i in positives_idx], {r: results[r] for r in REGIMES})


def write_eval_sets(directory: str | os.PathLike, part: str, sets: EvalSets) -> None:
    os.makedirs(directory, exist_ok=True)
    write_edges(os.path.join(directory, f"{part}_positives.txt"), sets.positives)
    for regime, negs in sets.negatives.items():
        if negs is not None:
            write_edges(os.path.join(directory, f"{part}_{regime}.txt"), negs)


def read_eval_sets(directory: str | os.PathLike, part: str) -> EvalSets:
    positives = [tuple(sorted(set(e))) for e in read_edges(os.path.join(directory, f"{part}_positives.txt"))]
    negatives = {}
    for regime in REGIMES:
        path = os.path.join(directory, f"{part}_{regime}.txt")
        negatives[regime] = [tuple(sorted(set(e))) for e in read_edges(path)] if os.path.exists(path) else None
    return EvalSets(positives, negatives)


def evaluate_model(
    model: ModelParameters, h_train: Hypergraph, sets: EvalSets, epoch: int = 0, seed: int = 0
) -> EvalReport:
    P = model.node_embeddings(h_train).detach()
    pos = model.score(h_train, sets.positives, P)
    regimes: dict[str, dict[str, float] | None] = {}
    counts = {"positives": len(sets.positives)}
    for regime in REGIMES:
        negs = sets.negatives.get(regime)
        if not negs:
            regimes[regime] = None
            continue
        neg = model.score(h_train, negs, P)
        regimes[regime] = {"auroc": auroc(pos, neg), "ap": average_precision(pos, neg)}
        counts[regime] = len(negs)
    return EvalReport(regimes, epoch=epoch, seed=seed, counts=counts)


def training_hypergraph(ckpt: Checkpoint, h: Hypergraph) -> Hypergraph:
    if ckpt.num_nodes != h.num_nodes or ckpt.feature_dim != h.features.shape[1]:
        raise ParameterError(
            f"checkpoint expects {ckpt.num_nodes} nodes x {ckpt.feature_dim} features, "
            f"data has {h.num_nodes} x {h.features.shape[1]}"
        )
    return Hypergraph(h.num_nodes, tuple(ckpt.train_edges), h.features)


def evaluate(
    ckpt: Checkpoint,
    h: Hypergraph,
    split: SplitSet,
    seed: int,
    part: str = "test",
    workers: int = 1,
    sets: EvalSets | None = None,
) -> EvalReport:
    """Score the split's positives against freshly sampled (or given) negatives."""
    h_train = training_hypergraph(ckpt, h)
    if sets is None:
        sets = build_eval_sets(h, split[part], seed, part, workers)
    return evaluate_model(ckpt.model(), h_train, sets, epoch=ckpt.epoch, seed=seed)
