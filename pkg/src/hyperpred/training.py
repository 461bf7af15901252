"""Adversarial training: critic-style losses, the similarity regulariser, Adam."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .checkpoint import Checkpoint
from .config import TrainConfig
from .discriminator import score_candidates
from .errors import NumericalError, ParameterError
from .evaluation import EvalReport, EvalSets, build_eval_sets, evaluate_model
from .generator import generate_batch
from .hypergraph import Edge, Hypergraph, SplitSet
from .model import ModelParameters
from .rng import substream
from .sampler import SizeDistribution

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "loss_d", "loss_g", "loss_reg", "mean_theta", "valid_avg_auroc")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _check_batch(*scores: Value) -> None:
    for s in scores:
        if s.data.size == 0:
            raise ParameterError("empty score batch")
    if len(scores) == 2 and scores[0].shape != scores[1].shape:
        raise ParameterError(f"batch size mismatch: {scores[0].shape} vs {scores[1].shape}")


def loss_discriminator(pos_scores: Value, neg_scores: Value) -> Value:
    """``-mean(pos) + mean(neg)``."""
    _check_batch(pos_scores, neg_scores)
    return ad.mean(neg_scores) - ad.mean(pos_scores)


def loss_generator(neg_scores: Value) -> Value:
    _check_batch(neg_scores)
    return -ad.mean(neg_scores)


def similarity_penalty(theta: Value, k: float, p: float) -> Value:
    """``(|theta - k| / (theta (1 - theta))) ** p``, elementwise.

    Zero at ``theta == k``, growing without bound towards 0 and 1.
    """
    ratio = ad.absolute(theta - k) / (theta * (1.0 - theta))
    return ad.power(ratio, p)


def loss_regularization(
    q_pos: Value, q_neg: Value, k: float, p: float, eps: float = 1e-4, sign: str = "positive"
) -> tuple[Value, Value]:
    """Mean similarity penalty over paired rows; returns ``(loss, clamped theta)``.

    ``sign="negative"`` negates the penalty.
    """
    if not 0.0 < k < 1.0:
        raise ParameterError(f"k must lie in (0, 1), got {k}")
    if eps <= 0:
        raise ParameterError("eps must be > 0")
    theta = ad.clamp(ad.cosine_similarity(q_pos, q_neg), eps, 1.0 - eps)
    loss = ad.mean(similarity_penalty(theta, k, p))
    return (-loss if sign == "negative" else loss), theta


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Value]) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class StepLosses:
    loss_d: float
    loss_g: float
    loss_reg: float
    mean_theta: float


def _finite_or_raise(where: str, **losses: float) -> None:
    if not all(np.isfinite(v) for v in losses.values()):
        detail = ", ".join(f"{k}={v!r}" for k, v in losses.items())
        raise NumericalError(f"non-finite loss at {where}: {detail}")


def train_step(
    model: ModelParameters,
    h_train: Hypergraph,
    batch: Sequence[Edge],
    config: TrainConfig,
    opt_d: Adam,
    opt_g: Adam,
    rng: np.random.Generator,
    sizes: SizeDistribution,
    where: str = "step",
) -> StepLosses:
    """One discriminator (+encoder) update followed by one generator update."""
    D = model.discriminator
    st = config.neg_weighting == "straight_through"
    negatives, c = generate_batch(batch, model.generator, rng, sizes)

    model.zero_grad()
    P = model.node_embeddings(h_train)
    pos, _ = score_candidates(batch, P, D)
    neg, _ = score_candidates(negatives, P, D, weights=c.detach(), straight_through=st)
    loss_d = loss_discriminator(pos, neg)
    _finite_or_raise(where, loss_d=loss_d.item())
    loss_d.backward()
    opt_d.step({**{f"encoder.{k}": v for k, v in model.encoder.trainable().items()},
                **{f"discriminator.{k}": v for k, v in D.trainable().items()}})  # fmt: skip

    # generator step against the updated critic; the encoder is held fixed
    model.zero_grad()
    P = model.node_embeddings(h_train).detach()
    _, q_pos = score_candidates(batch, P, D)
    neg, q_neg = score_candidates(negatives, P, D, weights=c, straight_through=st)
    loss_g = loss_generator(neg)
    loss_reg, theta = loss_regularization(
        q_pos.detach(), q_neg, config.k, config.p, config.reg_eps, config.reg_sign
    )
    total = loss_g + config.beta * loss_reg if config.beta else loss_g
    _finite_or_raise(where, loss_d=loss_d.item(), loss_g=loss_g.item(), loss_reg=loss_reg.item())
    total.backward()
    opt_g.step({f"generator.{k}": v for k, v in model.generator.trainable().items()})
    return StepLosses(loss_d.item(), loss_g.item(), loss_reg.item(), float(theta.data.mean()))


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    validation: list[tuple[int, EvalReport]] = field(default_factory=list)


def initial_checkpoint(h: Hypergraph, split: SplitSet, config: TrainConfig) -> Checkpoint:
    model = ModelParameters.init(config, h.num_nodes, h.features.shape[1])
    return Checkpoint(
        state=model.state(),
        config=config,
        num_nodes=h.num_nodes,
        feature_dim=h.features.shape[1],
        train_edges=[h.edges[i] for i in split.train],
        epoch=0,
        features=h.features,
    )


def train(
    h: Hypergraph,
    split: SplitSet,
    config: TrainConfig,
    valid_sets: EvalSets | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adversarial training; keeps the parameters with the best validation AUROC.

    The encoder sees only training hyperedges.  Validation runs every
    ``eval_every`` epochs and after the last epoch.
    """
    if not split.train:
        raise ParameterError("training split is empty")
    h_train = h.subgraph(split.train)
    sizes = SizeDistribution.from_hypergraph(h_train, config.min_size)
    model = ModelParameters.init(config, h.num_nodes, h.features.shape[1])
    if valid_sets is None and split.valid:
        valid_sets = build_eval_sets(h, split.valid, config.seed, "valid")

    opt_d = Adam(config.lr_d, config.adam_beta1, config.adam_beta2, config.adam_eps)
    opt_g = Adam(config.lr_g, config.adam_beta1, config.adam_beta2, config.adam_eps)
    noise_rng = substream(config.seed, "noise")
    shuffle_rng = substream(config.seed, "shuffle")
    train_edges = list(h_train.edges)

    best_state, best_epoch, best_score, best_report = model.state(), 0, -np.inf, None
    result = TrainResult(checkpoint=None)  # type: ignore[arg-type]
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_edges))
        steps = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_edges[i] for i in order[start : start + config.batch_size]]
            steps.append(
                train_step(model, h_train, batch, config, opt_d, opt_g, noise_rng, sizes,
                           where=f"epoch {epoch} batch {b}")  # fmt: skip
            )
        row = {
            "epoch": epoch,
            "loss_d": float(np.mean([s.loss_d for s in steps])),
            "loss_g": float(np.mean([s.loss_g for s in steps])),
            "loss_reg": float(np.mean([s.loss_reg for s in steps])),
            "mean_theta": float(np.mean([s.mean_theta for s in steps])),
            "valid_avg_auroc": None,
        }
        if valid_sets is not None and (epoch % config.eval_every == 0 or epoch == config.epochs):
            report = evaluate_model(model, h_train, valid_sets, epoch=epoch, seed=config.seed)
            result.validation.append((epoch, report))
            row["valid_avg_auroc"] = report.avg_auroc
            score = report.avg_auroc if report.avg_auroc is not None else -np.inf
            if score > best_score:
                best_state, best_epoch, best_score, best_report = model.state(), epoch, score, report
        elif valid_sets is None and epoch == config.epochs:
            best_state, best_epoch = model.state(), epoch
        result.history.append(row)
        logger.debug("epoch %d: %s", epoch, row)
        if on_epoch is not None:
            on_epoch(row)

    result.checkpoint = Checkpoint(
        state=best_state,
        config=config,
        num_nodes=h.num_nodes,
        feature_dim=h.features.shape[1],
        train_edges=train_edges,
        epoch=best_epoch,
        rng_state=noise_rng.bit_generator.state,
        best_valid=best_report.to_dict() if best_report is not None else None,
        features=h.features,
    )
    return result


def history_csv(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history:
        writer.writerow(["" if row[c] is None else repr(row[c]) for c in HISTORY_COLUMNS])
    return buf.getvalue()


def write_history(path: str | os.PathLike, history: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(history_csv(history))
