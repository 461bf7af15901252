"""Finite-difference checks for every tape op and the composed training loss."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Value
from .config import TrainConfig
from .discriminator import score_candidates
from .encoder import encode
from .generator import decode_membership, encode_positive, membership_indicator, select_topn
from .hypergraph import Hypergraph
from .model import ModelParameters
from .training import loss_discriminator, loss_generator, loss_regularization

TOLERANCE = 1e-4
POINTS = 10

# a case builds (f, params) at one random point; f rebuilds the tape each call
Case = Callable[[np.random.Generator], tuple[Callable[[], Value], list[Value]]]


def _param(rng, shape, lo=-1.0, hi=1.0, away=0.0):
    x = rng.uniform(lo, hi, size=shape)
    if away:
        # push magnitudes out of (-away, away) so kinks stay clear of +-h
        x = np.where(np.abs(x) < away, np.sign(x + 1e-300) * (away + np.abs(x)), x)
    return Value(x, requires_grad=True)


def _projected(out_fn, rng):
    """Reduce an op output to a scalar with a fixed random projection."""
    cache = {}

    def f():
        out = out_fn()
        if "r" not in cache:
            cache["r"] = rng.normal(size=out.shape)
        return ad.sum(out * cache["r"])

    return f


def _unary(op, lo=-2.0, hi=2.0, away=0.0, shape=(3, 4)):
    def case(rng):
        x = _param(rng, shape, lo, hi, away)
        return _projected(lambda: op(x), rng), [x]

    return case


def _binary(op, b_lo=-2.0, b_hi=2.0, away=0.0):
    def case(rng):
        a = _param(rng, (3, 4))
        b = _param(rng, (3, 4), b_lo, b_hi, away)
        return _projected(lambda: op(a, b), rng), [a, b]

    return case


def _broadcast_add(rng):
    a = _param(rng, (3, 4))
    b = _param(rng, (4,))
    return _projected(lambda: a + b, rng), [a, b]


def _clamp(rng):
    # keep every entry at least 0.05 from the bounds
    x = rng.uniform(-2.0, 2.0, size=(3, 4))
    for bound in (-0.5, 0.5):
        near = np.abs(x - bound) < 0.05
        x[near] = bound + np.where(x[near] >= bound, 0.1, -0.1)
    v = Value(x, requires_grad=True)
    return _projected(lambda: ad.clamp(v, -0.5, 0.5), rng), [v]


def _reduce(op, axis):
    def case(rng):
        x = _param(rng, (3, 4))
        return _projected(lambda: ad.reshape(op(x, axis=axis), (-1,)), rng), [x]

    return case


def _concat(rng):
    a, b = _param(rng, (3, 2)), _param(rng, (3, 4))
    return _projected(lambda: ad.concat([a, b], axis=1), rng), [a, b]


def _gather(rng):
    x = _param(rng, (5, 3))
    idx = [0, 3, 3, 1]
    return _projected(lambda: ad.gather_rows(x, idx), rng), [x]


def _matmul(rng):
    a, b = _param(rng, (3, 4)), _param(rng, (4, 2))
    return _projected(lambda: a @ b, rng), [a, b]


def _spmm(rng):
    m = sp.random(4, 5, density=0.5, random_state=int(rng.integers(1 << 31)), format="csr")
    b = _param(rng, (5, 3))
    return _projected(lambda: ad.spmm(m, b), rng), [b]


def _conv1d(rng):
    x = _param(rng, (2, 2, 5))
    w = _param(rng, (3, 2, 3))
    bias = _param(rng, (3,))
    return _projected(lambda: ad.conv1d(x, w, bias), rng), [x, w, bias]


def _avgpool(rng):
    x = _param(rng, (2, 3, 5))
    return _projected(lambda: ad.avgpool1d(x, 2), rng), [x]


def _upsample(rng):
    x = _param(rng, (2, 3, 4))
    return _projected(lambda: ad.upsample1d(x, 2), rng), [x]


def _adain(rng):
    x = _param(rng, (2, 3, 6))
    scale = _param(rng, (2, 3), 0.5, 2.0)
    shift = _param(rng, (2, 3))
    return _projected(lambda: ad.adain(x, scale, shift), rng), [x, scale, shift]


def _cosine(rng):
    a, b = _param(rng, (4, 5)), _param(rng, (4, 5))
    return _projected(lambda: ad.cosine_similarity(a, b), rng), [a, b]


def _pool(rng):
    nodes = _param(rng, (6, 4))
    weights = _param(rng, (3, 6), 0.2, 1.0)
    cands = [(0, 2, 5), (1, 3), (2, 3, 4, 5)]
    return _projected(lambda: ad.pool_candidates(nodes, cands, weights), rng), [nodes, weights]


OP_CASES: dict[str, Case] = {
    "add": _binary(ad.add),
    "add_broadcast": _broadcast_add,
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "div": _binary(ad.div, 0.5, 2.0),
    "neg": _unary(ad.neg),
    "power": _unary(lambda x: ad.power(x, 2.5), 0.2, 2.0),
    "absolute": _unary(ad.absolute, away=0.1),
    "clamp": _clamp,
    "sum": _reduce(ad.sum, 0),
    "mean": _reduce(ad.mean, 1),
    "reshape": _unary(lambda x: ad.reshape(x, (4, 3))),
    "transpose": _unary(ad.transpose),
    "concat": _concat,
    "gather_rows": _gather,
    "matmul": _matmul,
    "spmm": _spmm,
    "leaky_relu": _unary(ad.leaky_relu, away=0.1),
    "sigmoid": _unary(ad.sigmoid, -6.0, 6.0),
    "softplus": _unary(ad.softplus, -6.0, 6.0),
    "conv1d": _conv1d,
    "avgpool1d": _avgpool,
    "upsample1d": _upsample,
    "adain": _adain,
    "cosine_similarity": _cosine,
    "pool_candidates": _pool,
}


# ---------------------------------------------------------------------------
# composed checks on a 6-node toy hypergraph
# ---------------------------------------------------------------------------

TOY_EDGES = ((0, 1, 2), (2, 3), (3, 4, 5), (0, 5))
TOY_FEATURES = 6
TOY_CONFIG = TrainConfig(d=6, layers=2, channels=4, noise_dim=3, beta=0.5, k=0.5, p=2.0,
                         neg_weighting="scaled")  # fmt: skip
# the penalty has poles at theta = 0 and 1; the full-loss point is redrawn
# until every theta sits well inside (0, 1) so rounding stays negligible
THETA_RANGE = (0.05, 0.95)


def toy_hypergraph(rng: np.random.Generator) -> Hypergraph:
    return Hypergraph(6, TOY_EDGES, rng.normal(size=(6, TOY_FEATURES)))


def _toy_model(rng, **overrides):
    h = toy_hypergraph(rng)
    config = TOY_CONFIG.replace(seed=int(rng.integers(1 << 31)), **overrides)
    model = ModelParameters.init(config, h.num_nodes, h.features.shape[1])
    for v in model.all_values().values():
        v.data[...] = v.data + rng.normal(0.0, 0.1, size=v.shape)  # break zero biases
    return h, config, model


def _encoder_case(rng):
    h, _, model = _toy_model(rng)
    params = list(model.encoder.values.values())
    f = _projected(lambda: ad.concat(list(encode(h, model.encoder)), axis=0), rng)
    return f, params


def _generator_case(rng):
    _, config, model = _toy_model(rng)
    g = model.generator
    x = membership_indicator(TOY_EDGES[:2], 6)
    z = rng.normal(size=(2, config.noise_dim))
    f = _projected(lambda: decode_membership(encode_positive(x, g), z, g), rng)
    return f, list(g.trainable().values())


def _discriminator_case(rng):
    _, config, model = _toy_model(rng)
    P = _param(rng, (6, config.d))
    cands = [(0, 1, 2), (1, 4), (2, 3, 5)]
    f = _projected(lambda: score_candidates(cands, P, model.discriminator)[0], rng)
    return f, [P, *model.discriminator.values.values()]


def full_loss(h: Hypergraph, model: ModelParameters, config: TrainConfig, batch, z):
    """``L_D + L_G + beta * L_reg`` as one differentiable function, nothing detached.

    The negative node sets are fixed from the starting point so that the
    discrete top-n choice does not jump under finite differencing.  Returns
    ``(f, theta)`` with theta the pair similarities at the starting point.
    """
    g = model.generator
    x = membership_indicator(batch, h.num_nodes)
    c0 = decode_membership(encode_positive(x, g), z, g).data
    negatives = [select_topn(c0[b], len(e), min_size=1) for b, e in enumerate(batch)]
    theta = []

    def f() -> Value:
        P = model.node_embeddings(h)
        c = decode_membership(encode_positive(x, g), z, g)
        pos, q_pos = score_candidates(batch, P, model.discriminator)
        neg, q_neg = score_candidates(negatives, P, model.discriminator, weights=c)
        reg, th = loss_regularization(q_pos, q_neg, config.k, config.p, config.reg_eps, config.reg_sign)
        theta[:] = th.data
        return loss_discriminator(pos, neg) + loss_generator(neg) + config.beta * reg

    f()
    return f, np.array(theta)


def _full_case(rng, max_draws: int = 1000):
    lo, hi = THETA_RANGE
    for _ in range(max_draws):
        # one propagation layer keeps pooled embeddings from collapsing onto a
        # single direction on a graph this small
        h, config, model = _toy_model(rng, layers=1)
        z = rng.normal(size=(len(TOY_EDGES), config.noise_dim))
        f, theta = full_loss(h, model, config, list(TOY_EDGES), z)
        if np.all((theta > lo) & (theta < hi)):
            return f, list(model.all_values().values())
    raise RuntimeError("could not draw a well-conditioned toy point")


MODULE_CASES: dict[str, Case] = {
    "encoder": _encoder_case,
    "generator": _generator_case,
    "discriminator": _discriminator_case,
    "full_loss": _full_case,
}
# entries sampled per parameter for the large composed cases
MODULE_MAX_ENTRIES = 12
# composed losses pass through many max-min and leaky kinks whose near-ties
# are common on a 6-node graph, and AdaIN over a length-2 signal is steep
# when both entries nearly coincide; a small step keeps differences local
MODULE_STEP = 1e-7


@dataclass
class CheckResult:
    name: str
    max_error: float
    points: int
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error < TOLERANCE)


def check_case(
    name: str, case: Case, points: int, seed: int, max_entries: int | None = None, h: float = 1e-5
) -> CheckResult:
    rng = np.random.default_rng([seed, points, len(name)] + [ord(ch) for ch in name])
    start = time.perf_counter()
    worst = 0.0
    for _ in range(points):
        f, params = case(rng)
        worst = max(worst, ad.gradient_check(f, params, h=h, max_entries=max_entries, rng=rng))
    return CheckResult(name, worst, points, time.perf_counter() - start)


def available_checks() -> list[str]:
    return [*OP_CASES, *MODULE_CASES]


def run_gradcheck(names: Iterable[str] | None = None, points: int = POINTS, seed: int = 0) -> list[CheckResult]:
    """Run the named checks (all by default) at ``points`` random points each."""
    selected = available_checks() if names is None else list(names)
    unknown = [n for n in selected if n not in OP_CASES and n not in MODULE_CASES]
    if unknown:
        raise KeyError(f"unknown gradcheck target(s): {', '.join(unknown)}")
    results = []
    for name in selected:
        if name in OP_CASES:
            results.append(check_case(name, OP_CASES[name], points, seed))
        else:
            # composed cases are costlier; a few points with sampled entries suffice
            results.append(
                check_case(name, MODULE_CASES[name], max(1, points // 5), seed, MODULE_MAX_ENTRIES, MODULE_STEP)
            )
    return results
