"""Positive-guided negative hyperedge generator.

A convolutional encoder turns the membership indicator of a positive
hyperedge into a latent vector.  The decoder mixes that latent with Gaussian
noise, runs three conv layers whose AdaIN styles are affine functions of the
latent, and emits one inclusion probability per node.  The ``n`` most likely
nodes form the generated negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import DomainError, ParameterError
from .params import ParameterSet, glorot
from .sampler import SizeDistribution, sample_size

NUM_CONV = 3
POOL = 2
UPSAMPLE = 2
ADAIN_EPS = 1e-5
# softplus(_SCALE_OFFSET) == 1, so a fresh decoder starts with unit AdaIN scale
_SCALE_OFFSET = float(np.log(np.expm1(1.0)))

# parameters that carry the positive's latent into the decoder
GUIDANCE_PARAMS = tuple(
    [f"style.{i}.{part}" for i in range(NUM_CONV) for part in ("scale_w", "shift_w")] + ["dec.in_q"]
)


@dataclass(frozen=True)
class GeneratorShape:
    num_nodes: int
    channels: int
    latent_dim: int
    noise_dim: int

    @property
    def base_length(self) -> int:
        return -(-self.num_nodes // 4)

    @property
    def decoded_length(self) -> int:
        return self.base_length * UPSAMPLE ** (NUM_CONV - 1)


class GeneratorParams(ParameterSet):
    def __init__(self, arrays, shape: GeneratorShape, frozen=frozenset()):
        super().__init__(arrays, frozen)
        self.shape = shape

    @classmethod
    def init(cls, shape: GeneratorShape, rng: np.random.Generator) -> "GeneratorParams":
        c, dz = shape.channels, shape.latent_dim
        a: dict[str, np.ndarray] = {}
        c_in = 1
        for i in range(NUM_CONV):
            a[f"enc.conv{i}.w"] = glorot(rng, (c, c_in, 3), c_in * 3, c * 3)
            a[f"enc.conv{i}.b"] = np.zeros(c)
            c_in = c
        a["enc.proj.w"] = glorot(rng, (c, dz), c, dz)
        a["enc.proj.b"] = np.zeros(dz)

        width = c * shape.base_length
        fan_in = dz + shape.noise_dim
        a["dec.in_q"] = glorot(rng, (dz, width), fan_in, width)
        a["dec.in_z"] = glorot(rng, (shape.noise_dim, width), fan_in, width)
        a["dec.in_b"] = np.zeros(width)
        for i in range(NUM_CONV):
            a[f"dec.conv{i}.w"] = glorot(rng, (c, c, 3), c * 3, c * 3)
            a[f"dec.conv{i}.b"] = np.zeros(c)
            a[f"style.{i}.scale_w"] = glorot(rng, (dz, c), dz, c)
            a[f"style.{i}.scale_b"] = np.full(c, _SCALE_OFFSET)
            a[f"style.{i}.shift_w"] = glorot(rng, (dz, c), dz, c)
            a[f"style.{i}.shift_b"] = np.zeros(c)
        a["dec.channel.w"] = glorot(rng, (c, 1), c, 1)
        length = shape.decoded_length
        a["dec.out.w"] = glorot(rng, (length, shape.num_nodes), length, shape.num_nodes)
        a["dec.out.b"] = np.zeros(shape.num_nodes)
        return cls(a, shape)

    def ablate_guidance(self) -> None:
        """Zero and freeze every weight through which the latent reaches the decoder.

        Afterwards the membership vector no longer depends on the positive
        hyperedge, only on the noise.
        """
        for name in GUIDANCE_PARAMS:
            self.values[name].data[...] = 0.0
        self.frozen = self.frozen | frozenset(GUIDANCE_PARAMS)


def membership_indicator(edges: Sequence[Sequence[int]], num_nodes: int) -> np.ndarray:
    out = np.zeros((len(edges), num_nodes))
    for b, e in enumerate(edges):
        out[b, list(e)] = 1.0
    return out


def encode_positive(e_plus, params: GeneratorParams) -> Value:
    """Latent code of one indicator vector ``(|V|,)`` or a batch ``(B, |V|)``."""
    x = np.asarray(e_plus, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.shape[1] != params.shape.num_nodes:
        raise ParameterError(f"indicator length {xb.shape[1]} != {params.shape.num_nodes} nodes")
    if np.any(xb.sum(axis=1) == 0):
        raise DomainError("positive hyperedge indicator is all zeros")
    if np.any((xb != 0) & (xb != 1)):
        raise DomainError("positive hyperedge indicator must be 0/1")

    h = Value(xb[:, None, :])
    for i in range(NUM_CONV):
        h = ad.conv1d(h, params[f"enc.conv{i}.w"], params[f"enc.conv{i}.b"])
        h = ad.leaky_relu(ad.avgpool1d(h, POOL))
    pooled = ad.mean(h, axis=-1)
    q = pooled @ params["enc.proj.w"] + params["enc.proj.b"]
    return ad.reshape(q, (q.shape[1],)) if single else q


def decode_membership(q: Value, z, params: GeneratorParams) -> Value:
    """Node inclusion probabilities ``c`` in (0, 1), shape ``(|V|,)`` or ``(B, |V|)``."""
    shape = params.shape
    single = q.data.ndim == 1
    if single:
        q = ad.reshape(q, (1, q.shape[0]))
    z = np.asarray(z, dtype=np.float64).reshape(q.shape[0], shape.noise_dim)
    batch = q.shape[0]

    h = q @ params["dec.in_q"] + Value(z) @ params["dec.in_z"] + params["dec.in_b"]
    h = ad.reshape(h, (batch, shape.channels, shape.base_length))
    for i in range(NUM_CONV):
        h = ad.conv1d(h, params[f"dec.conv{i}.w"], params[f"dec.conv{i}.b"])
        scale = ad.softplus(q @ params[f"style.{i}.scale_w"] + params[f"style.{i}.scale_b"])
        shift = q @ params[f"style.{i}.shift_w"] + params[f"style.{i}.shift_b"]
        h = ad.leaky_relu(ad.adain(h, scale, shift, ADAIN_EPS))
        if i < NUM_CONV - 1:
            h = ad.upsample1d(h, UPSAMPLE)
    length = shape.decoded_length
    flat = ad.reshape(ad.transpose(h, (0, 2, 1)), (batch * length, shape.channels))
    signal = ad.reshape(flat @ params["dec.channel.w"], (batch, length))
    c = ad.sigmoid(signal @ params["dec.out.w"] + params["dec.out.b"])
    return ad.reshape(c, (shape.num_nodes,)) if single else c


def select_topn(c, n: int, min_size: int = 2) -> tuple[int, ...]:
    """Indices of the ``n`` largest entries; ties go to the lower index."""
    values = np.asarray(c.data if isinstance(c, Value) else c, dtype=np.float64)
    if n < min_size or n > values.shape[0]:
        raise ParameterError(f"cannot select {n} of {values.shape[0]} nodes (floor {min_size})")
    order = np.argsort(-values, kind="stable")
    return tuple(sorted(int(i) for i in order[:n]))


def generate_batch(
    positives: Sequence[Sequence[int]],
    params: GeneratorParams,
    rng: np.random.Generator,
    sizes: SizeDistribution,
) -> tuple[list[tuple[int, ...]], Value]:
    """Generate one negative per positive.

    Returns the discrete node sets and the differentiable ``(B, |V|)``
    membership matrix they were selected from.  Sizes are drawn first, then
    the noise, both from ``rng``.
    """
    ns = [sample_size(sizes, rng) for _ in positives]
    z = rng.standard_normal((len(positives), params.shape.noise_dim))
    q = encode_positive(membership_indicator(positives, params.shape.num_nodes), params)
    c = decode_membership(q, z, params)
    negatives = [select_topn(c.data[b], n, min_size=1) for b, n in enumerate(ns)]
    return negatives, c


def generate(e_plus: Sequence[int], params: GeneratorParams, rng: np.random.Generator, sizes: SizeDistribution):
    """Single-positive form of :func:`generate_batch`: ``(e_minus, c)``."""
    negatives, c = generate_batch([e_plus], params, rng, sizes)
    return negatives[0], ad.reshape(c, (params.shape.num_nodes,))
