"""All learnable parameters of the encoder, generator and discriminator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Value
from .config import TrainConfig
from .discriminator import DiscriminatorParams, score_candidates
from .encoder import EncoderParams, encode
from .generator import GeneratorParams, GeneratorShape
from .hypergraph import Hypergraph
from .rng import substream

GROUPS = ("encoder", "generator", "discriminator")


@dataclass
class ModelParameters:
    encoder: EncoderParams
    generator: GeneratorParams
    discriminator: DiscriminatorParams

    @classmethod
    def init(cls, config: TrainConfig, num_nodes: int, feature_dim: int) -> "ModelParameters":
        rng = substream(config.seed, "init")
        encoder = EncoderParams.init(feature_dim, config.d, config.layers, rng)
        emb_dim = config.d if config.layers > 0 else feature_dim
        shape = GeneratorShape(num_nodes, config.channels, emb_dim, config.noise_dim)
        generator = GeneratorParams.init(shape, rng)
        discriminator = DiscriminatorParams.init(emb_dim, rng)
        if not config.guided:
            generator.ablate_guidance()
        return cls(encoder, generator, discriminator)

    def group(self, name: str):
        return getattr(self, name)

    def state(self) -> dict[str, np.ndarray]:
        return {f"{g}.{k}": v for g in GROUPS for k, v in self.group(g).state().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for g in GROUPS:
            prefix = g + "."
            self.group(g).load_state({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})

    def all_values(self) -> dict[str, Value]:
        return {f"{g}.{k}": v for g in GROUPS for k, v in self.group(g).values.items()}

    def zero_grad(self) -> None:
        for g in GROUPS:
            self.group(g).zero_grad()

    def node_embeddings(self, h_train: Hypergraph) -> Value:
        P, _ = encode(h_train, self.encoder)
        return P

    def score(self, h_train: Hypergraph, candidates: Sequence[Iterable[int]], P: Value | None = None) -> np.ndarray:
        """Plain (unweighted) scores for arbitrary candidate node sets."""
        if not candidates:
            return np.zeros(0)
        P = P if P is not None else self.node_embeddings(h_train)
        scores, _ = score_candidates(candidates, P.detach(), self.discriminator)
        return scores.data.copy()
