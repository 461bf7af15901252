"""Self-describing ``.npz`` checkpoints.

Arrays are stored under ``param/<group>.<name>`` (node features, when
kept, under ``data/features``); everything else lives in a JSON string
under ``meta``.  float64 arrays round-trip bit for bit.
"""

from __future__ import annotations

import json
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .errors import HyperpredError, StateError, VersionError
from .hypergraph import Edge, Hypergraph
from .model import ModelParameters

FORMAT = "hyperpred-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    state: dict[str, np.ndarray]
    config: TrainConfig
    num_nodes: int
    feature_dim: int
    train_edges: list[Edge]
    epoch: int = 0
    rng_state: dict | None = None
    best_valid: dict | None = None
    extra: dict = field(default_factory=dict)
    features: np.ndarray | None = None

    def training_hypergraph(self) -> Hypergraph:
        """The hypergraph the encoder saw during training (needs stored features)."""
        if self.features is None:
            raise StateError("checkpoint carries no node features")
        return Hypergraph(self.num_nodes, tuple(self.train_edges), self.features)

    def model(self) -> ModelParameters:
        params = ModelParameters.init(self.config, self.num_nodes, self.feature_dim)
        try:
            params.load_state(self.state)
        except (KeyError, ValueError) as exc:
            raise VersionError(f"checkpoint parameters do not match its config: {exc}") from None
        return params


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "num_nodes": ckpt.num_nodes,
        "feature_dim": ckpt.feature_dim,
        "train_edges": [list(e) for e in ckpt.train_edges],
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "best_valid": ckpt.best_valid,
        "extra": ckpt.extra,
    }
    arrays = {f"param/{k}": v for k, v in ckpt.state.items()}
    if ckpt.features is not None:
        arrays["data/features"] = np.asarray(ckpt.features, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Read a checkpoint; any structural problem raises :class:`VersionError`."""
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            state = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
            features = data["data/features"].copy() if "data/features" in data.files else None
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, EOFError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise VersionError(f"{path}: unreadable checkpoint ({exc})") from None
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise VersionError(
            f"{path}: expected {FORMAT} v{VERSION}, found {meta.get('format')} v{meta.get('version')}"
        )
    try:
        config = TrainConfig(**meta["config"])
        ckpt = Checkpoint(
            state=state,
            config=config,
            num_nodes=int(meta["num_nodes"]),
            feature_dim=int(meta["feature_dim"]),
            train_edges=[tuple(e) for e in meta["train_edges"]],
            epoch=int(meta["epoch"]),
            rng_state=meta.get("rng_state"),
            best_valid=meta.get("best_valid"),
            extra=meta.get("extra") or {},
            features=features,
        )
    except (KeyError, TypeError, HyperpredError) as exc:
        raise VersionError(f"{path}: malformed checkpoint metadata ({exc})") from None
    ckpt.model()  # shape validation
    return ckpt
