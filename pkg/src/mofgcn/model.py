"""The full network: one pair convolution followed by sum or attention pooling."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .conv import EDGE_ONCE, ConvLayer, RadialBasis, encode_nodes, pair_message
from .graph import AtomGraph, AtomTypeVocab
from .pool import AttentionReadout, attention_pool, sum_pool

SUM = "sum"
ATTENTION = "attention"


class ModeError(ValueError):
    """Operation needs a different model configuration."""


@dataclass
class ModelConfig:
    """Architecture of a model.

    ``pooling="sum"`` with ``conv_out_dim=1`` is the decomposition setup in
    which the prediction is exactly a sum of learned pair functions.
    """

    vocab: list[str]
    pooling: str = SUM
    accumulation: str = EDGE_ONCE
    conv_hidden: list[int] = field(default_factory=lambda: [64, 64])
    conv_out_dim: int | None = None
    activation: str = "tanh"
    readout_hidden: list[int] = field(default_factory=lambda: [32])
    rbf: dict | None = None

    def __post_init__(self):
        if self.pooling not in (SUM, ATTENTION):
            raise ValueError(f"pooling must be {SUM!r} or {ATTENTION!r}, got {self.pooling!r}")
        if self.conv_out_dim is None:
            self.conv_out_dim = 1 if self.pooling == SUM else 16
        self.vocab = list(self.vocab)
        self.conv_hidden = list(self.conv_hidden)
        self.readout_hidden = list(self.readout_hidden)
        if self.pooling == SUM and self.conv_out_dim != 1:
            raise ValueError("sum pooling needs conv_out_dim = 1")

    @property
    def decomposition(self) -> bool:
        return self.pooling == SUM and self.conv_out_dim == 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GraphBatch:
    """Several graphs concatenated into one disjoint graph."""

    feats: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    distance: np.ndarray
    graph_ids: np.ndarray
    num_graphs: int

    @classmethod
    def collate(cls, graphs: Sequence[AtomGraph], vocab: AtomTypeVocab) -> "GraphBatch":
        feats, src, dst, dist, gid = [], [], [], [], []
        offset = 0
        for k, g in enumerate(graphs):
            feats.append(encode_nodes(g, vocab))
            src.append(g.src + offset)
            dst.append(g.dst + offset)
            dist.append(g.distance)
            gid.append(np.full(g.num_nodes, k, dtype=np.intp))
            offset += g.num_nodes
        width = len(vocab)
        return cls(
            np.concatenate(feats) if feats else np.zeros((0, width)),
            np.concatenate(src).astype(np.intp) if src else np.zeros(0, np.intp),
            np.concatenate(dst).astype(np.intp) if dst else np.zeros(0, np.intp),
            np.concatenate(dist) if dist else np.zeros(0),
            np.concatenate(gid) if gid else np.zeros(0, np.intp),
            len(graphs),
        )

    @property
    def num_nodes(self) -> int:
        return len(self.feats)


class MofGCN:
    """Parameters plus forward pass; targets are modelled as ``shift + scale * output``."""

    def __init__(self, config: ModelConfig, params: nn.ParamStore | None = None, seed: int = 0,
                 target_shift: float = 0.0, target_scale: float = 1.0):
        self.config = config
        self.vocab = AtomTypeVocab(config.vocab)
        rbf = RadialBasis(**config.rbf) if config.rbf else None
        self.conv = ConvLayer(
            len(self.vocab), config.conv_out_dim, tuple(config.conv_hidden), config.activation,
            config.accumulation, rbf,
        )
        self.readout = (
            AttentionReadout(config.conv_out_dim, tuple(config.readout_hidden), config.activation)
            if config.pooling == ATTENTION else None
        )
        if params is None:
            rng = np.random.default_rng(seed)
            params = nn.ParamStore()
            self.conv.init(params, rng)
            if self.readout is not None:
                self.readout.init(params, rng)
        self.params = params
        self.target_shift = float(target_shift)
        self.target_scale = float(target_scale)

    def node_features(self, batch: GraphBatch) -> nn.Tensor:
        return self.conv.forward(self.params, batch.feats, batch.src, batch.dst, batch.distance, batch.num_nodes)

    def forward(self, batch: GraphBatch) -> nn.Tensor:
        """Pooled network output per graph, shape ``(num_graphs, 1)``, in normalized units."""
        x = self.node_features(batch)
        if self.config.pooling == SUM:
            return sum_pool(x, batch.graph_ids, batch.num_graphs)
        return attention_pool(self.readout, self.params, x, batch.graph_ids, batch.num_graphs)

    def pooled(self, graphs: Sequence[AtomGraph]) -> np.ndarray:
        return self.forward(GraphBatch.collate(graphs, self.vocab)).data[:, 0]

    def predict(self, graphs: Sequence[AtomGraph]) -> np.ndarray:
        """Predictions in target units."""
        return self.target_shift + self.target_scale * self.pooled(graphs)

    def pair_message(self, type_a, type_b, r) -> np.ndarray:
        return pair_message(self.conv, self.params, self.vocab, type_a, type_b, r)

    def pair_energy(self, type_a, type_b, r) -> np.ndarray:
        """Learned pair contribution in target units (decomposition models only)."""
        if not self.config.decomposition:
            raise ModeError(
                "pair functions can only be read from a decomposition model "
                "(sum pooling with scalar convolution output)"
            )
        copies = 1.0 if self.config.accumulation == EDGE_ONCE else 2.0
        return copies * self.target_scale * self.pair_message(type_a, type_b, r)[:, 0]

    # -------------------------------------------------------------- persistence

    def meta(self) -> dict:
        return {
            "model": self.config.to_dict(),
            "target_shift": self.target_shift,
            "target_scale": self.target_scale,
        }

    def save(self, path, **extra) -> None:
        nn.save_checkpoint(path, self.params, {**self.meta(), **extra})

    @classmethod
    def load(cls, path) -> "MofGCN":
        params, meta = nn.load_checkpoint(path)
        return cls.from_state(params, meta)

    @classmethod
    def from_state(cls, params: nn.ParamStore, meta: dict) -> "MofGCN":
        return cls(ModelConfig(**meta["model"]), params, target_shift=meta["target_shift"],
                   target_scale=meta["target_scale"])
